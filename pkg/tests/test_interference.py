import math

import numpy as np
import pytest

from relayqkd import fock
from relayqkd.interference import (
    CoincidenceCounts,
    InterferenceDecomposition,
    VisibilityModel,
    error_from_visibility,
    g2_of_distribution,
    non_interfering_fraction,
    optimal_intensity_ratio,
    predicted_distinguishable_coincidence,
    raw_visibility,
    visibility_from_counts,
    visibility_from_fractions,
)
from relayqkd.source import UndefinedStatisticError


def model(**kw):
    base = dict(v_corrected=0.95, g2=0.0015, sigma_a=2 * math.pi * 5e9,
                t_g=200e-12, t_p=5e-9, ratio_qd_over_laser=10.0)
    base.update(kw)
    return VisibilityModel(**base)


# --- g2_of_distribution ------------------------------------------------------

def test_g2_poissonian_is_one():
    p1 = 0.03
    assert g2_of_distribution(1 - p1 - p1**2 / 2, p1, p1**2 / 2) == pytest.approx(1.0)


def test_g2_perfect_single_photon():
    assert g2_of_distribution(0.9, 0.1, 0.0) == 0.0


def test_g2_inverse_check_main_value():
    p1 = 0.1
    p2 = 0.0015 * p1**2 / 2
    assert g2_of_distribution(1 - p1 - p2, p1, p2) == pytest.approx(0.0015)


def test_g2_rejects_zero_p1():
    with pytest.raises(UndefinedStatisticError):
        g2_of_distribution(1.0, 0.0, 0.0)


# --- raw_visibility ----------------------------------------------------------

def test_raw_visibility_ratio_one_tenth():
    m = model(g2=0.0, ratio_qd_over_laser=10.0)
    assert raw_visibility(m) == pytest.approx(0.95 / 1.05, abs=1e-6)


def test_raw_visibility_matched_intensities():
    m = model(g2=0.0, ratio_qd_over_laser=1.0)
    assert raw_visibility(m) == pytest.approx(0.95 / 1.5, abs=1e-6)


def test_raw_visibility_vanishes_at_extreme_ratio():
    # multiphoton term dominates when the laser is far weaker than the dot
    m = model(g2=0.01, ratio_qd_over_laser=1e9)
    assert raw_visibility(m) < 1e-3


def test_raw_visibility_decreasing_in_g2():
    vals = [raw_visibility(model(g2=g)) for g in (0.0, 0.001, 0.005, 0.02)]
    assert vals == sorted(vals, reverse=True)
    assert vals[-1] < vals[0]


def test_raw_visibility_interior_maximum():
    m = model(g2=0.002)
    r_star = optimal_intensity_ratio(m)
    v_star = raw_visibility(model(g2=0.002, ratio_qd_over_laser=r_star))
    for factor in (0.25, 0.5, 2.0, 4.0):
        assert raw_visibility(model(g2=0.002, ratio_qd_over_laser=r_star * factor)) < v_star
    # numerical first-order stationarity
    eps = 1e-6 * r_star
    v_plus = raw_visibility(model(g2=0.002, ratio_qd_over_laser=r_star + eps))
    v_minus = raw_visibility(model(g2=0.002, ratio_qd_over_laser=r_star - eps))
    assert abs(v_plus - v_minus) / (2 * eps) < 1e-9


def test_raw_visibility_bounded_by_corrected():
    for g in (0.0, 0.001, 0.01):
        for r in (0.1, 1.0, 10.0, 100.0):
            v = raw_visibility(model(g2=g, ratio_qd_over_laser=r))
            assert 0.0 <= v <= 0.95


# --- non_interfering_fraction -----------------------------------------------

def test_pn_clamped_at_perfect_visibility():
    p_n, clamped = non_interfering_fraction(v=1.0, p0=0.999999, alpha2=0.001)
    assert p_n == 0.0
    assert clamped


def test_pn_zero_visibility_direct_substitution():
    # at V=0 the quartic terms cancel and p_N reduces to 1 - p0 exactly
    p0 = 1 - 1e-6
    p_n, clamped = non_interfering_fraction(v=0.0, p0=p0, alpha2=0.01)
    assert not clamped
    assert p_n == pytest.approx(1 - p0, rel=1e-9)


def test_pn_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p0 = rng.uniform(0.9, 0.99999)
        p_n_true = rng.uniform(0.0, (1 - p0) * 0.9)
        alpha2 = rng.uniform(1e-4, 0.05)
        v = visibility_from_fractions(p0, p_n_true, alpha2)
        p_n, clamped = non_interfering_fraction(v, p0, alpha2)
        assert not clamped
        assert p_n == pytest.approx(p_n_true, abs=1e-12)


def test_pn_rejects_zero_alpha():
    with pytest.raises(ValueError):
        non_interfering_fraction(0.5, 0.9, 0.0)


# --- error_from_visibility ----------------------------------------------------

def decomp(v, p0=0.95, alpha2=0.005, eta=0.3, p_n=0.0):
    return InterferenceDecomposition(p0=p0, p_interfering=(1 - p0) - p_n,
                                     p_noninterfering=p_n, alpha2=alpha2,
                                     eta=eta, v=v)


def test_error_vanishes_at_perfect_visibility_weak_pulse():
    e = error_from_visibility(decomp(v=1.0, alpha2=1e-7, p0=0.9))
    assert e < 1e-6


def test_error_half_at_zero_visibility_weak_pulse():
    e = error_from_visibility(decomp(v=0.0, alpha2=1e-9))
    assert e == pytest.approx(0.5, abs=1e-6)


def test_error_regression_pinned():
    # direct evaluation of the closed form at V=0.9, p0=0.95, a2=0.005, eta=0.3:
    # shade = 1 - 2*0.3*0.05 = 0.97
    # num = 2*0.97*0.005 + 2*0.05*0.1 - 0.95*0.005*0.9 = 0.015425
    # den = 4*0.97*0.005 + 4*0.05 = 0.2194
    e = error_from_visibility(decomp(v=0.9))
    assert e == pytest.approx(0.015425 / 0.2194, rel=1e-12)


def test_error_monotone_nonincreasing_in_v():
    es = [error_from_visibility(decomp(v=v)) for v in np.linspace(0, 1, 21)]
    assert all(a >= b - 1e-15 for a, b in zip(es, es[1:]))


# --- visibility_from_counts ---------------------------------------------------

def test_visibility_zero_when_counts_match_prediction():
    c = CoincidenceCounts((0.01, 0.011), (0.02, 0.019), 0.0)
    p_prime = predicted_distinguishable_coincidence(c, g2=0.0015)
    c2 = CoincidenceCounts(c.p_click_coh, c.p_click_sp, p_prime)
    v, flag = visibility_from_counts(c2, g2=0.0015)
    assert v == pytest.approx(0.0, abs=1e-12)
    assert not flag


def test_visibility_one_at_zero_coincidences():
    c = CoincidenceCounts((0.01, 0.011), (0.02, 0.019), 0.0)
    v, flag = visibility_from_counts(c, g2=0.0015)
    assert v == 1.0
    assert not flag


def test_site_visibilities_pairs_up():
    from relayqkd.interference import site_visibilities
    a = CoincidenceCounts((0.01, 0.011), (0.02, 0.019), 0.0)
    b = CoincidenceCounts((0.012, 0.01), (0.018, 0.02), 0.0)
    v_a, v_b = site_visibilities(a, b, g2=0.0015)
    assert v_a == 1.0 and v_b == 1.0


def test_visibility_flagged_when_unphysical():
    c = CoincidenceCounts((0.01, 0.01), (0.01, 0.01), 0.9)
    v, flag = visibility_from_counts(c, g2=0.0)
    assert v < 0
    assert flag


def _single_node_probs(alpha, p_i, p_n):
    """Exact single-node interference test via the Fock oracle.

    Laser |alpha> interferes with the source's interfering mode at a 50:50
    splitter; the non-interfering mode reaches the same detectors through an
    identical splitter but never mixes with the laser.  Detector k sees the
    summed occupation of its two incoming slots.
    """
    p0 = 1 - p_i - p_n
    laser = fock.make_coherent(alpha, 4, mode="L")
    src = fock.FockVector(("s", "x"), 4, {
        (0, 0): complex(math.sqrt(p0)),
        (1, 0): complex(math.sqrt(p_i)),
        (0, 1): complex(math.sqrt(p_n)),
    })
    aux = fock.make_coherent(0.0, 4, mode="v")
    st = fock.tensor(laser, src, aux)
    st = fock.apply_beam_splitter(st, "L", "s", 0.5, fock.CONVENTION_A)
    st = fock.apply_beam_splitter(st, "x", "v", 0.5, fock.CONVENTION_A)
    marg = st.probabilities(keep_modes=("L", "s", "x", "v"))
    p1 = p2 = p12 = 0.0
    for (nl, ns, nx, nv), p in marg.items():
        d1 = nl + nx > 0
        d2 = ns + nv > 0
        p1 += p * d1
        p2 += p * d2
        p12 += p * (d1 and d2)
    return p1, p2, p12


def test_visibility_estimator_against_fock_oracle():
    # Generate the estimator's inputs from the exact optics and check the
    # recovered visibility tracks the interfering fraction.  The estimator's
    # product formula ignores three-photon terms, so agreement is O(alpha^2).
    alpha2 = 0.002
    p_i, p_n = 0.02, 0.002
    c1, c2, _ = _single_node_probs(math.sqrt(alpha2), 0.0, 0.0)
    s1, s2, s12 = _single_node_probs(0.0, p_i, p_n)
    _, _, p_c = _single_node_probs(math.sqrt(alpha2), p_i, p_n)
    g2_src = 0.0  # the constructed source has no two-photon component
    counts = CoincidenceCounts((c1, c2), (s1, s2), p_c)
    v_est, flag = visibility_from_counts(counts, g2_src)
    assert not flag
    v_expect = visibility_from_fractions(1 - p_i - p_n, p_n, alpha2)
    assert v_est == pytest.approx(v_expect, abs=0.02)
    # and the estimator resolves the fully-interfering source as more visible
    _, _, p_c0 = _single_node_probs(math.sqrt(alpha2), p_i + p_n, 0.0)
    v_best, _ = visibility_from_counts(
        CoincidenceCounts((c1, c2), (s1, s2), p_c0), g2_src)
    assert v_best > v_est

"""Instrument-phase drift model and reference-pulse estimator.

The composite phase difference between the users' pulses drifts through the
four fiber spans and the residual laser-lock offset.  It is modeled as a
Wiener process plus a deterministic ramp at the residual beat frequency.
Every estimation interval the nodes exchange reference pulses with phases
{0, +pi/2, -pi/2}; detector count contrasts recover (cos, sin) of each
side's phase, and the difference is unwrapped into [-2pi, 4pi) by picking
the branch nearest the previous estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
UNWRAP_LOW = -TWO_PI
UNWRAP_HIGH = 2.0 * TWO_PI

# Frame layout: each 100 us frame carries 10,240 reference and 20,000 signal
# pulses, so one estimation interval covers this many protocol rounds.
SIGNAL_ROUNDS_PER_INTERVAL = 20_000
REFERENCE_PULSES_PER_INTERVAL = 10_240

REF_PHASES = (0.0, 0.5 * math.pi, -0.5 * math.pi)


@dataclass(frozen=True)
class DriftConfig:
    """Stochastic drift model plus estimator cadence.

    diffusion: Wiener coefficient in rad^2/s; residual_freq: uncompensated
    beat frequency in Hz (|f| < 0.1 MHz after locking); interval: estimation
    cadence in seconds; ref_photons: expected detected reference photons per
    interval (all detectors and phases combined).
    """

    diffusion: float = 100.0
    residual_freq: float = 0.0
    interval: float = 100e-6
    ref_photons: float = 4000.0
    visibility: float = 1.0

    def __post_init__(self):
        if self.diffusion < 0:
            raise ValueError("diffusion must be >= 0")
        if self.interval <= 0:
            raise ValueError("interval must be positive")
        if self.ref_photons < 0:
            raise ValueError("ref_photons must be >= 0")


def simulate_drift(cfg: DriftConfig, duration: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample the drift path at the estimation cadence.

    Returns (t, delta_theta); increments are Gaussian with variance
    diffusion*dt on top of the 2*pi*residual_freq*t ramp.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    n = int(math.ceil(duration / cfg.interval)) + 1
    t = np.arange(n) * cfg.interval
    steps = rng.normal(0.0, math.sqrt(cfg.diffusion * cfg.interval), size=n - 1)
    theta = np.concatenate(([0.0], np.cumsum(steps))) + TWO_PI * cfg.residual_freq * t
    return t, theta


@dataclass(frozen=True)
class ReferenceBlock:
    """Reference-pulse counts: rows = detectors D1..D4, columns = the
    modulation phases (0, +pi/2, -pi/2)."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.shape != (4, 3):
            raise ValueError("counts must have shape (4, 3)")
        if (arr < 0).any():
            raise ValueError("counts must be non-negative")


def simulate_reference_block(delta_theta: float, ref_photons: float,
                             rng: np.random.Generator,
                             visibility: float = 1.0) -> ReferenceBlock:
    """Poisson counts of one estimation interval at a given true phase.

    Side A (detectors 1, 2) carries the full composite phase, side B
    (detectors 3, 4) is the zero reference; photons split equally over the
    three modulation phases and the two sides.
    """
    per_pair = ref_photons / 6.0
    counts = np.zeros((4, 3))
    for side, theta in ((0, delta_theta), (1, 0.0)):
        for j, phi in enumerate(REF_PHASES):
            contrast = visibility * math.cos(theta + phi)
            m_l = per_pair * 0.5 * (1.0 + contrast)
            m_r = per_pair * 0.5 * (1.0 - contrast)
            counts[2 * side, j] = rng.poisson(m_l)
            counts[2 * side + 1, j] = rng.poisson(m_r)
    return ReferenceBlock(counts)


@dataclass(frozen=True)
class PhaseEstimate:
    cos_delta: float
    sin_delta: float
    theta_unwrapped: float
    valid: bool


def _side_vector(block: ReferenceBlock, side: int) -> tuple[float, float]:
    """(cos, sin) direction of one side's phase from the three contrasts."""
    top = block.counts[2 * side]
    bot = block.counts[2 * side + 1]
    tot = top + bot
    if tot.sum() == 0:
        raise ZeroDivisionError
    with np.errstate(invalid="ignore"):
        contrast = np.where(tot > 0, (top - bot) / np.maximum(tot, 1), 0.0)
    cos_raw = contrast[0]
    # cos(theta + pi/2) = -sin, cos(theta - pi/2) = +sin
    sin_raw = 0.5 * (contrast[2] - contrast[1])
    return cos_raw, sin_raw


def unwrap_to_range(theta_principal: float, prev: float,
                    low: float = UNWRAP_LOW, high: float = UNWRAP_HIGH) -> float:
    """Branch of theta_principal + 2 pi k nearest prev, kept inside
    [low, high)."""
    base = math.atan2(math.sin(theta_principal), math.cos(theta_principal))
    best = None
    k_lo = int(math.floor((low - base) / TWO_PI))
    k_hi = int(math.ceil((high - base) / TWO_PI))
    for k in range(k_lo, k_hi + 1):
        cand = base + TWO_PI * k
        if not low <= cand < high:
            continue
        if best is None or abs(cand - prev) < abs(best - prev):
            best = cand
    if best is None:  # empty window cannot happen with the default range
        best = base
    return best


def estimate_phase(block: ReferenceBlock, prev_theta: float = 0.0) -> PhaseEstimate:
    """Recover (cos, sin, unwrapped theta) of the composite phase difference.

    Zero total counts leave the estimate unavailable; the previous value is
    carried forward with valid=False.
    """
    try:
        ca, sa = _side_vector(block, 0)
        cb, sb = _side_vector(block, 1)
    except ZeroDivisionError:
        return PhaseEstimate(math.cos(prev_theta), math.sin(prev_theta),
                             prev_theta, valid=False)
    cos_d = ca * cb + sa * sb
    sin_d = sa * cb - ca * sb
    if cos_d == 0.0 and sin_d == 0.0:
        return PhaseEstimate(math.cos(prev_theta), math.sin(prev_theta),
                             prev_theta, valid=False)
    theta = unwrap_to_range(math.atan2(sin_d, cos_d), prev_theta)
    norm = math.hypot(cos_d, sin_d)
    return PhaseEstimate(cos_d / norm, sin_d / norm, theta, valid=True)


def track_path(true_path: np.ndarray, cfg: DriftConfig, seed: int) -> np.ndarray:
    """Chain of unwrapped estimates over a sampled drift path."""
    rng = np.random.default_rng(seed)
    est = np.empty_like(true_path)
    prev = float(true_path[0])  # locked at start
    est[0] = prev
    for i in range(1, len(true_path)):
        block = simulate_reference_block(float(true_path[i]), cfg.ref_photons,
                                         rng, cfg.visibility)
        e = estimate_phase(block, prev_theta=prev)
        est[i] = e.theta_unwrapped
        prev = est[i]
    return est


def residual_series(cfg: DriftConfig, n_intervals: int, seed: int) -> np.ndarray:
    """Per-interval compensation residuals (true - applied estimate).

    The estimate measured on interval i compensates interval i+1, so the
    residual combines one interval of fresh drift with the estimator noise.
    """
    if n_intervals < 1:
        raise ValueError("n_intervals must be >= 1")
    _, theta = simulate_drift(cfg, n_intervals * cfg.interval, seed)
    est = track_path(theta, cfg, seed + 1)
    res = np.empty(n_intervals)
    res[0] = 0.0  # aligned at start
    res[1:] = theta[1:n_intervals] - est[0:n_intervals - 1]
    return res


def compensation_residual(true_path: np.ndarray, estimates: np.ndarray) -> float:
    """Mean of sin^2((true - estimate)/2): the additive matched-branch error
    induced by imperfect compensation."""
    true_path = np.asarray(true_path, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if true_path.shape != estimates.shape:
        raise ValueError("paths must have equal length")
    return float(np.mean(np.sin(0.5 * (true_path - estimates)) ** 2))


def export_path_csv(path, t: np.ndarray, theta: np.ndarray,
                    estimates: np.ndarray | None = None) -> None:
    """CSV export (t_s, delta_theta_rad, estimate_rad)."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "delta_theta_rad", "estimate_rad"])
        for i in range(len(t)):
            est = "" if estimates is None else f"{estimates[i]:.9f}"
            w.writerow([f"{t[i]:.9f}", f"{theta[i]:.9f}", est])

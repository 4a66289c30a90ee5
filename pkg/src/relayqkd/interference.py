"""Closed-form visibility theory and visibility estimators.

Covers the raw-visibility dependence on source purity, linewidth, gating and
the intensity ratio between the laser and the single-photon source; the
non-interfering-fraction decomposition linking measured visibility to the
protocol error rate; and the coincidence-count visibility estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .source import UndefinedStatisticError


@dataclass(frozen=True)
class VisibilityModel:
    """Inputs of the raw-visibility formula.

    sigma_a is the filtered linewidth in the same reciprocal-time units as
    1/t_p; t_g is the spatial-temporal spread; t_p the pulse period;
    ratio_qd_over_laser = I_QD / I_laser.
    """

    v_corrected: float
    g2: float
    sigma_a: float
    t_g: float
    t_p: float
    ratio_qd_over_laser: float

    def __post_init__(self):
        if not 0.0 <= self.v_corrected <= 1.0:
            raise ValueError("v_corrected must be in [0, 1]")
        if self.g2 < 0:
            raise ValueError("g2 must be >= 0")
        if self.t_g <= 0 or self.t_p <= 0:
            raise ValueError("t_g and t_p must be positive")
        if self.ratio_qd_over_laser <= 0:
            raise ValueError("ratio_qd_over_laser must be positive")


def raw_visibility(m: VisibilityModel) -> float:
    """V_r = V_c / ((g2 sigma_a / 2)(I_QD/I_laser) T_g + 0.5 I_laser/I_QD + 1).

    Multiphoton emission from the dot grows with the dot-to-laser intensity
    ratio, laser-laser coincidences grow with its inverse, so the visibility
    has an interior maximum in the ratio.
    """
    r = m.ratio_qd_over_laser
    denom = 0.5 * m.g2 * m.sigma_a * r * m.t_g + 0.5 / r + 1.0
    return m.v_corrected / denom


def optimal_intensity_ratio(m: VisibilityModel) -> float:
    """I_QD/I_laser maximizing raw_visibility (stationary point of the
    denominator)."""
    a = 0.5 * m.g2 * m.sigma_a * m.t_g
    if a <= 0:
        return math.inf  # monotone in the ratio: push the laser ever weaker
    return math.sqrt(0.5 / a)


@dataclass(frozen=True)
class InterferenceDecomposition:
    """Photon-yield decomposition of the source seen in an interference test.

    p0: vacuum yield; p_interfering / p_noninterfering: emission
    probabilities of the mode that does / does not interfere with the laser;
    alpha2: laser mean photon number; eta: channel transmittance; v: measured
    visibility.
    """

    p0: float
    p_interfering: float
    p_noninterfering: float
    alpha2: float
    eta: float
    v: float

    def __post_init__(self):
        for name in ("p0", "p_interfering", "p_noninterfering", "eta"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {val}")
        if self.p0 + self.p_interfering + self.p_noninterfering > 1.0 + 1e-12:
            raise ValueError("yields exceed unity")
        if self.alpha2 < 0:
            raise ValueError("alpha2 must be >= 0")


def non_interfering_fraction(v: float, p0: float, alpha2: float) -> tuple[float, bool]:
    """p_N from a measured visibility.

    p_N = [(1-V)(p0 a^4/4 + (1-p0) a^2/2) - p0 a^4/4] / (a^2/2).
    Measured V close to 1 can push the algebraic value below zero; it is
    clamped to 0 and flagged rather than rejected, since measured
    visibilities carry noise.  Returns (p_N, clamped).
    """
    if alpha2 <= 0:
        raise ValueError("alpha2 must be positive")
    quartic = 0.25 * p0 * alpha2**2
    p_n = ((1.0 - v) * (quartic + 0.5 * (1.0 - p0) * alpha2) - quartic) / (0.5 * alpha2)
    if p_n < 0.0:
        return 0.0, True
    return min(p_n, 1.0), p_n > 1.0


def visibility_from_fractions(p0: float, p_n: float, alpha2: float) -> float:
    """Inverse of non_interfering_fraction (used for round-trip checks)."""
    quartic = 0.25 * p0 * alpha2**2
    return 1.0 - (quartic + 0.5 * p_n * alpha2) / (quartic + 0.5 * (1.0 - p0) * alpha2)


def interference_test_yields(p_i_protocol: float,
                             p_n_protocol: float) -> tuple[float, float]:
    """Convert protocol-path photon yields to interference-test yields.

    The interference test taps the source after the relay's 50:50 splitter,
    so its (p_I, p_N) are half the values that enter the protocol error
    budget.  error_from_visibility already works in test-side yields; use
    this when feeding it protocol-side numbers.
    """
    return 0.5 * p_i_protocol, 0.5 * p_n_protocol


def error_from_visibility(d: InterferenceDecomposition) -> float:
    """Protocol error rate implied by the interference-test visibility.

    e = [2(1-2 eta (1-p0)) a^2 + 2(1-p0)(1-V) - p0 a^2 V]
        / [4(1-2 eta (1-p0)) a^2 + 4(1-p0)],
    clamped to [0, 0.5].  The interference-test yields are half the
    protocol-path ones (the source passes the relay splitter first), which
    is already folded into these coefficients.
    """
    shade = 1.0 - 2.0 * d.eta * (1.0 - d.p0)
    denom = 4.0 * shade * d.alpha2 + 4.0 * (1.0 - d.p0)
    if denom <= 0:
        raise UndefinedStatisticError("degenerate decomposition: p0=1 with alpha2=0")
    num = 2.0 * shade * d.alpha2 + 2.0 * (1.0 - d.p0) * (1.0 - d.v) - d.p0 * d.alpha2 * d.v
    return min(max(num / denom, 0.0), 0.5)


@dataclass(frozen=True)
class CoincidenceCounts:
    """Single-node interference-test probabilities for one detector pair.

    p_click_coh / p_click_sp: marginal click probabilities of the two
    detectors when only the laser / only the source fires.
    p_coincidence_same: measured coincidence probability with both on.
    """

    p_click_coh: tuple[float, float]
    p_click_sp: tuple[float, float]
    p_coincidence_same: float

    def __post_init__(self):
        for p in (*self.p_click_coh, *self.p_click_sp, self.p_coincidence_same):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must be in [0, 1]")


def predicted_distinguishable_coincidence(c: CoincidenceCounts, g2: float) -> float:
    """P'_C: the coincidence probability were the sources fully
    distinguishable: laser-laser + source-source (weighted by g2) + cross."""
    c1, c2 = c.p_click_coh
    s1, s2 = c.p_click_sp
    return c1 * c2 + s1 * s2 * g2 + c1 * s2 + c2 * s1


def visibility_from_counts(c: CoincidenceCounts, g2: float) -> tuple[float, bool]:
    """V = 1 - P_C / P'_C.  Returns (V, unphysical) where unphysical flags a
    negative estimate (measured coincidences above the distinguishable
    prediction)."""
    p_prime = predicted_distinguishable_coincidence(c, g2)
    if p_prime <= 0:
        raise UndefinedStatisticError("distinguishable coincidence probability is zero")
    v = 1.0 - c.p_coincidence_same / p_prime
    return v, v < 0.0


def site_visibilities(site_a: CoincidenceCounts, site_b: CoincidenceCounts,
                      g2: float) -> tuple[float, float]:
    """(V_A, V_B) from the two measurement sites' detector-pair counts."""
    v_a, _ = visibility_from_counts(site_a, g2)
    v_b, _ = visibility_from_counts(site_b, g2)
    return v_a, v_b


def g2_of_distribution(p0: float, p1: float, p2: float) -> float:
    """g2(0) = 2 p2 / p1^2 of a (vacuum, one, two)-photon distribution."""
    if p1 <= 0:
        raise UndefinedStatisticError("g2 undefined for p1 = 0")
    if p0 + p1 + p2 > 1.0 + 1e-12:
        raise ValueError("probabilities exceed unity")
    if min(p0, p2) < 0:
        raise ValueError("probabilities must be non-negative")
    return 2.0 * p2 / p1**2

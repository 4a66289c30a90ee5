"""Imperfect single-photon source model.

The measured pulse intensity splits into a true single-photon component
(emission probability T) and a leaked pump-laser component in a separate,
non-interfering mode with fully random phase.  The two are linked through
the measured second-order correlation g2(0):

    nu / T = (g2/2) / (1 - g2),      I = T + nu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UndefinedStatisticError(ValueError):
    """A statistic is requested from a degenerate distribution."""


def leak_ratio_from_g2(g2: float) -> float:
    """Ratio nu/T of leaked coherent intensity to single-photon emission."""
    if not 0.0 <= g2 < 1.0:
        raise ValueError(f"g2 must be in [0, 1), got {g2}")
    return 0.5 * g2 / (1.0 - g2)


@dataclass(frozen=True)
class SourceModel:
    """Split of the total per-pulse intensity entering the relay splitter."""

    intensity_total: float
    g2: float
    t_emit: float
    nu_leak: float

    def __post_init__(self):
        if min(self.intensity_total, self.t_emit, self.nu_leak) < 0:
            raise ValueError("source intensities must be non-negative")
        if not 0.0 <= self.g2 < 1.0:
            raise ValueError("g2 must be in [0, 1)")
        if abs(self.intensity_total - (self.t_emit + self.nu_leak)) > 1e-12:
            raise ValueError("intensity_total must equal t_emit + nu_leak")

    @classmethod
    def ideal(cls, t_emit: float) -> "SourceModel":
        return cls(t_emit, 0.0, t_emit, 0.0)


def split_intensity(intensity_total: float, g2: float) -> SourceModel:
    """Decompose total intensity I into (T, nu) using the g2 ratio."""
    if intensity_total < 0:
        raise ValueError("intensity_total must be non-negative")
    ratio = leak_ratio_from_g2(g2)
    t_emit = intensity_total / (1.0 + ratio)
    return SourceModel(intensity_total, g2, t_emit, intensity_total - t_emit)


def predicted_hbt_g2(m: SourceModel) -> float:
    """g2(0) the model predicts in a Hanbury-Brown-Twiss measurement.

    g2 = ((nu/2 + T) (nu/2)) / ((T/2 + nu/2)^2); round-trips with
    split_intensity to first order in nu/T.
    """
    if m.t_emit + m.nu_leak <= 0:
        raise UndefinedStatisticError("zero-intensity source has no g2")
    half_nu = 0.5 * m.nu_leak
    mean = 0.5 * (m.t_emit + m.nu_leak)
    return (half_nu + m.t_emit) * half_nu / mean**2


def simulate_hbt(m: SourceModel, n_windows: int, seed: int,
                 chunk: int = 10_000_000) -> tuple[float, float]:
    """Monte Carlo HBT estimate of g2(0) with threshold detectors.

    Each window: the single photon fires with probability T and routes 50:50;
    the leak contributes an independent Poisson number of photons, each
    routed 50:50.  Returns (g2_estimate, standard_error).
    """
    if n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    rng = np.random.default_rng(seed)
    n1 = n2 = 0  # marginal clicks
    n12 = 0      # coincidences
    left = n_windows
    while left > 0:
        n = min(chunk, left)
        left -= n
        sp = rng.random(n) < m.t_emit
        sp_left = rng.random(n) < 0.5
        k = rng.poisson(m.nu_leak, size=n)
        k_left = rng.binomial(k, 0.5)
        left_click = (sp & sp_left) | (k_left > 0)
        right_click = (sp & ~sp_left) | ((k - k_left) > 0)
        n1 += int(left_click.sum())
        n2 += int(right_click.sum())
        n12 += int((left_click & right_click).sum())
    if n1 == 0 or n2 == 0:
        raise UndefinedStatisticError("no clicks recorded; increase n_windows")
    p1, p2, p12 = n1 / n_windows, n2 / n_windows, n12 / n_windows
    g2 = p12 / (p1 * p2)
    # Poisson error of the scarce coincidence count, propagated; the bound
    # sqrt(max(n12,1)) keeps sigma finite when no coincidence landed.
    sigma = math.sqrt(max(n12, 1)) / n_windows / (p1 * p2)
    return g2, sigma

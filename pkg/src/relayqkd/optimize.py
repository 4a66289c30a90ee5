"""Intensity and loss-split optimization, distance scans, scaling fits.

The end-to-end distance splits into four spans: user -> node and
source -> node on each side.  loss_split is the fraction of each side's dB
budget assigned to the user span; 0.5 is the symmetric layout.  Rates come
from the closed-form report; the optimizer runs coordinate descent with
golden-section line searches over log10(mu) and the split.

The decoy intensity does not enter the asymptotic rate, so it is re-anchored
to mu/2 after optimization instead of searched; the sending probabilities
only scale statistics and keep their configured values.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .rates import (
    LinkBudget,
    ProtocolConstants,
    RateReport,
    rate_report,
)
from .source import SourceModel

DEFAULT_ATTENUATION_DB_KM = 0.1954  # reproduces eta = 0.325 over 25 km
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class UndefinedFitError(ValueError):
    """Not enough positive-rate points inside the fit window."""


def links_for_distance(total_km: float, split: float, template: LinkBudget,
                       atten_db_km: float = DEFAULT_ATTENUATION_DB_KM) -> LinkBudget:
    """Span transmittances for a total user-to-user distance and dB split."""
    if total_km < 0:
        raise ValueError("total_km must be >= 0")
    if not 0.0 < split < 1.0:
        raise ValueError("split must be in (0, 1)")
    side_db = 0.5 * atten_db_km * total_km
    eta_user = 10.0 ** (-side_db * split / 10.0)
    eta_source = 10.0 ** (-side_db * (1.0 - split) / 10.0)
    return replace(template, eta1=eta_user, eta4=eta_user,
                   eta2=eta_source, eta3=eta_source)


def eta_total_for_distance(total_km: float,
                           atten_db_km: float = DEFAULT_ATTENUATION_DB_KM) -> float:
    """End-to-end transmittance of the full user-to-user path."""
    return 10.0 ** (-atten_db_km * total_km / 10.0)


@dataclass(frozen=True)
class ScanPoint:
    total_distance: float
    eta_total: float
    loss_split: float
    consts: ProtocolConstants
    rate: float            # clamped at 0 for curves
    report: RateReport     # carries the raw signed rate


@dataclass(frozen=True)
class OptimizerResult:
    best: ScanPoint
    trace: tuple
    evaluations: int
    all_negative: bool


def golden_section_max(f, lo: float, hi: float, xtol: float = 1e-3,
                       max_iter: int = 60) -> tuple[float, float]:
    """Maximize a unimodal f on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a < xtol:
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def optimize_at_distance(total_km: float, template: LinkBudget,
                         src: SourceModel, consts: ProtocolConstants,
                         opt_split: bool = True,
                         atten_db_km: float = DEFAULT_ATTENUATION_DB_KM,
                         rel_tol: float = 1e-4,
                         max_evals: int = 200) -> OptimizerResult:
    """Coordinate descent over (log10 mu, loss split) maximizing the rate.

    Stops when a full sweep improves the rate by less than rel_tol relative
    or the evaluation budget is spent.  The trace holds every point probed.
    """
    trace: list[ScanPoint] = []
    eta_total = eta_total_for_distance(total_km, atten_db_km)

    def evaluate(log_mu: float, split: float) -> ScanPoint:
        mu = 10.0 ** log_mu
        c = replace(consts, mu=mu, nu=0.5 * mu)
        links = links_for_distance(total_km, split, template, atten_db_km)
        report = rate_report(links, src, c)
        point = ScanPoint(total_km, eta_total, split, c,
                          max(0.0, report.rate_raw), report)
        trace.append(point)
        return point

    log_mu = math.log10(consts.mu)
    split = 0.5
    best = evaluate(log_mu, split)

    def budget() -> int:
        return max_evals - len(trace)

    while budget() > 0:
        previous = best.report.rate_raw

        def f_mu(x):
            return evaluate(x, split).report.rate_raw if budget() > 0 else -math.inf

        log_mu, _ = golden_section_max(f_mu, -5.0, 0.0, xtol=2e-3)
        if opt_split and budget() > 0:
            def f_split(s):
                return evaluate(log_mu, s).report.rate_raw if budget() > 0 else -math.inf

            split, _ = golden_section_max(f_split, 0.02, 0.98, xtol=2e-3)
        best = max(trace, key=lambda p: p.report.rate_raw)
        now = best.report.rate_raw
        if now <= 0 or previous <= 0:
            if now <= previous:
                break
        elif (now - previous) / abs(previous) < rel_tol:
            break

    all_negative = best.report.rate_raw <= 0
    return OptimizerResult(best=best, trace=tuple(trace),
                           evaluations=len(trace), all_negative=all_negative)


@dataclass(frozen=True)
class Curve:
    e_extra: float
    points: tuple


def scan_distance(distances_km, e_extra_levels, template: LinkBudget,
                  src: SourceModel, consts: ProtocolConstants,
                  opt_split: bool = True,
                  atten_db_km: float = DEFAULT_ATTENUATION_DB_KM,
                  threads: int = 1) -> list[Curve]:
    """One optimized rate-vs-distance curve per extra-error level.

    Points are evaluated independently (optionally in parallel) and merged
    in input order; the first zero-rate point terminates its curve.
    """
    curves = []
    for e_extra in e_extra_levels:
        if not 0.0 <= e_extra <= 0.5:
            raise ValueError("e_extra levels must be in [0, 0.5]")
        tpl = replace(template, e_extra=e_extra)

        def solve(km):
            return optimize_at_distance(km, tpl, src, consts,
                                        opt_split=opt_split,
                                        atten_db_km=atten_db_km).best

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                points = list(pool.map(solve, distances_km))
        else:
            points = [solve(km) for km in distances_km]
        kept = []
        for p in points:
            if p.rate <= 0.0:
                break
            kept.append(p)
        curves.append(Curve(e_extra=e_extra, points=tuple(kept)))
    return curves


def zero_rate_distance(curve: Curve, scanned_km) -> float | None:
    """First scanned distance whose point fell off the curve, or None if the
    curve survived the whole scan."""
    scanned = list(scanned_km)
    if len(curve.points) >= len(scanned):
        return None
    return scanned[len(curve.points)]


def fit_scaling_exponent(curve: Curve,
                         window: tuple[float, float]) -> float:
    """Least-squares slope of log rate vs log eta_total inside the window.

    The window (eta_lo, eta_hi) should exclude the dark-count-dominated tail;
    at least five positive points are required.
    """
    lo, hi = window
    pts = [p for p in curve.points if lo <= p.eta_total <= hi and p.rate > 0]
    if len(pts) < 5:
        raise UndefinedFitError(
            f"only {len(pts)} positive points inside eta window {window}")
    x = np.log([p.eta_total for p in pts])
    y = np.log([p.rate for p in pts])
    return float(np.polyfit(x, y, 1)[0])


CURVE_COLUMNS = ["distance_km", "eta_total", "mu", "nu", "split",
                 "rate_bits_per_pulse", "e_mu", "e_ph"]


def write_curve_csv(path, curve: Curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for p in curve.points:
            w.writerow([f"{p.total_distance:.6g}", f"{p.eta_total:.9e}",
                        f"{p.consts.mu:.9e}", f"{p.consts.nu:.9e}",
                        f"{p.loss_split:.6f}", f"{p.rate:.9e}",
                        f"{p.report.e_mu_total:.9e}",
                        f"{p.report.e_phase_bound:.9e}"])

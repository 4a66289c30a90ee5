

import numpy as np
import pytest

from relayqkd.optimize import (
    Curve,
    ScanPoint,
    UndefinedFitError,
    eta_total_for_distance,
    fit_scaling_exponent,
    golden_section_max,
    links_for_distance,
    optimize_at_distance,
    scan_distance,
    write_curve_csv,
    zero_rate_distance,
)
from relayqkd.rates import LinkBudget, ProtocolConstants, rate_report
from relayqkd.source import split_intensity

TEMPLATE = LinkBudget.symmetric(1.0, 1.0, eta_d=1.0, p_d=2.78e-8)
SRC = split_intensity(0.3 * (1 + 0.5 * 0.002 / 0.998), 0.002)  # T = 0.3
CONSTS = ProtocolConstants(mu=0.01, nu=0.005)


def test_attenuation_reproduces_table_point():
    links = links_for_distance(100.0, 0.5, TEMPLATE)
    assert links.eta1 == pytest.approx(0.325, abs=2e-3)
    assert links.eta2 == pytest.approx(links.eta1)


def test_links_split_moves_loss_between_spans():
    near_users = links_for_distance(100.0, 0.2, TEMPLATE)
    assert near_users.eta1 > near_users.eta2
    # the product is split-invariant
    sym = links_for_distance(100.0, 0.5, TEMPLATE)
    assert near_users.eta1 * near_users.eta2 == pytest.approx(
        sym.eta1 * sym.eta2, rel=1e-12)


def test_golden_section_finds_parabola_peak():
    x, v = golden_section_max(lambda x: -(x - 0.7) ** 2, 0.0, 2.0, xtol=1e-6)
    assert x == pytest.approx(0.7, abs=1e-4)
    assert v == pytest.approx(0.0, abs=1e-8)


def test_optimizer_fixed_split_stays_symmetric():
    res = optimize_at_distance(200.0, TEMPLATE, SRC, CONSTS, opt_split=False)
    assert res.best.loss_split == 0.5
    assert res.best.rate > 0
    assert not res.all_negative
    assert res.evaluations <= 200


def test_optimizer_trace_contains_best():
    res = optimize_at_distance(150.0, TEMPLATE, SRC, CONSTS)
    rates = [p.report.rate_raw for p in res.trace]
    assert max(rates) == res.best.report.rate_raw


def test_optimizer_deterministic():
    r1 = optimize_at_distance(250.0, TEMPLATE, SRC, CONSTS)
    r2 = optimize_at_distance(250.0, TEMPLATE, SRC, CONSTS)
    assert r1.best.rate == r2.best.rate
    assert [p.rate for p in r1.trace] == [p.rate for p in r2.trace]


def test_optimizer_dominates_grid():
    km = 300.0
    res = optimize_at_distance(km, TEMPLATE, SRC, CONSTS)
    for log_mu in np.linspace(-4, -0.5, 12):
        for split in np.linspace(0.1, 0.9, 12):
            links = links_for_distance(km, split, TEMPLATE)
            consts = ProtocolConstants(mu=10.0 ** log_mu, nu=10.0 ** log_mu / 2)
            raw = rate_report(links, SRC, consts).rate_raw
            assert res.best.report.rate_raw >= raw - 1e-12 * abs(raw)


def test_optimizer_reports_all_negative():
    res = optimize_at_distance(1500.0, TEMPLATE, SRC, CONSTS)
    assert res.all_negative
    assert res.best.rate == 0.0


def test_optimizer_mu_bracket_at_100km():
    # with the experiment's error budget the optimizer's mu should live in
    # the same decade as the configured signal intensity
    template = LinkBudget.symmetric(1.0, 1.0, eta_d=0.52, p_d=2.78e-8,
                                    e_extra=0.09)
    src = split_intensity(0.05338, 0.0015)
    res = optimize_at_distance(100.0, template, src, CONSTS, opt_split=False)
    assert 1e-3 <= res.best.consts.mu <= 1e-2


def test_scan_terminates_curve_at_zero_rate():
    kms = [100, 300, 500, 700, 900, 1100, 1300]
    curves = scan_distance(kms, [0.0, 0.5], TEMPLATE, SRC, CONSTS,
                           opt_split=False)
    ideal, dead = curves
    assert dead.points == ()  # e_extra = 0.5 kills the rate everywhere
    assert 0 < len(ideal.points) < len(kms)
    assert zero_rate_distance(dead, kms) == 100
    assert zero_rate_distance(ideal, kms) is not None


def test_scan_pointwise_monotone_in_e_extra():
    kms = [100, 200, 300]
    curves = scan_distance(kms, [0.0, 0.03], TEMPLATE, SRC, CONSTS,
                           opt_split=False)
    for p_hi, p_lo in zip(curves[0].points, curves[1].points):
        assert p_hi.rate >= p_lo.rate


def test_scan_threaded_matches_serial():
    kms = [100, 250, 400]
    serial = scan_distance(kms, [0.0], TEMPLATE, SRC, CONSTS, threads=1)
    threaded = scan_distance(kms, [0.0], TEMPLATE, SRC, CONSTS, threads=3)
    assert [p.rate for p in serial[0].points] == [p.rate for p in threaded[0].points]


def test_fit_recovers_exact_power_laws():
    def synthetic(slope):
        pts = []
        for eta in np.geomspace(1e-6, 1e-2, 9):
            pts.append(ScanPoint(0.0, float(eta), 0.5, CONSTS,
                                 float(3.0 * eta ** slope), None))
        return Curve(0.0, tuple(pts))

    assert fit_scaling_exponent(synthetic(0.5), (1e-6, 1e-2)) == pytest.approx(0.5, abs=1e-6)
    assert fit_scaling_exponent(synthetic(1.0), (1e-6, 1e-2)) == pytest.approx(1.0, abs=1e-6)


def test_fit_requires_enough_points():
    pts = tuple(ScanPoint(0.0, eta, 0.5, CONSTS, eta, None)
                for eta in (1e-3, 1e-4))
    with pytest.raises(UndefinedFitError):
        fit_scaling_exponent(Curve(0.0, pts), (1e-5, 1e-2))


def test_curve_csv_round_trip(tmp_path):
    curves = scan_distance([100, 200], [0.0], TEMPLATE, SRC, CONSTS,
                           opt_split=False)
    path = tmp_path / "curve.csv"
    write_curve_csv(path, curves[0])
    import csv
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == len(curves[0].points)
    assert float(rows[0]["eta_total"]) == pytest.approx(
        eta_total_for_distance(100.0))
    assert float(rows[0]["rate_bits_per_pulse"]) == pytest.approx(
        curves[0].points[0].rate, rel=1e-6)

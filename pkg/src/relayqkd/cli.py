"""Command-line interface.

Every subcommand writes machine-readable output (JSON/CSV) under --out and
prints a short human summary.  Exit codes: 0 success, 2 validation error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fock, phase, plots
from .config import ConfigError, load_config
from .ingest import (
    bundled_records,
    compute_key_length,
    estimate_phase_error,
    load_experiment_records,
)
from .interference import VisibilityModel, raw_visibility
from .optimize import (
    DEFAULT_ATTENUATION_DB_KM,
    optimize_at_distance,
    scan_distance,
    write_curve_csv,
)
from .rates import gain_qmu, rate_report
from .simulate import SimConfig, run_protocol
from .source import split_intensity

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=str)


def cmd_rates(args) -> int:
    cfg = load_config(args.config)
    report = rate_report(cfg.links, cfg.src, cfg.consts)
    out = _out_dir(args) / "rate_report.json"
    _dump_json(out, dataclasses.asdict(report))
    print(f"Q_mu = {report.q_mu_total:.4e}   E_mu = {report.e_mu_total:.4f}   "
          f"e_ph = {report.e_phase_bound:.4f}")
    print(f"key rate = {report.rate_per_pulse:.4e} bit/pulse "
          f"(raw {report.rate_raw:.4e}) -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    sim = SimConfig(links=cfg.links, src=cfg.src, consts=cfg.consts,
                    n_rounds=args.rounds or cfg.n_rounds,
                    seed=args.seed if args.seed is not None else cfg.seed,
                    drift=cfg.drift, cache_resolution=cfg.cache_resolution,
                    threads=args.threads)
    tally = run_protocol(sim)
    out = _out_dir(args)
    tally.write_csv(out / "tally.csv")
    tally.write_json(out / "tally.json")
    row = tally.to_row()
    print(f"{row['N']} rounds: M_mumu = {row['M_mumu']}, "
          f"raw key = {row['raw_key_length']}, qber = {row['qber']:.4f}"
          if row["raw_key_length"] else
          f"{row['N']} rounds: M_mumu = {row['M_mumu']}, no sifted bits")
    print(f"tally -> {out / 'tally.csv'}, {out / 'tally.json'}")
    return EXIT_OK


def cmd_scan(args) -> int:
    cfg = load_config(args.config)
    levels = [float(x) for x in args.e_extra.split(",")]
    kms = list(np.arange(args.min_km, args.max_km + 1e-9, args.step_km))
    curves = scan_distance(kms, levels, cfg.links, cfg.src, cfg.consts,
                           opt_split=not args.fixed_split,
                           atten_db_km=args.attenuation,
                           threads=args.threads)
    out = _out_dir(args)
    paths = []
    for curve in curves:
        path = out / f"scan_e{curve.e_extra:g}.csv"
        write_curve_csv(path, curve)
        paths.append(path)
        end = curve.points[-1].total_distance if curve.points else None
        print(f"e_extra={curve.e_extra:g}: {len(curve.points)} positive points"
              + (f", last at {end:g} km" if end else ""))
    if args.plot:
        png = out / "scan.png"
        plots.render_scan_figure(paths, png,
                                 labels=[f"e_extra={c.e_extra:g}" for c in curves])
        print(f"figure -> {png}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    res = optimize_at_distance(args.km, cfg.links, cfg.src, cfg.consts,
                               opt_split=not args.fixed_split,
                               atten_db_km=args.attenuation)
    out = _out_dir(args) / "optimize.json"
    best = res.best
    _dump_json(out, {
        "distance_km": best.total_distance, "eta_total": best.eta_total,
        "loss_split": best.loss_split, "mu": best.consts.mu,
        "nu": best.consts.nu, "rate_bits_per_pulse": best.rate,
        "rate_raw": best.report.rate_raw, "evaluations": res.evaluations,
        "all_negative": res.all_negative,
        "report": dataclasses.asdict(best.report)})
    print(f"{args.km:g} km: best rate {best.rate:.4e} bit/pulse at "
          f"mu={best.consts.mu:.4e}, split={best.loss_split:.3f} "
          f"({res.evaluations} evaluations) -> {out}")
    if res.all_negative:
        print("note: every probed point had a negative raw rate")
    return EXIT_OK


def cmd_visibility(args) -> int:
    rows_out = []
    with open(args.table, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["window_ps", "v_corrected", "sigma_a", "t_g"]
        if reader.fieldnames != expected:
            raise ConfigError(f"calibration table header {reader.fieldnames}; "
                              f"expected {expected}")
        table = list(reader)
    ratios = [float(x) for x in args.ratios.split(",")]
    for row in table:
        for r in ratios:
            m = VisibilityModel(
                v_corrected=float(row["v_corrected"]), g2=args.g2,
                sigma_a=float(row["sigma_a"]), t_g=float(row["t_g"]),
                t_p=args.t_p, ratio_qd_over_laser=1.0 / r)
            rows_out.append({"window_ps": row["window_ps"],
                             "ratio_laser_over_qd": r,
                             "v_raw": raw_visibility(m)})
    out = _out_dir(args) / "visibility.csv"
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["window_ps", "ratio_laser_over_qd",
                                           "v_raw"])
        w.writeheader()
        w.writerows(rows_out)
    print(f"{len(rows_out)} visibility points -> {out}")
    if args.plot:
        png = _out_dir(args) / "visibility.png"
        plots.render_visibility_figure(out, png)
        print(f"figure -> {png}")
    return EXIT_OK


def cmd_phase(args) -> int:
    cfg = phase.DriftConfig(diffusion=args.diffusion,
                            residual_freq=args.residual_freq,
                            ref_photons=args.ref_photons)
    t, theta = phase.simulate_drift(cfg, args.duration, args.seed or 1)
    est = phase.track_path(theta, cfg, (args.seed or 1) + 1)
    out = _out_dir(args)
    path_csv = out / "phase_path.csv"
    phase.export_path_csv(path_csv, t, theta, est)
    resid = phase.compensation_residual(theta[1:], est[:-1])
    print(f"{len(t)} samples over {args.duration:g} s; "
          f"delayed-tracking residual error = {resid:.3e} -> {path_csv}")
    if args.plot:
        png = out / "phase_path.png"
        plots.render_phase_figure(path_csv, png)
        print(f"figure -> {png}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    if args.data == "bundled":
        records = bundled_records()
    else:
        records = load_experiment_records(args.data)
    rows = []
    for rec in records:
        est = estimate_phase_error(rec)
        res = compute_key_length(rec, est.e_phase, args.f)
        rows.append({
            "distance_km": rec.distance_km, "y1_lower": est.y1_lower,
            "e_phase": est.e_phase, "qber": rec.qber,
            "per_pulse_rate": res.per_pulse_rate,
            "per_pulse_raw": res.per_pulse_raw,
            "final_bits": res.final_bits})
        print(f"{rec.distance_km:g} km: e_p = {est.e_phase:.4f}, "
              f"rate = {res.per_pulse_rate:.3e} bit/pulse, "
              f"final = {res.final_bits:.3e} bits")
    out = _out_dir(args) / "key_lengths.csv"
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else
                           ["distance_km"])
        w.writeheader()
        w.writerows(rows)
    print(f"table -> {out}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cfg = load_config(args.config)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    checks = []

    def compare(links, src, mu):
        lk = links.folded()
        dist = fock.relay_click_distribution(
            alpha=math.sqrt(mu), beta=math.sqrt(mu),
            eta1=lk.eta1, eta2=lk.eta2, eta3=lk.eta3, eta4=lk.eta4,
            t_emit=src.t_emit, det_eff=1.0, dark_rate=lk.p_d,
            leak_site_intensity=0.5 * lk.eta2 * src.nu_leak)
        oracle = fock.coincidence_prob(dist)
        analytic = gain_qmu(mu, lk, src).total
        return abs(oracle / analytic - 1.0)

    checks.append(("configured point",
                   compare(cfg.links, cfg.src, cfg.consts.mu)))
    for i in range(args.draws):
        links = cfg.links.__class__.symmetric(
            float(rng.uniform(0.01, 0.5)), float(rng.uniform(0.01, 0.5)),
            p_d=float(rng.uniform(0, 1e-6)))
        src = split_intensity(float(rng.uniform(0.01, 0.6)),
                              float(rng.uniform(0, 0.01)))
        mu = float(rng.uniform(1e-4, 0.01))
        checks.append((f"draw {i}", compare(links, src, mu)))
    worst = max(c[1] for c in checks)
    for name, dev in checks:
        print(f"{name}: |oracle/analytic - 1| = {dev:.2e}")
    _dump_json(_out_dir(args) / "oracle_check.json",
               {"checks": [{"name": n, "rel_dev": d} for n, d in checks],
                "worst": worst, "tolerance": args.tolerance})
    print(f"worst deviation {worst:.2e} (tolerance {args.tolerance:g})")
    return EXIT_OK if worst <= args.tolerance else EXIT_RUNTIME


def cmd_report(args) -> int:
    out = _out_dir(args)
    made = []
    for path in args.scan_csv or []:
        png = out / (Path(path).stem + ".png")
        plots.render_scan_figure([path], png)
        made.append(png)
    for path in args.phase_csv or []:
        png = out / (Path(path).stem + ".png")
        plots.render_phase_figure(path, png)
        made.append(png)
    for path in args.visibility_csv or []:
        png = out / (Path(path).stem + ".png")
        plots.render_visibility_figure(path, png)
        made.append(png)
    if not made:
        print("nothing to render; pass --scan-csv/--phase-csv/--visibility-csv",
              file=sys.stderr)
        return EXIT_USAGE
    for png in made:
        print(f"figure -> {png}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relayqkd",
        description="five-node single-photon-relay QKD toolkit")
    sub = parser.add_subparsers(dest="command")

    def common(p, config=True):
        if config:
            p.add_argument("--config", default="t1_100km",
                           help="TOML path or preset name (default t1_100km)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("rates", help="analytic rate report")
    common(p)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("simulate", help="Monte Carlo protocol run")
    common(p)
    p.add_argument("--rounds", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scan", help="optimized rate-vs-distance curves")
    common(p)
    p.add_argument("--min-km", type=float, default=50.0)
    p.add_argument("--max-km", type=float, default=600.0)
    p.add_argument("--step-km", type=float, default=50.0)
    p.add_argument("--e-extra", default="0",
                   help="comma-separated extra-error levels")
    p.add_argument("--fixed-split", action="store_true",
                   help="keep the symmetric loss split")
    p.add_argument("--attenuation", type=float,
                   default=DEFAULT_ATTENUATION_DB_KM)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("optimize", help="optimize one distance")
    common(p)
    p.add_argument("--km", type=float, required=True)
    p.add_argument("--fixed-split", action="store_true")
    p.add_argument("--attenuation", type=float,
                   default=DEFAULT_ATTENUATION_DB_KM)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("visibility", help="raw visibility from a calibration table")
    common(p, config=False)
    p.add_argument("--table", required=True,
                   help="CSV with window_ps,v_corrected,sigma_a,t_g")
    p.add_argument("--g2", type=float, default=0.0015)
    p.add_argument("--t-p", type=float, default=5e-9,
                   help="pulse period in seconds")
    p.add_argument("--ratios", default="0.1",
                   help="comma-separated laser/source intensity ratios")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_visibility)

    p = sub.add_parser("phase", help="simulate drift and its estimator")
    common(p, config=False)
    p.add_argument("--duration", type=float, default=0.1, help="seconds")
    p.add_argument("--diffusion", type=float, default=100.0)
    p.add_argument("--residual-freq", type=float, default=0.0)
    p.add_argument("--ref-photons", type=float, default=4000.0)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("ingest", help="experiment records -> key lengths")
    common(p, config=False)
    p.add_argument("--data", default="bundled",
                   help="record CSV path, or 'bundled'")
    p.add_argument("--f", type=float, default=1.15,
                   help="error-correction efficiency")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("oracle-check", help="Fock oracle vs analytic gains")
    common(p)
    p.add_argument("--draws", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=0.01)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("report", help="render figures from emitted data files")
    common(p, config=False)
    p.add_argument("--scan-csv", nargs="*")
    p.add_argument("--phase-csv", nargs="*")
    p.add_argument("--visibility-csv", nargs="*")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

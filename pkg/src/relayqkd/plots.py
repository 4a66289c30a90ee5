"""Figure rendering for the report path.

Reads the delimited outputs the CLI emits (scan curves, drift paths,
ingested key lengths) and renders matplotlib figures next to them.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_scan_figure(curve_csvs, out_png, labels=None) -> None:
    """Rate-vs-distance curves on a log axis, one line per CSV."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, path in enumerate(curve_csvs):
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        km = [float(r["distance_km"]) for r in rows]
        rate = [float(r["rate_bits_per_pulse"]) for r in rows]
        label = labels[i] if labels else str(path)
        ax.semilogy(km, rate, marker="o", ms=3, label=label)
    ax.set_xlabel("total distance (km)")
    ax.set_ylabel("key rate (bit/pulse)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_phase_figure(path_csv, out_png) -> None:
    """Drift path and its tracked estimate over time."""
    with open(path_csv) as fh:
        rows = list(csv.DictReader(fh))
    t = [float(r["t_s"]) * 1e3 for r in rows]
    theta = [float(r["delta_theta_rad"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, theta, lw=0.8, label="drift")
    if rows and rows[0].get("estimate_rad"):
        est = [float(r["estimate_rad"]) for r in rows]
        ax.plot(t, est, lw=0.8, ls="--", label="estimate")
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("phase (rad)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_visibility_figure(vis_csv, out_png) -> None:
    """Raw visibility against the laser/source intensity ratio."""
    with open(vis_csv) as fh:
        rows = list(csv.DictReader(fh))
    fig, ax = plt.subplots(figsize=(6, 4))
    windows = sorted({r["window_ps"] for r in rows})
    for w in windows:
        pts = [(float(r["ratio_laser_over_qd"]), float(r["v_raw"]))
               for r in rows if r["window_ps"] == w]
        pts.sort()
        ax.semilogx([p[0] for p in pts], [p[1] for p in pts],
                    marker="o", ms=3, label=f"{w} ps window")
    ax.set_xlabel("laser / source intensity ratio")
    ax.set_ylabel("raw visibility")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)

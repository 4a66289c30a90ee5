"""Experiment-record ingestion, decoy estimation, key-length computation.

The bundled CSV holds the three demonstration runs (100/200/300 km).  The
decoy lower bound on the single-photon yield is the standard two-decoy form

    Y1 >= (mu/(mu nu - nu^2)) (Q_nu e^nu - (nu^2/mu^2) Q_mu e^mu
                               - ((mu^2-nu^2)/mu^2) Q_0)

applied to the vacuum/decoy/signal gains exactly as recorded; the phase
error then follows from the single-photon fraction of the signal gain.
Only diagonal-intensity counts are recorded, so the resulting e_p is a
bounded estimate rather than a point value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from importlib import resources

from .rates import binary_entropy, phase_error_bound


class RecordSchemaError(ValueError):
    """An experiment-record file does not match the expected schema."""


@dataclass(frozen=True)
class ExperimentRecord:
    distance_km: float
    gamma: float
    mu: float
    nu: float
    eta_d: float
    total_loss_db: float
    n_total: float
    n_00: float
    n_nunu: float
    n_mumu: float
    m_00: float
    m_nunu: float
    m_mumu: float
    raw_key_length: float
    qber: float

    def __post_init__(self):
        if not 0.0 <= self.qber <= 1.0:
            raise RecordSchemaError(f"qber out of range: {self.qber}")
        if not 0.0 < self.nu < self.mu:
            raise RecordSchemaError(
                f"intensities must satisfy 0 < nu < mu, got {self.nu}, {self.mu}")
        for pair in (("m_00", "n_00"), ("m_nunu", "n_nunu"), ("m_mumu", "n_mumu")):
            m, n = (getattr(self, x) for x in pair)
            if m < 0 or m > n:
                raise RecordSchemaError(f"{pair[0]} must lie in [0, {pair[1]}]")

    @property
    def gain_vacuum(self) -> float:
        return self.m_00 / self.n_00

    @property
    def gain_decoy(self) -> float:
        return self.m_nunu / self.n_nunu

    @property
    def gain_signal(self) -> float:
        return self.m_mumu / self.n_mumu


RECORD_COLUMNS = [f.name for f in fields(ExperimentRecord)]


def load_experiment_records(path) -> list[ExperimentRecord]:
    """Parse a record CSV; schema violations name the offending row/column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        if reader.fieldnames != RECORD_COLUMNS:
            raise RecordSchemaError(
                f"bad header {reader.fieldnames}; expected {RECORD_COLUMNS}")
        out = []
        for i, row in enumerate(reader, start=2):
            values = {}
            for col in RECORD_COLUMNS:
                try:
                    values[col] = float(row[col])
                except (TypeError, ValueError):
                    raise RecordSchemaError(
                        f"row {i}, column {col!r}: cannot parse {row[col]!r}") from None
            out.append(ExperimentRecord(**values))
    return out


def bundled_records_path():
    return resources.files("relayqkd.data").joinpath("experiment_records.csv")


def bundled_records() -> list[ExperimentRecord]:
    with resources.as_file(bundled_records_path()) as p:
        return load_experiment_records(p)


def decoy_y1_lower(q0: float, q_nu: float, q_mu: float,
                   nu: float, mu: float) -> float:
    """Two-decoy lower bound on the single-photon yield (clamped at 0)."""
    if not 0.0 < nu < mu:
        raise ValueError(f"need 0 < nu < mu, got nu={nu}, mu={mu}")
    if min(q0, q_nu, q_mu) < 0:
        raise ValueError("gains must be non-negative")
    bound = (mu / (mu * nu - nu * nu)) * (
        q_nu * math.exp(nu)
        - (nu * nu) / (mu * mu) * q_mu * math.exp(mu)
        - (mu * mu - nu * nu) / (mu * mu) * q0)
    return max(0.0, bound)


@dataclass(frozen=True)
class DecoyEstimate:
    y1_lower: float
    q1: float
    e_phase: float


def estimate_phase_error(rec: ExperimentRecord) -> DecoyEstimate:
    """Frozen pipeline from recorded gains to the phase-error bound."""
    y1 = decoy_y1_lower(rec.gain_vacuum, rec.gain_decoy, rec.gain_signal,
                        rec.nu, rec.mu)
    q1, e_p = phase_error_bound(y1, rec.gain_signal, rec.mu)
    return DecoyEstimate(y1_lower=y1, q1=q1, e_phase=e_p)


@dataclass(frozen=True)
class KeyLengthResult:
    per_pulse_rate: float   # clamped at 0
    final_bits: float
    per_pulse_raw: float
    rate_per_sifted: float
    e_phase: float


def compute_key_length(rec: ExperimentRecord, e_p: float,
                       f: float = 1.15) -> KeyLengthResult:
    """Per-pulse rate and final key length from a record and a phase error.

    per_pulse = (raw_key_length / n_total) (1 - h(e_p) - f h(QBER)).
    """
    sift_fraction = rec.raw_key_length / rec.n_total
    per_sifted = 1.0 - binary_entropy(e_p) - f * binary_entropy(rec.qber)
    raw = sift_fraction * per_sifted
    clamped = max(0.0, raw)
    return KeyLengthResult(per_pulse_rate=clamped,
                           final_bits=clamped * rec.n_total,
                           per_pulse_raw=raw,
                           rate_per_sifted=per_sifted,
                           e_phase=e_p)


def back_solve_phase_error(rec: ExperimentRecord, per_pulse_rate: float,
                           f: float = 1.15) -> float:
    """e_p <= 1/2 that reproduces a given per-pulse rate for this record."""
    target_h = 1.0 - per_pulse_rate * rec.n_total / rec.raw_key_length \
        - f * binary_entropy(rec.qber)
    if not 0.0 <= target_h <= 1.0:
        raise ValueError("per-pulse rate incompatible with the record")
    lo, hi = 0.0, 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < target_h:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

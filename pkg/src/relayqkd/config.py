"""Run configuration: TOML files, bundled presets, cross-field validation."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .phase import DriftConfig
from .rates import DEFAULT_DARK_RATE, LinkBudget, ProtocolConstants
from .source import SourceModel, split_intensity

PRESETS = ("t1_100km", "t1_200km", "t1_300km")


class ConfigError(ValueError):
    """A run configuration failed validation; the message names the field."""


@dataclass(frozen=True)
class RunConfig:
    links: LinkBudget
    src: SourceModel
    consts: ProtocolConstants
    n_rounds: int
    seed: int
    cache_resolution: int
    drift: DriftConfig | None
    out_dir: str

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ConfigError("simulation.n_rounds must be >= 1")


def _section(data: dict, name: str) -> dict:
    got = data.get(name)
    if got is None:
        raise ConfigError(f"missing [{name}] section")
    return got


def _build(data: dict) -> RunConfig:
    ln = _section(data, "links")
    try:
        links = LinkBudget(
            eta1=ln["eta1"], eta2=ln["eta2"], eta3=ln.get("eta3", ln["eta2"]),
            eta4=ln.get("eta4", ln["eta1"]), eta_d=ln.get("eta_d", 1.0),
            p_d=ln.get("p_d", DEFAULT_DARK_RATE),
            e_extra=ln.get("e_extra", 0.0))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"links: {exc}") from exc

    sc = _section(data, "source")
    try:
        src = split_intensity(sc["intensity"], sc.get("g2", 0.0))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"source: {exc}") from exc

    pr = _section(data, "protocol")
    try:
        consts = ProtocolConstants(
            mu=pr["mu"], nu=pr["nu"], p_mu=pr.get("p_mu", 0.751),
            p_nu=pr.get("p_nu", 0.160), d_phases=pr.get("d_phases", 16),
            f_ec=pr.get("f_ec", 1.15))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"protocol: {exc}") from exc

    sim = data.get("simulation", {})
    drift = None
    if "drift" in data:
        dr = data["drift"]
        try:
            drift = DriftConfig(
                diffusion=dr.get("diffusion", 100.0),
                residual_freq=dr.get("residual_freq", 0.0),
                interval=dr.get("interval", 100e-6),
                ref_photons=dr.get("ref_photons", 4000.0),
                visibility=dr.get("visibility", 1.0))
        except ValueError as exc:
            raise ConfigError(f"drift: {exc}") from exc

    return RunConfig(
        links=links, src=src, consts=consts,
        n_rounds=int(sim.get("n_rounds", 1_000_000)),
        seed=int(sim.get("seed", 1)),
        cache_resolution=int(sim.get("cache_resolution", 256)),
        drift=drift, out_dir=str(data.get("output", {}).get("dir", ".")))


def load_config(name_or_path: str) -> RunConfig:
    """Load a TOML run configuration; bare preset names resolve to the
    bundled files."""
    path = Path(name_or_path)
    if not path.exists() and name_or_path in PRESETS:
        with resources.as_file(resources.files("relayqkd.presets")
                               .joinpath(f"{name_or_path}.toml")) as p:
            return load_config(str(p))
    if not path.exists():
        raise ConfigError(f"config {name_or_path!r} is neither a file nor one "
                          f"of the presets {PRESETS}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return _build(data)

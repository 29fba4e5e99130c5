"""Campaign configuration: nested dataclasses loaded from TOML or a manifest."""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .chain import CouplingMatrix, TrapConfig, chain_couplings, power_law_couplings
from .measure import MeasurementModel

KINDS = ("chain", "scan", "fit", "reconstruct", "spectrum", "witness", "gapmap")
DEFAULT_SPINS = {"chain": 8, "scan": 8, "fit": 8, "reconstruct": 8, "spectrum": 5, "witness": 4, "gapmap": 8}


class ConfigError(ValueError):
    pass


@dataclass
class TrapSection:
    n_ions: int | None = None
    omega_transverse: float = 4.8
    omega_axial: float = 1.0
    carrier_rabi: float | list[float] = 500.0
    recoil_frequency: float = 18.0
    detuning_mu: float | list[float] = 4.9
    resonance_floor: float = 1.0

    def detunings(self) -> list[float]:
        mu = self.detuning_mu
        return [float(m) for m in mu] if isinstance(mu, (list, tuple)) else [float(mu)]

    def trap(self, n: int, mu: float | None = None) -> TrapConfig:
        rabi = tuple(self.carrier_rabi) if isinstance(self.carrier_rabi, (list, tuple)) else self.carrier_rabi
        return TrapConfig(n, self.omega_transverse, self.omega_axial, rabi, self.recoil_frequency,
                          self.detunings()[0] if mu is None else mu, resonance_floor=self.resonance_floor)


@dataclass
class CouplingSection:
    source: str = "chain"  # "chain" or "power_law"
    j0: float = 1.0
    alpha: float = 1.0


@dataclass
class MeasurementSection:
    repetitions: int = 1000
    eps_bright_to_dark: float = 0.02
    eps_dark_to_bright: float = 0.05
    noiseless: bool = False
    correct: bool = False


@dataclass
class ProbeSection:
    amplitude: float = 0.1  # kHz
    duration: float = 3.0  # ms


@dataclass
class ScanSection:
    initial: str | None = None  # configuration label; polarized by default
    start: float | None = None  # kHz; default window around the expected lines
    stop: float | None = None
    step: float = 0.025
    input: str | None = None  # scan CSV for the fit verb


@dataclass
class ReconstructSection:
    symmetric: bool = False
    spectrometer: str | None = None  # "exact" or "simulated"; default follows noiseless
    scans_dir: str | None = None
    covariance: str = "scaled"


@dataclass
class SpectrumSection:
    preparation: str = "adiabatic"
    extrapolate: bool = True


@dataclass
class WitnessSection:
    preparation: str = "drive"
    corrected: bool = True  # invert the detection channel before evaluating


@dataclass
class GapSection:
    n_b0: int = 30
    n_freq: int = 60
    b0_max: float = 1.2  # in units of <J>
    switch: float = 0.5  # in units of <J>
    phi: float = -0.7853981633974483
    convention: str = "ferro"


@dataclass
class CampaignConfig:
    kind: str = "chain"
    seed: int = 0
    workers: int = 1
    dt: float | None = None
    out: str = "out"
    trap: TrapSection = field(default_factory=TrapSection)
    couplings: CouplingSection = field(default_factory=CouplingSection)
    measurement: MeasurementSection = field(default_factory=MeasurementSection)
    probe: ProbeSection = field(default_factory=ProbeSection)
    scan: ScanSection = field(default_factory=ScanSection)
    reconstruct: ReconstructSection = field(default_factory=ReconstructSection)
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    witness: WitnessSection = field(default_factory=WitnessSection)
    gapmap: GapSection = field(default_factory=GapSection)

    @property
    def n_spins(self) -> int:
        return self.trap.n_ions if self.trap.n_ions is not None else DEFAULT_SPINS[self.kind]

    def resolved(self) -> "CampaignConfig":
        """Copy with every default that depends on the kind filled in."""
        out = from_dict(asdict(self))
        out.trap.n_ions = self.n_spins
        if out.reconstruct.spectrometer is None:
            out.reconstruct.spectrometer = "exact" if out.measurement.noiseless else "simulated"
        return out

    def model(self) -> MeasurementModel | None:
        if self.measurement.noiseless:
            return None
        m = self.measurement
        return MeasurementModel(m.repetitions, m.eps_bright_to_dark, m.eps_dark_to_bright, self.seed)

    def coupling_matrix(self, mu: float | None = None) -> CouplingMatrix:
        n = self.n_spins
        c = self.couplings
        if c.source == "chain":
            return chain_couplings(self.trap.trap(n, mu))[1]
        if c.source == "power_law":
            return power_law_couplings(n, c.j0, c.alpha)
        raise ConfigError(f"unknown coupling source {c.source!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"section for {cls.__name__} must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        kwargs[name] = _build(type(default), value) if is_dataclass(default) else value
    return cls(**kwargs)


def from_dict(data: dict) -> CampaignConfig:
    cfg = _build(CampaignConfig, dict(data))
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown campaign kind {cfg.kind!r}; expected one of {KINDS}")
    return cfg


def load_config(path: str | Path) -> CampaignConfig:
    """Read a TOML config, or the ``config`` table of a run manifest (.json)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        data = data.get("config", data)
    else:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
        run = data.pop("run", {})
        data = {**run, **data}
    return from_dict(data)

"""Scenario configuration: INI-style sections with ``key = value`` entries.

Sections: ``[plant] [sim] [ocp] [lqr] [noise] [perturb] [output]``.  Vector
entries (diagonals of Q, Q_proc, P0) are comma separated.  Overrides given
as ``section.key=value`` strings are applied after the file.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .control import LqrWeights
from .estimation import NoiseConfig
from .hybrid import SimOptions
from .model import PlantParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OcpConfig:
    N: int = 80
    u_max: float = 250.0
    T_max: float = 2.5
    guard_margin: float = 0.5
    backend: str = "slsqp"
    warm_start: bool = True
    landing_window: float = 0.3
    maxiter: int = 500


@dataclass(frozen=True)
class LqrConfig:
    tracking: LqrWeights = field(default_factory=LqrWeights)
    balance: LqrWeights = field(default_factory=LqrWeights)


@dataclass(frozen=True)
class Perturbation:
    m: float = 1.0
    I: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.5 <= v <= 2.0:
                raise ConfigError(f"perturbation factor {f.name}={v} outside [0.5, 2.0]")


@dataclass(frozen=True)
class ScenarioConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    sim: SimOptions = field(default_factory=lambda: SimOptions(t_end=5.0))
    ocp: OcpConfig = field(default_factory=OcpConfig)
    lqr: LqrConfig = field(default_factory=LqrConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    perturb: Perturbation = field(default_factory=Perturbation)
    out_dir: Path = Path("out")
    seed: int = 0

    @property
    def true_plant(self) -> PlantParams:
        """Plant used for simulation: the model with the perturbation factors."""
        return self.plant.perturbed(self.perturb.m, self.perturb.I, self.perturb.b)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _vector(s: str) -> np.ndarray:
    return np.array([float(v) for v in s.replace(";", ",").split(",") if v.strip()])


def _diag_or_matrix(s: str) -> np.ndarray:
    v = _vector(s)
    if v.size == 16:
        return v.reshape(4, 4)
    return np.diag(v)


def _coerce(cls, values: dict, vector_keys=()) -> dict:
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for k, raw in values.items():
        if k not in types:
            raise ConfigError(f"unknown key {k!r} for {cls.__name__}")
        t = str(types[k])
        if k in vector_keys:
            out[k] = _diag_or_matrix(raw)
        elif "bool" in t:
            out[k] = _bool(raw)
        elif t == "int" or "int" == t.split(" ")[0]:
            out[k] = int(float(raw))
        elif "str" in t:
            out[k] = raw.strip()
        else:
            out[k] = float(raw)
    return out


def parse_sections(sections: dict[str, dict[str, str]], base: ScenarioConfig | None = None) -> ScenarioConfig:
    cfg = base or ScenarioConfig()
    known = {"plant", "sim", "ocp", "lqr", "noise", "perturb", "output"}
    unknown = set(sections) - known - {"DEFAULT"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        if sections.get("plant"):
            cur = {f.name: getattr(cfg.plant, f.name) for f in fields(PlantParams)}
            cur.update(_coerce(PlantParams, sections["plant"]))
            cfg = replace(cfg, plant=PlantParams(**cur))
        if sections.get("sim"):
            cfg = replace(cfg, sim=replace(cfg.sim, **_coerce(SimOptions, sections["sim"])))
        if sections.get("ocp"):
            cfg = replace(cfg, ocp=replace(cfg.ocp, **_coerce(OcpConfig, sections["ocp"])))
        if sections.get("lqr"):
            s = sections["lqr"]
            extra = set(s) - {"Q", "R", "Q_balance", "R_balance"}
            if extra:
                raise ConfigError(f"unknown lqr keys: {sorted(extra)}")
            tr, bal = cfg.lqr.tracking, cfg.lqr.balance
            if "Q" in s or "R" in s:
                tr = LqrWeights(_diag_or_matrix(s["Q"]) if "Q" in s else tr.Q, float(s.get("R", tr.R)))
            if "Q_balance" in s or "R_balance" in s:
                bal = LqrWeights(_diag_or_matrix(s["Q_balance"]) if "Q_balance" in s else bal.Q,
                                 float(s.get("R_balance", bal.R)))
            cfg = replace(cfg, lqr=LqrConfig(tr, bal))
        if sections.get("noise"):
            cfg = replace(cfg, noise=replace(cfg.noise, **_coerce(NoiseConfig, sections["noise"], ("Q_proc", "P0"))))
        if sections.get("perturb"):
            cfg = replace(cfg, perturb=replace(cfg.perturb, **_coerce(Perturbation, sections["perturb"])))
        if sections.get("output"):
            s = sections["output"]
            extra = set(s) - {"out_dir", "seed"}
            if extra:
                raise ConfigError(f"unknown output keys: {sorted(extra)}")
            if "out_dir" in s:
                cfg = replace(cfg, out_dir=Path(s["out_dir"]))
            if "seed" in s:
                cfg = replace(cfg, seed=int(s["seed"]))
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e
    return cfg


def load_config(path=None, overrides=(), base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Read a config file (optional) and apply ``section.key=value`` overrides."""
    sections: dict[str, dict[str, str]] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        cp.optionxform = str  # keep key case (R_o, Q, ...)
        try:
            cp.read(path)
        except configparser.Error as e:
            raise ConfigError(str(e)) from e
        sections = {s: dict(cp[s]) for s in cp.sections()}
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        lhs, value = ov.split("=", 1)
        sec, key = lhs.split(".", 1)
        sections.setdefault(sec.strip(), {})[key.strip()] = value.strip()
    return parse_sections(sections, base)


DEFAULT_INI = """\
[plant]
R_o = 0.0958
R_i = 0.0438
R_b = 0.0077
m = 0.032
I = 1.28e-6
b = 1.4e-6
g = 9.81

[sim]
step = 1e-3
event_tol = 1e-9
max_events = 50
t_end = 5.0
hoop_actuated_in_flight = true

[ocp]
N = 80
u_max = 250
T_max = 2.5
guard_margin = 0.5
backend = slsqp
landing_window = 0.3

[lqr]
Q = 0, 1, 200, 1
R = 1e-2
Q_balance = 0, 1, 200, 1
R_balance = 1e-2

[noise]
sigma_psi = 0.01
Q_proc = 1e-12, 1e-12, 1e-5, 1e-1
delay_steps = 2
T = 0.02
discretization = euler

[perturb]
m = 1.0
I = 1.0
b = 1.0

[output]
out_dir = out
seed = 0
"""

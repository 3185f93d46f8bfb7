"""
Scenario files: sectioned TOML with strict key checking.

A scenario bundles every parameter set the simulator needs plus the protocol
to run. Sweep files are scenarios with an extra ``[sweep]`` section and
calibration files carry a ``[targets]`` section. Every problem is reported
with the dotted path of the offending field.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .physics import PhysicsParams
from .protocols import TimingBudget
from .pulses import GateParams, ReadoutParams


class ConfigError(Exception):
    """Base class for configuration problems (CLI exit code 2)."""


class ConfigParse(ConfigError):
    pass


class ConfigInvalid(ConfigError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


KINDS = ("repetitive", "error_corrected")
BACKENDS = ("expectation", "montecarlo")
AXES = ("B0", "N_r", "N")


@dataclass(frozen=True)
class ProtocolConfig:
    """``N = 0`` asks for an automatic window that contains the fidelity peak."""

    kind: str = "repetitive"
    N: int = 0
    N_r: int = 0
    baseline: bool = True  # also run plain readout next to an error-corrected one

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.N < 0:
            raise ValueError("N must be non-negative (0 = automatic)")
        if self.kind == "error_corrected" and self.N_r < 1:
            raise ValueError("error_corrected needs N_r >= 1")
        if self.kind == "repetitive" and self.N_r != 0:
            raise ValueError("repetitive readout takes N_r = 0")


@dataclass(frozen=True)
class InitialConfig:
    nuclear: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        v = self.nuclear
        if len(v) != 3 or min(v) < 0 or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("nuclear must be three probabilities (m_I = -1, 0, +1) summing to one")


@dataclass(frozen=True)
class SimulationConfig:
    backend: str = "expectation"
    n_shots: int = 10_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.n_shots < 1:
            raise ValueError("n_shots must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    prefix: str = "run"
    shots: bool = False  # also dump raw Monte Carlo shots

    def __post_init__(self):
        if not self.prefix or "/" in self.prefix:
            raise ValueError("prefix must be a plain file-name stem")


@dataclass(frozen=True)
class FieldConfig:
    B0: float = 0.244

    def __post_init__(self):
        if not math.isfinite(self.B0) or abs(self.B0) > 1.0:
            raise ValueError("|B0| must be at most 1 T")


@dataclass(frozen=True)
class SweepSpec:
    axis: str = "B0"
    values: tuple = ()
    N_r: tuple = ()  # error-correction periods compared at each axis value

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if not self.values:
            raise ValueError("values must not be empty")
        if self.axis == "B0" and any(abs(v) > 1.0 for v in self.values):
            raise ValueError("B0 values must satisfy |B0| <= 1 T")
        if self.axis in ("N_r", "N"):
            if any(int(v) != v or v < 1 for v in self.values):
                raise ValueError(f"{self.axis} values must be positive integers")
            object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if any(int(v) != v or v < 1 for v in self.N_r):
            raise ValueError("N_r entries must be positive integers")
        object.__setattr__(self, "N_r", tuple(int(v) for v in self.N_r))


@dataclass(frozen=True)
class ModerateTargets:
    B0: float = 0.082
    F_plain: float = 0.08
    F_tolerance: float = 0.02
    N_opt_range: tuple = (60, 240)
    A_es_bracket: tuple = (0.02, 1.0)

    def __post_init__(self):
        if len(self.N_opt_range) != 2 or self.N_opt_range[0] > self.N_opt_range[1]:
            raise ValueError("N_opt_range must be [low, high]")
        if len(self.A_es_bracket) != 2 or not 0 < self.A_es_bracket[0] < self.A_es_bracket[1]:
            raise ValueError("A_es_bracket must be [low, high] with 0 < low < high")


@dataclass(frozen=True)
class Targets:
    """Calibration targets. Either half may be omitted."""

    N_1e: float | None = None
    B0: float = 0.244
    F_single: float | None = None
    alpha0: float | None = None
    contrast_model: str = "simulated"
    moderate: ModerateTargets | None = None

    def __post_init__(self):
        if self.N_1e is None and self.F_single is None:
            raise ValueError("give N_1e and/or F_single")
        if self.N_1e is not None and self.N_1e <= 0:
            raise ValueError("N_1e must be positive")
        if self.F_single is not None and not 0 < self.F_single < 1:
            raise ValueError("F_single must lie in (0, 1)")
        if self.contrast_model not in ("simulated", "ideal"):
            raise ValueError("contrast_model must be 'simulated' or 'ideal'")


@dataclass(frozen=True)
class ScenarioConfig:
    physics: PhysicsParams = PhysicsParams()
    readout: ReadoutParams = ReadoutParams()
    gates: GateParams = GateParams()
    field: FieldConfig = FieldConfig()
    protocol: ProtocolConfig = ProtocolConfig()
    initial: InitialConfig = InitialConfig()
    simulation: SimulationConfig = SimulationConfig()
    output: OutputConfig = OutputConfig()
    timing: TimingBudget = dataclasses.field(default_factory=TimingBudget)
    sweep: SweepSpec | None = None
    targets: Targets | None = None


SECTIONS = {
    "physics": PhysicsParams,
    "readout": ReadoutParams,
    "gates": GateParams,
    "field": FieldConfig,
    "protocol": ProtocolConfig,
    "initial": InitialConfig,
    "simulation": SimulationConfig,
    "output": OutputConfig,
    "timing": TimingBudget,
    "sweep": SweepSpec,
    "targets": Targets,
}
NESTED = {(Targets, "moderate"): ModerateTargets}
OPTIONAL_SECTIONS = ("sweep", "targets")


# ----------------------------------------------------------------------------
# Parsing


def _coerce(path: str, value: Any, default: Any, annotation: str) -> Any:
    """Check a raw TOML value against the field's declared type."""
    if isinstance(default, bool) or annotation == "bool":
        if not isinstance(value, bool):
            raise ConfigInvalid(path, f"expected true/false, got {value!r}")
        return value
    if annotation == "str":
        if not isinstance(value, str):
            raise ConfigInvalid(path, f"expected a string, got {value!r}")
        return value
    if annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(path, f"expected an integer, got {value!r}")
        return value
    if annotation == "tuple":
        if not isinstance(value, list):
            raise ConfigInvalid(path, f"expected a list, got {value!r}")
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigInvalid(f"{path}[{i}]", f"expected a number, got {v!r}")
        return tuple(value)
    # float, possibly optional
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(path, f"expected a number, got {value!r}")
    return float(value)


def _annotation(f: dataclasses.Field) -> str:
    a = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    return a.split("|")[0].strip()


def _build(cls, raw: dict, path: str):
    if not isinstance(raw, dict):
        raise ConfigInvalid(path, "expected a table")
    known = {f.name: f for f in fields(cls) if f.init}
    for key in raw:
        if key not in known:
            raise ConfigInvalid(f"{path}.{key}", "unknown key")
    kwargs = {}
    for name, value in raw.items():
        f = known[name]
        sub = NESTED.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{path}.{name}")
            continue
        default = f.default if f.default is not dataclasses.MISSING else None
        kwargs[name] = _coerce(f"{path}.{name}", value, default, _annotation(f))
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(path, str(exc)) from None


def config_from_dict(raw: dict) -> ScenarioConfig:
    for key in raw:
        if key not in SECTIONS:
            raise ConfigInvalid(key, "unknown section")
    sections = {name: _build(cls, raw[name], name) for name, cls in SECTIONS.items() if name in raw}
    return ScenarioConfig(**sections)


def parse_config(text: str) -> ScenarioConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigParse(f"not valid TOML: {exc}") from None
    return config_from_dict(raw)


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# ----------------------------------------------------------------------------
# Serialization


def _section_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        if not f.init:
            continue
        value = getattr(obj, f.name)
        if value is None:
            continue
        if dataclasses.is_dataclass(value):
            out[f.name] = _section_dict(value)
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def config_to_dict(cfg: ScenarioConfig) -> dict:
    out = {}
    for name in SECTIONS:
        value = getattr(cfg, name)
        if value is None:
            continue
        out[name] = _section_dict(value)
    return out


def dump_config(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def with_overrides(cfg: ScenarioConfig, **sections) -> ScenarioConfig:
    """Replace fields section-wise: ``with_overrides(cfg, field={"B0": 0.1})``."""
    changes = {}
    for name, values in sections.items():
        try:
            changes[name] = replace(getattr(cfg, name), **values)
        except (ValueError, TypeError) as exc:
            raise ConfigInvalid(name, str(exc)) from None
    return replace(cfg, **changes)


def overlay_parameters(cfg: ScenarioConfig, params: ScenarioConfig) -> ScenarioConfig:
    """Take physics, readout and gates from a calibrated parameter file."""
    return replace(cfg, physics=params.physics, readout=params.readout, gates=params.gates)


PRESETS = ("fig2b", "fig3b", "fig3c", "fig4", "targets")


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigInvalid("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return Path(__file__).parent / "presets" / f"{name}.toml"


def load_preset(name: str) -> ScenarioConfig:
    return load_config(preset_path(name))

"""Run configuration: YAML file with ``system``, ``task``, ``scheme``, ``run`` and ``output`` sections.

Every key is optional; missing keys take the :class:`SystemConfig` and settings defaults.
Plain numbers are linear SI units. Power-like quantities may also be written
as strings with a unit, e.g. ``transmit_power: "10 dBm"`` or
``noise_psd: "-174 dBm/Hz"``. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from stackfl.system import SystemConfig, dbm_to_watts, thermal_noise_power

SCHEMES = ("aou", "aou_topk", "random", "cluster", "fixed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSettings:
    kind: str = "ridge"
    total_samples: int = 500
    dim: int = 5
    reg: float = 0.01
    noise: float = 0.5
    learning_rate: float | None = None  # None -> 1/L
    track_bound: bool = True


@dataclass(frozen=True)
class SchemeSettings:
    name: str = "aou"
    ra: str = "mo"
    sa: str = "match"
    random_init: bool = False
    fixed_tau: float = 0.5
    fixed_p: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    task: TaskSettings = field(default_factory=TaskSettings)
    scheme: SchemeSettings = field(default_factory=SchemeSettings)
    rounds: int = 200
    out_dir: str = "out"

    @property
    def seed(self) -> int:
        return self.system.rng_seed

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict:
        """Resolved configuration in linear units, for the config echo file."""
        return {
            "system": dataclasses.asdict(self.system),
            "task": dataclasses.asdict(self.task),
            "scheme": dataclasses.asdict(self.scheme),
            "run": {"rounds": self.rounds, "seed": self.seed},
            "output": {"dir": self.out_dir},
        }


_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-z/]*)\s*$")


def parse_power(value, where: str) -> float:
    """Watts from a number (W) or a string in W, mW, dBm or dBW."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a power, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    m = _QUANTITY.match(str(value))
    if not m:
        raise ConfigError(f"{where}: cannot parse power {value!r}")
    number, unit = float(m.group(1)), m.group(2).lower()
    if unit in ("", "w"):
        return number
    if unit == "mw":
        return number * 1e-3
    if unit == "dbm":
        return dbm_to_watts(number)
    if unit == "dbw":
        return 10.0 ** (number / 10.0)
    raise ConfigError(f"{where}: unknown power unit {m.group(2)!r}")


def parse_psd(value, where: str) -> float:
    """dBm/Hz from a number (taken as dBm/Hz) or a ``"<x> dBm/Hz"`` string."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    m = _QUANTITY.match(str(value))
    if not m or m.group(2).lower() not in ("dbm/hz", ""):
        raise ConfigError(f"{where}: expected a density in dBm/Hz, got {value!r}")
    return float(m.group(1))


def _number(value, where: str, kind=float):
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true/false, got {value!r}")
    return value


def _section(raw: dict, name: str, allowed) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}")
    return sec


_SYSTEM_NUMERIC = {
    "num_devices": int,
    "num_subchannels": int,
    "bandwidth": float,
    "path_loss_exponent": float,
    "carrier_frequency": float,
    "freq_factor": float,
    "cycles_per_sample": float,
    "power_coeff": float,
    "model_size": float,
    "disc_radius": float,
    "cpu_frequency": float,
    "max_energy": float,
    "error_tolerance": float,
}


def _system(sec: dict, seed) -> SystemConfig:
    kwargs = {}
    for key, kind in _SYSTEM_NUMERIC.items():
        if key in sec and sec[key] is not None:
            kwargs[key] = _number(sec[key], f"system.{key}", kind)
    if "transmit_power" in sec:
        kwargs["transmit_power"] = parse_power(sec["transmit_power"], "system.transmit_power")
    if "noise_psd" in sec and "noise_power" in sec:
        raise ConfigError("system: give either noise_psd or noise_power, not both")
    bandwidth = kwargs.get("bandwidth", SystemConfig.bandwidth)
    if "noise_power" in sec:
        kwargs["noise_variance"] = parse_power(sec["noise_power"], "system.noise_power")
    else:
        psd = parse_psd(sec.get("noise_psd", -174.0), "system.noise_psd")
        kwargs["noise_variance"] = thermal_noise_power(psd, bandwidth)
    if seed is not None:
        kwargs["rng_seed"] = _number(seed, "run.seed", int)
    try:
        return SystemConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from None


def _task(sec: dict) -> TaskSettings:
    base = TaskSettings()
    kind = sec.get("kind", base.kind)
    if kind not in ("ridge", "logistic"):
        raise ConfigError(f"task.kind: expected ridge or logistic, got {kind!r}")
    lr = sec.get("learning_rate", base.learning_rate)
    settings = TaskSettings(
        kind=kind,
        total_samples=_number(sec.get("total_samples", base.total_samples), "task.total_samples", int),
        dim=_number(sec.get("dim", base.dim), "task.dim", int),
        reg=_number(sec.get("reg", base.reg), "task.reg"),
        noise=_number(sec.get("noise", base.noise), "task.noise"),
        learning_rate=None if lr is None else _number(lr, "task.learning_rate"),
        track_bound=_bool(sec.get("track_bound", base.track_bound), "task.track_bound"),
    )
    if settings.dim < 1:
        raise ConfigError("task.dim: must be >= 1")
    if settings.reg < 1e-3:
        raise ConfigError("task.reg: must be >= 1e-3")
    if settings.learning_rate is not None and settings.learning_rate <= 0:
        raise ConfigError("task.learning_rate: must be > 0")
    if settings.noise < 0:
        raise ConfigError("task.noise: must be >= 0")
    return settings


def _scheme(sec: dict) -> SchemeSettings:
    base = SchemeSettings()
    s = SchemeSettings(
        name=sec.get("name", base.name),
        ra=sec.get("ra", base.ra),
        sa=sec.get("sa", base.sa),
        random_init=_bool(sec.get("random_init", base.random_init), "scheme.random_init"),
        fixed_tau=_number(sec.get("fixed_tau", base.fixed_tau), "scheme.fixed_tau"),
        fixed_p=_number(sec.get("fixed_p", base.fixed_p), "scheme.fixed_p"),
    )
    validate_scheme(s)
    return s


def validate_scheme(s: SchemeSettings) -> None:
    if s.name not in SCHEMES:
        raise ConfigError(f"scheme.name: expected one of {', '.join(SCHEMES)}, got {s.name!r}")
    if s.ra not in ("mo", "fix"):
        raise ConfigError(f"scheme.ra: expected mo or fix, got {s.ra!r}")
    if s.sa not in ("match", "random"):
        raise ConfigError(f"scheme.sa: expected match or random, got {s.sa!r}")
    for key in ("fixed_tau", "fixed_p"):
        if not 0 < getattr(s, key) <= 1:
            raise ConfigError(f"scheme.{key}: must be in (0, 1]")


def config_from_dict(raw: dict | None) -> RunConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(raw) - {"system", "task", "scheme", "run", "output"})
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    sys_sec = _section(raw, "system", set(_SYSTEM_NUMERIC) | {"transmit_power", "noise_psd", "noise_power"})
    task_sec = _section(raw, "task", {f.name for f in dataclasses.fields(TaskSettings)})
    scheme_sec = _section(raw, "scheme", {f.name for f in dataclasses.fields(SchemeSettings)})
    run_sec = _section(raw, "run", {"rounds", "seed"})
    out_sec = _section(raw, "output", {"dir"})

    task = _task(task_sec)
    system = _system(sys_sec, run_sec.get("seed"))
    if task.total_samples < system.num_devices:
        raise ConfigError("task.total_samples: must be >= system.num_devices")
    rounds = _number(run_sec.get("rounds", 200), "run.rounds", int)
    if rounds < 0:
        raise ConfigError("run.rounds: must be >= 0")
    return RunConfig(
        system=system,
        task=task,
        scheme=_scheme(scheme_sec),
        rounds=rounds,
        out_dir=str(out_sec.get("dir", "out")),
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(raw)


def apply_override(raw: dict, dotted: str, value) -> dict:
    """Set ``section.key`` in a raw config mapping (used by CLI flags and sweeps)."""
    section, _, key = dotted.partition(".")
    if not key:
        raise ConfigError(f"override {dotted!r} must look like section.key")
    raw = {k: dict(v or {}) for k, v in raw.items()}
    raw.setdefault(section, {})[key] = value
    return raw

import logging
import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Union

import json5
import numpy as np

from algorithms.biharmonic import PowerSumNonlinearity, parse_nonlinearity
from algorithms.dynamics import PropagatorConfig
from algorithms.energy import BIHARMONIC, ModelParams
from algorithms.groundstate import SolverConfig
from algorithms.spectral import GridError, make_grid

logger = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).parent.parent / "data" / "defaults.json5"

SP_COMMANDS = ("groundstate", "scan-rho", "subadd", "split-test", "evolve", "stability")
BIHARMONIC_COMMANDS = ("biharm-neg", "biharm-ground", "biharm-evolve")
COMMANDS = SP_COMMANDS + BIHARMONIC_COMMANDS + ("selftest",)


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field and, for files, the line."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None,
                 source: Optional[str] = None):
        self.field = field
        self.line = line
        self.source = source
        location = ""
        if source:
            location = f"{source}:{line}: " if line else f"{source}: "
        prefix = f"{location}{field}: " if field else location
        super().__init__(prefix + message)


def _parse_float(value: Any) -> float:
    if isinstance(value, bool):
        raise ValueError("expected a number, got a boolean")
    result = float(value)
    if not math.isfinite(result):
        raise ValueError(f"expected a finite number, got {value!r}")
    return result


def _parse_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("expected an integer, got a boolean")
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true or false, got {value!r}")


def _parse_optional_float(value: Any) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "null")):
        return None
    return _parse_float(value)


def _parse_optional_str(value: Any) -> Optional[str]:
    if value is None:
        return None
    return str(value)


def _parse_length(value: Any) -> Union[float, str]:
    if isinstance(value, str) and value.strip().lower() == "auto":
        return "auto"
    result = _parse_float(value)
    if result <= 0:
        raise ValueError(f"box length must be positive, got {value!r}")
    return result


def parse_float_list(value: Any) -> List[float]:
    """
    Accepts a list, "a,b,c", a linear range "start:stop:step" (stop included)
    or a log range "log:start:stop:count".
    """
    if isinstance(value, (list, tuple)):
        return [_parse_float(v) for v in value]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [_parse_float(value)]
    text = str(value).strip()
    if not text:
        return []
    if text.startswith("log:"):
        parts = text[4:].split(":")
        if len(parts) != 3:
            raise ValueError(f"log range must be log:start:stop:count, got {text!r}")
        start, stop, count = _parse_float(parts[0]), _parse_float(parts[1]), _parse_int(float(parts[2]))
        if start <= 0 or stop <= 0 or count < 1:
            raise ValueError(f"log range needs positive bounds and count, got {text!r}")
        return [float(x) for x in np.geomspace(start, stop, count)]
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (_parse_float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"range needs step > 0 and stop >= start, got {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    return [_parse_float(part) for part in text.split(",") if part.strip()]


FIELD_PARSERS: Dict[str, Callable[[Any], Any]] = {
    "command": str,
    "p": _parse_float,
    "d": _parse_int,
    "n": _parse_int,
    "L": _parse_length,
    "span": _parse_float,
    "rho": _parse_float,
    "rho_list": parse_float_list,
    "dt_imag": _parse_optional_float,
    "tol": _parse_float,
    "max_iters": _parse_int,
    "seed_profile": str,
    "warm_start": _parse_bool,
    "mu_count": _parse_int,
    "dt": _parse_float,
    "t_end": _parse_float,
    "record_stride": _parse_int,
    "strict": _parse_bool,
    "deltas": parse_float_list,
    "seed": _parse_int,
    "separations": parse_float_list,
    "bump_radius": _parse_float,
    "N_dim": _parse_int,
    "s0": _parse_float,
    "F": str,
    "Rn": parse_float_list,
    "lam": parse_float_list,
    "quadrature": str,
    "out": str,
    "input": _parse_optional_str,
}


@dataclass
class ExperimentConfig:
    """One experiment: every knob of every subcommand, resolved from defaults, file and flags."""
    command: str
    p: float
    d: int
    n: int
    L: Union[float, str]
    span: float
    rho: float
    rho_list: List[float]
    dt_imag: Optional[float]
    tol: float
    max_iters: int
    seed_profile: str
    warm_start: bool
    mu_count: int
    dt: float
    t_end: float
    record_stride: int
    strict: bool
    deltas: List[float]
    seed: int
    separations: List[float]
    bump_radius: float
    N_dim: int
    s0: float
    F: str
    Rn: List[float]
    lam: List[float]
    quadrature: str
    out: str
    input: Optional[str]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def model_params(self) -> ModelParams:
        if self.command in BIHARMONIC_COMMANDS:
            return ModelParams(kind=BIHARMONIC, nonlinearity=self.nonlinearity())
        return ModelParams(p=self.p)

    def nonlinearity(self) -> PowerSumNonlinearity:
        return parse_nonlinearity(self.F)

    def solver_config(self, rho: Optional[float] = None) -> SolverConfig:
        return SolverConfig(
            rho=self.rho if rho is None else rho,
            dt_imag=self.dt_imag,
            tol=self.tol,
            max_iters=self.max_iters,
            seed_profile=self.seed_profile,
        )

    def propagator_config(self) -> PropagatorConfig:
        return PropagatorConfig(self.dt, self.t_end, self.record_stride, self.strict)


def _line_of(text: str, key: str) -> Optional[int]:
    pattern = re.compile(r"^\s*[\"']?" + re.escape(key) + r"[\"']?\s*:")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return number
    return None


def _read_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}", source=str(path)) from e
    stripped = re.sub(r"//[^\n]*|/\*.*?\*/", "", text, flags=re.S).strip()
    if not stripped or re.sub(r"\s+", "", stripped) == "{}":
        raise ConfigError("config file is empty", source=str(path))
    try:
        data = json5.loads(text)
    except ValueError as e:
        match = re.search(r"line (\d+)|<string>:(\d+)", str(e))
        line = int(next(g for g in match.groups() if g)) if match else None
        raise ConfigError(f"syntax error: {e}", source=str(path), line=line) from e
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a single object of key: value pairs",
                          source=str(path))
    data["__text__"] = text
    return data


def _apply(target: Dict[str, Any], data: Mapping[str, Any], source: str, text: str = "") -> None:
    for key, raw in data.items():
        if key == "__text__":
            continue
        parser = FIELD_PARSERS.get(key)
        line = _line_of(text, key) if text else None
        if parser is None:
            raise ConfigError("unknown key", field=key, source=source, line=line)
        try:
            target[key] = parser(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), field=key, source=source, line=line) from e


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None,
                command: Optional[str] = None) -> ExperimentConfig:
    """
    Resolve an ExperimentConfig. Precedence: overrides > config file > defaults.

    Args:
        path: Optional flat JSON5 config file
        overrides: Values from the command line (None entries are ignored)
        command: Subcommand name

    Returns:
        ExperimentConfig with every field parsed
    """
    values: Dict[str, Any] = {}
    defaults_text = DEFAULTS_PATH.read_text(encoding="utf-8")
    _apply(values, json5.loads(defaults_text), str(DEFAULTS_PATH), defaults_text)
    if path is not None:
        data = _read_file(path)
        _apply(values, data, str(path), data.get("__text__", ""))
    if overrides:
        _apply(values, {k: v for k, v in overrides.items() if v is not None}, "command line")
    if command is not None:
        values["command"] = command
    values.setdefault("command", "groundstate")
    missing = [f.name for f in fields(ExperimentConfig) if f.name not in values]
    if missing:
        raise ConfigError(f"missing keys {missing}", source=str(DEFAULTS_PATH))
    return ExperimentConfig(**values)


def _require(condition: bool, message: str, field: str) -> None:
    if not condition:
        raise ConfigError(message, field=field)


def validate(config: ExperimentConfig) -> Dict[str, Any]:
    """
    Check parameter ranges and classify the model regime.

    Returns:
        Dict with command, regime and warnings; raises ConfigError on invalid input
    """
    warnings: List[str] = []
    _require(config.command in COMMANDS, f"unknown command, expected one of {COMMANDS}", "command")
    try:
        make_grid(config.d, config.n, 1.0 if config.L == "auto" else config.L)
    except GridError as e:
        raise ConfigError(str(e), field="n") from e
    _require(config.rho > 0, f"must be positive, got {config.rho}", "rho")
    _require(config.tol > 0, f"must be positive, got {config.tol}", "tol")
    _require(config.max_iters >= 1, f"must be at least 1, got {config.max_iters}", "max_iters")
    _require(config.span > 0, f"must be positive, got {config.span}", "span")
    _require(config.dt > 0, f"must be positive, got {config.dt}", "dt")
    _require(config.t_end >= config.dt, f"must be at least dt={config.dt}", "t_end")
    _require(config.record_stride >= 1, "must be at least 1", "record_stride")
    _require(config.mu_count >= 1, "must be at least 1", "mu_count")
    _require(all(r > 0 for r in config.rho_list), "charges must be positive", "rho_list")
    _require(all(x >= 0 for x in config.deltas), "perturbation sizes must be non-negative", "deltas")
    _require(config.quadrature in ("quad", "gauss"), "must be 'quad' or 'gauss'", "quadrature")

    if config.command in SP_COMMANDS:
        _require(2.0 < config.p < 10.0 / 3.0,
                 f"p={config.p} lies outside (2, 10/3) where the energy is bounded below on the sphere",
                 "p")
        _require(config.d == 3, f"Schrodinger-Poisson runs need d=3, got {config.d}", "d")
        regime = config.model_params().regime
        if regime == "outside-theorem":
            warnings.append(f"p={config.p} is outside p=8/3 and 3<p<10/3; existence is not covered")
    elif config.command in BIHARMONIC_COMMANDS:
        try:
            config.nonlinearity()
        except ValueError as e:
            raise ConfigError(str(e), field="F") from e
        _require(config.N_dim >= 2, f"must be at least 2, got {config.N_dim}", "N_dim")
        _require(config.s0 > 0, f"must be positive, got {config.s0}", "s0")
        _require(all(r > 0 for r in config.Rn), "radii must be positive", "Rn")
        regime = "biharmonic"
        if config.N_dim <= 4 and config.command == "biharm-neg":
            warnings.append(f"N_dim={config.N_dim}: the plateau argument targets dimensions above 4")
    else:
        regime = "selftest"

    for message in warnings:
        logger.warning(message)
    return {"command": config.command, "regime": regime, "warnings": warnings}

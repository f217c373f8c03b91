"""JSON configuration documents for the command-line tools.

A config bundles the physical parameters (with an optional synthetic
recirculation matrix), the COP curve, the workload-trace settings, and the
integration settings. Scalars in vector-valued parameter fields broadcast
to all racks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import CopCurve, DataCenterParams
from .simulator import INJECTION_POLICIES, SimulationConfig, WorkloadTrace, generate_trace, synthesize_gamma

_TRACE_DEFAULTS = {
    "nominals": (0.4, 0.6),
    "jitter": 0.10,
    "interval_s": 450.0,
    "horizon_s": 86400.0,
    "seed": 1,
    "block_s": 43200.0,
}
_SIM_DEFAULTS = {"dt_s": 0.5, "stride": 1, "injection_policy": "proportional"}


@dataclass(frozen=True)
class TraceSpec:
    nominals: tuple[float, ...]
    jitter: float
    interval_s: float
    horizon_s: float
    seed: int
    block_s: float


@dataclass(frozen=True)
class SimSpec:
    dt_s: float
    stride: int
    injection_policy: str


@dataclass(frozen=True)
class ConfigDocument:
    """Parsed configuration: parameters plus trace and simulation settings."""

    params: DataCenterParams
    trace: TraceSpec
    sim: SimSpec
    description: str
    path: str

    def build_trace(self, seed: int | None = None) -> WorkloadTrace:
        t = self.trace
        return generate_trace(
            self.params,
            seed=t.seed if seed is None else seed,
            nominals=t.nominals,
            jitter=t.jitter,
            interval_s=t.interval_s,
            horizon_s=t.horizon_s,
            block_s=t.block_s,
        )

    def build_sim_config(self) -> SimulationConfig:
        return SimulationConfig(
            horizon=self.trace.horizon_s,
            dt=self.sim.dt_s,
            injection_policy=self.sim.injection_policy,
            sample_stride=self.sim.stride,
        )


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required field '{where}.{key}'")
    return section[key]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field '{where}' must be a number, got {type(value).__name__}")
    return float(value)


def _vector_or_scalar(value, where: str):
    if isinstance(value, list):
        return [_number(x, f"{where}[{i}]") for i, x in enumerate(value)]
    return _number(value, where)


def _parse_gamma(raw, n: int, where: str) -> np.ndarray:
    if isinstance(raw, dict):
        synth = _require(raw, "synthetic", where)
        level = _number(_require(synth, "level", f"{where}.synthetic"), f"{where}.synthetic.level")
        seed = int(_number(_require(synth, "seed", f"{where}.synthetic"), f"{where}.synthetic.seed"))
        try:
            return synthesize_gamma(n, level, seed)
        except ValueError as exc:
            raise ConfigError(f"{where}.synthetic: {exc}") from exc
    if isinstance(raw, list):
        matrix = np.asarray(raw, dtype=float)
        if matrix.shape != (n, n):
            raise ConfigError(f"field '{where}' must be an {n}x{n} matrix, got shape {matrix.shape}")
        return matrix
    raise ConfigError(f"field '{where}' must be a matrix or a {{\"synthetic\": ...}} object")


def load_config(path) -> ConfigDocument:
    """Read and structurally validate a configuration document.

    Raises ConfigError for unreadable files, malformed JSON (with the parse
    location), and missing or wrongly typed fields. Domain-level parameter
    violations are left to validate_params.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")

    psec = _require(doc, "params", "<root>")
    n = int(_number(_require(psec, "n", "params"), "params.n"))
    if n < 1:
        raise ConfigError(f"params.n must be >= 1, got {n}")
    gamma = _parse_gamma(_require(psec, "gamma", "params"), n, "params.gamma")

    cop_sec = doc.get("cop")
    if cop_sec is None:
        cop = CopCurve.default()
    else:
        try:
            cop = CopCurve(
                a=_number(_require(cop_sec, "a", "cop"), "cop.a"),
                b=_number(_require(cop_sec, "b", "cop"), "cop.b"),
                c=_number(_require(cop_sec, "c", "cop"), "cop.c"),
                tlo=_number(_require(cop_sec, "tlo", "cop"), "cop.tlo"),
                thi=_number(_require(cop_sec, "thi", "cop"), "cop.thi"),
            )
        except ValueError as exc:
            raise ConfigError(f"cop: {exc}") from exc

    kwargs = {}
    for name in ("flow", "mass", "v", "w", "dmax", "tsafe"):
        kwargs[name] = _vector_or_scalar(_require(psec, name, "params"), f"params.{name}")
    try:
        params = DataCenterParams(
            n=n,
            gamma=gamma,
            rho=_number(_require(psec, "rho", "params"), "params.rho"),
            cp=_number(_require(psec, "cp", "params"), "params.cp"),
            cop=cop,
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc

    tsec = {**_TRACE_DEFAULTS, **doc.get("trace", {})}
    nominals = tsec["nominals"]
    if not isinstance(nominals, (list, tuple)) or not nominals:
        raise ConfigError("trace.nominals must be a nonempty list of fractions")
    trace = TraceSpec(
        nominals=tuple(_number(x, f"trace.nominals[{i}]") for i, x in enumerate(nominals)),
        jitter=_number(tsec["jitter"], "trace.jitter"),
        interval_s=_number(tsec["interval_s"], "trace.interval_s"),
        horizon_s=_number(tsec["horizon_s"], "trace.horizon_s"),
        seed=int(_number(tsec["seed"], "trace.seed")),
        block_s=_number(tsec["block_s"], "trace.block_s"),
    )

    ssec = {**_SIM_DEFAULTS, **doc.get("sim", {})}
    policy = ssec["injection_policy"]
    if policy not in INJECTION_POLICIES:
        raise ConfigError(
            f"sim.injection_policy must be one of {list(INJECTION_POLICIES)}, got {policy!r}"
        )
    sim = SimSpec(
        dt_s=_number(ssec["dt_s"], "sim.dt_s"),
        stride=int(_number(ssec["stride"], "sim.stride")),
        injection_policy=policy,
    )

    return ConfigDocument(
        params=params,
        trace=trace,
        sim=sim,
        description=str(doc.get("description", "")),
        path=str(path),
    )

"""Physical parameters and the power/thermal equations of the rack-level model.

A data center is modeled as ``n`` thermal nodes (racks) coupled by an air
recirculation matrix ``gamma``: entry ``gamma[i, j]`` is the fraction of
rack i's exhaust airflow that re-enters rack j's inlet instead of returning
to the CRAC unit. Everything in this module is a pure function of immutable
inputs; units are SI with temperatures in degrees Celsius.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CopRangeError

_COP_GRID_POINTS = 65


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _as_vector(value, n: int, name: str) -> np.ndarray:
    """Coerce a scalar or length-n sequence to a read-only float vector."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name}: expected scalar or length-{n} vector, got shape {arr.shape}")
    return _freeze(arr.copy())


@dataclass(frozen=True)
class CopCurve:
    """Quadratic CRAC efficiency curve ``a*T**2 + b*T + c`` on [tlo, thi] degC.

    The curve must be strictly positive and strictly increasing on its
    validity interval; both are checked at construction on a dense grid
    plus the endpoints.
    """

    a: float
    b: float
    c: float
    tlo: float
    thi: float

    def __post_init__(self):
        if not self.thi > self.tlo:
            raise ValueError(f"COP validity interval empty: [{self.tlo}, {self.thi}]")
        grid = np.linspace(self.tlo, self.thi, _COP_GRID_POINTS)
        values = self.a * grid**2 + self.b * grid + self.c
        slope = 2.0 * self.a * grid + self.b
        if not np.all(values > 0.0):
            raise ValueError("COP curve not strictly positive on validity interval")
        if not np.all(slope > 0.0):
            raise ValueError("COP curve not strictly increasing on validity interval")

    @classmethod
    def default(cls) -> "CopCurve":
        """Library default for a water-chilled CRAC unit."""
        return cls(a=0.0068, b=0.0008, c=0.458, tlo=10.0, thi=35.0)

    def value(self, tsup: float) -> float:
        """Evaluate the curve, rejecting temperatures outside [tlo, thi]."""
        if not (self.tlo - 1e-12 <= tsup <= self.thi + 1e-12):
            raise CopRangeError(
                f"supply temperature {tsup:.6g} degC outside COP validity "
                f"interval [{self.tlo:g}, {self.thi:g}]"
            )
        return self.a * tsup**2 + self.b * tsup + self.c

    __call__ = value


@dataclass(frozen=True)
class DataCenterParams:
    """Physical and power constants of an n-rack data center.

    Vector fields accept scalars, which broadcast to all racks.

    Fields
    ------
    n       : number of racks.
    gamma   : (n, n) recirculation fractions; gamma[i, j] is the share of
              rack i's outflow recirculated into rack j.
    flow    : per-rack airflow, m^3/s.
    mass    : air mass per rack, kg.
    rho     : air density, kg/m^3.
    cp      : specific heat capacity of air, J/(degC kg).
    v       : idle power per rack, W.
    w       : power per active CPU, W/CPU.
    dmax    : computational capacity per rack, CPU.
    tsafe   : safe outlet-temperature threshold per rack, degC.
    cop     : CRAC efficiency curve.
    """

    n: int
    gamma: np.ndarray
    flow: np.ndarray
    mass: np.ndarray
    rho: float
    cp: float
    v: np.ndarray
    w: np.ndarray
    dmax: np.ndarray
    tsafe: np.ndarray
    cop: CopCurve = field(default_factory=CopCurve.default)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.shape != (self.n, self.n):
            raise ValueError(f"gamma: expected shape ({self.n}, {self.n}), got {gamma.shape}")
        object.__setattr__(self, "gamma", _freeze(gamma.copy()))
        for name in ("flow", "mass", "v", "w", "dmax", "tsafe"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), self.n, name))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "cp", float(self.cp))

    @property
    def capacity(self) -> float:
        """Total CPU capacity, sum of dmax."""
        return float(self.dmax.sum())


@dataclass(frozen=True)
class SystemState:
    """Instantaneous state: rack outlet temperatures, supply temperature, workload."""

    tout: np.ndarray
    tsup: float
    d: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        tout = np.asarray(self.tout, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if tout.ndim != 1 or d.shape != tout.shape:
            raise ValueError(f"tout and d must be equal-length vectors, got {tout.shape} and {d.shape}")
        object.__setattr__(self, "tout", _freeze(tout.copy()))
        object.__setattr__(self, "d", _freeze(d.copy()))
        object.__setattr__(self, "tsup", float(self.tsup))
        object.__setattr__(self, "time", float(self.time))


@dataclass(frozen=True)
class JobBatch:
    """A batch of jobs demanding ``cpus`` CPU units from its arrival time on."""

    cpus: int
    arrival: float

    def __post_init__(self):
        if int(self.cpus) < 1:
            raise ValueError(f"cpus must be >= 1, got {self.cpus}")
        object.__setattr__(self, "cpus", int(self.cpus))
        object.__setattr__(self, "arrival", float(self.arrival))


def validate_params(p: DataCenterParams) -> list[str]:
    """Check every parameter invariant; return a human-readable violation list.

    An empty list means the parameter set is valid. Violations are data,
    not faults: boundary inputs (e.g. a gamma row summing to exactly 1.0)
    are rejected with zero tolerance because the structural results
    downstream require strict inequalities.
    """
    violations = []
    g = p.gamma
    if np.any(g <= 0.0) or np.any(g >= 1.0):
        bad = np.argwhere((g <= 0.0) | (g >= 1.0))
        i, j = bad[0]
        violations.append(
            f"gamma entries must lie strictly in (0,1): gamma[{i},{j}] = {g[i, j]:.6g}"
            f" ({bad.shape[0]} offending entries)"
        )
    row_sums = g.sum(axis=1)
    for i in np.nonzero(row_sums >= 1.0)[0]:
        violations.append(f"gamma row {i} sum not < 1: {row_sums[i]:.9g}")
    for name in ("flow", "mass", "v", "w", "dmax", "tsafe"):
        vec = getattr(p, name)
        if np.any(vec <= 0.0):
            i = int(np.argmin(vec))
            violations.append(f"{name} not strictly positive: {name}[{i}] = {vec[i]:.6g}")
    if p.rho <= 0.0:
        violations.append(f"rho not strictly positive: {p.rho:.6g}")
    if p.cp <= 0.0:
        violations.append(f"cp not strictly positive: {p.cp:.6g}")
    return violations


def rack_power(p: DataCenterParams, d: np.ndarray) -> np.ndarray:
    """Per-rack power draw V + W d, in watts, for workload vector d (CPU)."""
    d = np.asarray(d, dtype=float)
    if d.shape != (p.n,):
        raise ValueError(f"d: expected shape ({p.n},), got {d.shape}")
    return p.v + p.w * d


def system_matrix_A(p: DataCenterParams) -> np.ndarray:
    """Thermal coupling matrix of the outlet-temperature dynamics, 1/s.

    Entry (i, j) is rho * (gamma[j, i] - delta_ij) * flow[j] / mass[i];
    the diagonal is strictly negative for valid parameters.
    """
    return p.rho * (p.gamma.T - np.eye(p.n)) * p.flow[np.newaxis, :] / p.mass[:, np.newaxis]


def heat_capacity_matrix_MA(p: DataCenterParams) -> np.ndarray:
    """Product of the thermal-mass matrix and the coupling matrix, W/degC.

    Equals rho * cp * (gamma.T - I) * diag(flow); the per-rack masses cancel,
    so no diagonal inverse is ever formed.
    """
    return p.rho * p.cp * (p.gamma.T - np.eye(p.n)) * p.flow[np.newaxis, :]


def input_matrix_B(p: DataCenterParams) -> np.ndarray:
    """Workload-to-temperature input matrix diag(w / (cp * mass)), degC/(s CPU)."""
    return np.diag(p.w / (p.cp * p.mass))


def thermal_derivative(p: DataCenterParams, s: SystemState) -> np.ndarray:
    """Time derivative of the outlet temperatures, degC/s."""
    a = system_matrix_A(p)
    return a @ (s.tout - s.tsup) + rack_power(p, s.d) / (p.cp * p.mass)


def heat_removed(p: DataCenterParams, s: SystemState) -> float:
    """Heat the CRAC must remove, W: net enthalpy of the return flows.

    Computed in matrix form; identical to summing
    rho*cp*(1 - sum_j gamma[i,j])*flow[i]*(tout[i] - tsup) over racks.
    """
    ma = heat_capacity_matrix_MA(p)
    return float(-np.ones(p.n) @ ma @ (s.tout - s.tsup))


def crac_power(p: DataCenterParams, s: SystemState) -> float:
    """CRAC power draw, W: heat removed divided by COP at the supply temperature."""
    return heat_removed(p, s) / p.cop.value(s.tsup)


def total_cost(p: DataCenterParams, s: SystemState) -> float:
    """Total electrical power of the data center, W: CRAC plus rack consumption."""
    return crac_power(p, s) + float(rack_power(p, s.d).sum())

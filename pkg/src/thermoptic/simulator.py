"""Closed-loop simulation under a piecewise-constant workload trace.

The stacked state (tout, tsup, d) is integrated with fixed-step RK4. At each
trace boundary an external entity injects or removes work according to a
configurable policy, the optimizer recomputes the setpoint offline, and the
feedback controllers drive the plant to it. The recorder keeps full time
series plus per-interval convergence metrics and certificate values.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerGains, certificate
from .errors import CapacityError, CopRangeError, DivergenceError
from .model import DataCenterParams, JobBatch, SystemState, total_cost
from .optimizer import OptimalSetpoint, solve_reduced
from .steady_state import compute_constants

logger = logging.getLogger(__name__)

INJECTION_POLICIES = ("proportional", "equal-split")


@dataclass(frozen=True)
class WorkloadTrace:
    """Piecewise-constant total demand: ordered (start_s, dstar) intervals."""

    intervals: tuple[tuple[float, float], ...]
    seed: int | None = None

    def __post_init__(self):
        ivs = tuple((float(t), float(d)) for t, d in self.intervals)
        if not ivs:
            raise ValueError("trace must contain at least one interval")
        starts = [t for t, _ in ivs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("trace intervals must have strictly increasing start times")
        if any(d < 0.0 for _, d in ivs):
            raise ValueError("trace demands must be nonnegative")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_job_batches(cls, batches: list[JobBatch]) -> "WorkloadTrace":
        """Aggregate job batches into cumulative total demand over time."""
        level = 0.0
        intervals = []
        if not batches or min(b.arrival for b in batches) > 0.0:
            intervals.append((0.0, 0.0))
        for arrival in sorted({b.arrival for b in batches}):
            level += sum(b.cpus for b in batches if b.arrival == arrival)
            intervals.append((arrival, level))
        return cls(tuple(intervals))

    def dstar_at(self, t: float) -> float:
        starts = [s for s, _ in self.intervals]
        idx = bisect.bisect_right(starts, t) - 1
        if idx < 0:
            raise ValueError(f"time {t:g} precedes the first trace interval at {starts[0]:g}")
        return self.intervals[idx][1]


def generate_trace(
    p: DataCenterParams,
    seed: int,
    nominals: tuple[float, float] = (0.4, 0.6),
    jitter: float = 0.10,
    interval_s: float = 450.0,
    horizon_s: float = 86400.0,
    block_s: float = 43200.0,
) -> WorkloadTrace:
    """Synthesize a day/night demand trace.

    Total demand alternates between nominal fractions of capacity in blocks
    of ``block_s`` seconds, re-drawn uniformly within ``+-jitter`` of the
    nominal every ``interval_s`` seconds. Deterministic for a given seed.
    """
    cap = p.capacity
    for nom in nominals:
        if nom * (1.0 + jitter) > 1.0 + 1e-12:
            raise CapacityError(
                f"nominal fraction {nom:g} with jitter {jitter:g} exceeds total capacity"
            )
    rng = np.random.default_rng(seed)
    intervals = []
    t = 0.0
    while t < horizon_s:
        nom = nominals[int(t // block_s) % len(nominals)]
        frac = nom * (1.0 + rng.uniform(-jitter, jitter))
        intervals.append((t, frac * cap))
        t += interval_s
    return WorkloadTrace(tuple(intervals), seed=seed)


def inject_workload_change(d_current: np.ndarray, dstar_new: float, policy: str) -> np.ndarray:
    """Redistribute the rack workloads so they sum to the new total demand.

    ``proportional`` rescales the current distribution (falling back to an
    equal split when the data center is idle); ``equal-split`` spreads the
    increment uniformly.
    """
    d = np.asarray(d_current, dtype=float)
    if dstar_new < 0.0:
        raise CapacityError(f"new total demand must be nonnegative, got {dstar_new:g}")
    if policy not in INJECTION_POLICIES:
        raise ValueError(f"unknown injection policy {policy!r}; expected one of {INJECTION_POLICIES}")
    tot = float(d.sum())
    if policy == "proportional":
        if tot <= 0.0:
            logger.debug("idle data center: proportional injection falls back to equal split")
        else:
            return d * (dstar_new / tot)
    return d + (dstar_new - tot) / d.shape[0]


def synthesize_gamma(n: int, recirculation_level: float, seed: int) -> np.ndarray:
    """Random recirculation matrix with every row summing to the given level.

    Off-diagonal mass dominates a small diagonal; a few balancing sweeps keep
    the column sums near the level as well, so the synthesized matrix also
    satisfies the flow-conservation requirement behind the stability proofs.
    Deterministic for a given seed.
    """
    if not 0.0 < recirculation_level < 1.0:
        raise ValueError(f"recirculation level must lie in (0, 1), got {recirculation_level:g}")
    if n == 1:
        return np.array([[recirculation_level]])
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.2, 1.0, size=(n, n))
    raw[np.diag_indices(n)] = rng.uniform(0.01, 0.05, size=n)
    for _ in range(12):
        raw /= raw.sum(axis=0, keepdims=True)
        raw /= raw.sum(axis=1, keepdims=True)
    return recirculation_level * raw


@dataclass(frozen=True)
class SimulationConfig:
    """Integration and recording settings for a closed-loop run."""

    horizon: float
    dt: float = 0.5
    injection_policy: str = "proportional"
    sample_stride: int = 1
    convergence_band: float = 0.05
    convergence_hold: int = 10
    initial_state: SystemState | None = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt:g}")
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon:g}")
        if self.sample_stride < 1:
            raise ValueError(f"sample_stride must be >= 1, got {self.sample_stride}")
        if self.injection_policy not in INJECTION_POLICIES:
            raise ValueError(
                f"unknown injection policy {self.injection_policy!r}; expected one of {INJECTION_POLICIES}"
            )


class _ClosedLoop:
    """Precomputed closed-loop derivative and RK4 stepper."""

    def __init__(self, p: DataCenterParams, g: ControllerGains):
        self.n = p.n
        self.a = g.a
        self.v = p.v
        self.w = p.w
        self.cpm = p.cp * p.mass
        self.tsafe = g.tsafe
        self.tsup_row = g.z @ (g.a @ np.ones(p.n))
        self.bz = g.b.T @ g.z

    def deriv(self, y: np.ndarray) -> np.ndarray:
        n = self.n
        tout = y[:n]
        tsup = y[n]
        d = y[n + 1 :]
        dy = np.empty_like(y)
        dy[:n] = self.a @ (tout - tsup) + (self.v + self.w * d) / self.cpm
        t_err = tout - self.tsafe
        dy[n] = self.tsup_row @ t_err
        raw = self.bz @ t_err
        dy[n + 1 :] = raw.mean() - raw
        return dy

    def rk4(self, y: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.deriv(y)
        k2 = self.deriv(y + 0.5 * dt * k1)
        k3 = self.deriv(y + 0.5 * dt * k2)
        k4 = self.deriv(y + dt * k3)
        return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _pack(s: SystemState) -> np.ndarray:
    return np.concatenate([s.tout, [s.tsup], s.d])


def _unpack(y: np.ndarray, n: int, time: float) -> SystemState:
    return SystemState(tout=y[:n], tsup=float(y[n]), d=y[n + 1 :], time=time)


def step(p: DataCenterParams, g: ControllerGains, s: SystemState, dt: float = 0.5) -> SystemState:
    """Advance the closed loop by one RK4 step of size dt."""
    y = _ClosedLoop(p, g).rk4(_pack(s), dt)
    if not np.all(np.isfinite(y)):
        raise DivergenceError("state became non-finite", time=s.time + dt, last_state=s)
    return _unpack(y, p.n, s.time + dt)


@dataclass(frozen=True)
class IntervalMetrics:
    """Convergence bookkeeping for one constant-demand interval."""

    index: int
    start_s: float
    dstar: float
    setpoint: OptimalSetpoint
    convergence_time_s: float | None
    max_abs_tout_dev: float
    cert_final: float
    interior_violated: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "start_s": self.start_s,
            "dstar": self.dstar,
            "tsup_bar": float(self.setpoint.tsup_bar),
            "cost_w": float(self.setpoint.cost),
            "active_set": sorted(self.setpoint.active_set),
            "convergence_time_s": self.convergence_time_s,
            "max_abs_tout_dev": self.max_abs_tout_dev,
            "cert_final": self.cert_final,
            "interior_violated": self.interior_violated,
        }


@dataclass(frozen=True)
class SimulationRecord:
    """Sampled time series and per-interval metrics of one closed-loop run."""

    time: np.ndarray
    tout: np.ndarray
    tsup: np.ndarray
    d: np.ndarray
    dstar: np.ndarray
    cost: np.ndarray
    cert_v: np.ndarray
    cert_xi1: np.ndarray
    cert_xi2: np.ndarray
    cert_total: np.ndarray
    interval_index: np.ndarray
    intervals: tuple[IntervalMetrics, ...]
    dt: float
    sample_stride: int
    injection_policy: str
    warnings: tuple[str, ...] = field(default=())

    @property
    def n_samples(self) -> int:
        return self.time.shape[0]

    def to_csv(self, path) -> None:
        """Write one row per sample with 9-significant-digit floats."""
        n = self.tout.shape[1]
        header = (
            ["time_s"]
            + [f"tout_{i + 1}" for i in range(n)]
            + ["tsup"]
            + [f"d_{i + 1}" for i in range(n)]
            + ["dstar", "cost_w", "cert_v", "cert_xi1", "cert_xi2", "cert_total"]
        )
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in range(self.n_samples):
                values = (
                    [self.time[row]]
                    + list(self.tout[row])
                    + [self.tsup[row]]
                    + list(self.d[row])
                    + [
                        self.dstar[row],
                        self.cost[row],
                        self.cert_v[row],
                        self.cert_xi1[row],
                        self.cert_xi2[row],
                        self.cert_total[row],
                    ]
                )
                fh.write(",".join(format(v, ".9g") for v in values) + "\n")

    def metrics_dict(self) -> dict:
        conv = [m.convergence_time_s for m in self.intervals]
        return {
            "n_samples": self.n_samples,
            "dt_s": self.dt,
            "sample_stride": self.sample_stride,
            "injection_policy": self.injection_policy,
            "mean_cost_w": float(np.nanmean(self.cost)),
            "max_abs_tout_dev": max((m.max_abs_tout_dev for m in self.intervals), default=0.0),
            "intervals_converged": sum(1 for c in conv if c is not None),
            "interval_count": len(self.intervals),
            "max_convergence_time_s": max((c for c in conv if c is not None), default=None),
            "intervals": [m.to_dict() for m in self.intervals],
            "warnings": list(self.warnings),
        }


def run(p: DataCenterParams, trace: WorkloadTrace, config: SimulationConfig) -> SimulationRecord:
    """Simulate the closed loop over the trace and record series and metrics.

    Setpoints are recomputed offline at every interval start; injections
    happen at the same instant. Convergence within an interval is declared
    at the first sample opening a run of ``convergence_hold`` consecutive
    samples with max outlet-temperature deviation below
    ``convergence_band``. Workloads leaving the open interior (0, dmax) are
    reported as warnings, never clipped.
    """
    k = compute_constants(p)
    g = ControllerGains.from_params(p)
    loop = _ClosedLoop(p, g)
    n = p.n
    dt = config.dt
    cap = p.capacity
    for t0, dstar in trace.intervals:
        if dstar > cap + 1e-9 * max(1.0, cap):
            raise CapacityError(f"trace demand {dstar:g} at t={t0:g}s exceeds capacity {cap:g}")
    if trace.intervals[0][0] != 0.0:
        raise ValueError("trace must start at t = 0")
    if config.horizon < (trace.intervals[1][0] if len(trace.intervals) > 1 else 0.0):
        raise ValueError("horizon shorter than the first trace interval")

    total_steps = int(round(config.horizon / dt))
    boundary_steps: dict[int, float] = {}
    for t0, dstar in trace.intervals:
        idx = int(round(t0 / dt))
        if idx > total_steps:
            continue
        if abs(idx * dt - t0) > 1e-9 * max(1.0, t0):
            logger.warning("interval start %.6g s is off the dt grid; snapping to %.6g s", t0, idx * dt)
        boundary_steps[idx] = dstar

    stride = config.sample_stride
    n_samples = total_steps // stride + 1
    rec_time = np.empty(n_samples)
    rec_tout = np.empty((n_samples, n))
    rec_tsup = np.empty(n_samples)
    rec_d = np.empty((n_samples, n))
    rec_dstar = np.empty(n_samples)
    rec_cost = np.empty(n_samples)
    rec_v = np.empty(n_samples)
    rec_xi1 = np.empty(n_samples)
    rec_xi2 = np.empty(n_samples)
    rec_total = np.empty(n_samples)
    rec_interval = np.empty(n_samples, dtype=int)

    metrics: list[IntervalMetrics] = []
    warnings_log: list[str] = []
    cop_warned = False

    setpoint: OptimalSetpoint | None = None
    dstar_now = 0.0
    interval_idx = -1
    interval_start = 0.0
    conv_time: float | None = None
    streak = 0
    streak_start = 0.0
    max_dev = 0.0
    interior_violated = False
    last_cert_total = 0.0

    def close_interval():
        if setpoint is None:
            return
        metrics.append(
            IntervalMetrics(
                index=interval_idx,
                start_s=interval_start,
                dstar=dstar_now,
                setpoint=setpoint,
                convergence_time_s=conv_time,
                max_abs_tout_dev=max_dev,
                cert_final=last_cert_total,
                interior_violated=interior_violated,
            )
        )

    y = np.empty(2 * n + 1)
    for idx in range(total_steps + 1):
        t = idx * dt
        if idx in boundary_steps:
            close_interval()
            dstar_now = boundary_steps[idx]
            interval_idx += 1
            interval_start = t
            conv_time = None
            streak = 0
            max_dev = 0.0
            interior_violated = False
            setpoint = solve_reduced(p, k, dstar_now)
            if idx == 0:
                if config.initial_state is not None:
                    y = _pack(config.initial_state)
                else:
                    y = np.concatenate(
                        [setpoint.tout_bar, [setpoint.tsup_bar], setpoint.d_bar]
                    )
            else:
                y[n + 1 :] = inject_workload_change(y[n + 1 :], dstar_now, config.injection_policy)

        d_now = y[n + 1 :]
        if not interior_violated and (np.any(d_now <= 0.0) or np.any(d_now >= p.dmax)):
            interior_violated = True
            msg = (
                f"interval {interval_idx}: workload left the open interior (0, dmax) "
                f"at t = {t:.6g} s; trajectory not clipped"
            )
            warnings_log.append(msg)
            logger.warning(msg)

        state = _unpack(y, n, t)
        cert = certificate(g, state, setpoint)
        last_cert_total = cert.total
        dev = float(np.abs(state.tout - setpoint.tout_bar).max())
        max_dev = max(max_dev, dev)

        if idx % stride == 0:
            row = idx // stride
            rec_time[row] = t
            rec_tout[row] = state.tout
            rec_tsup[row] = state.tsup
            rec_d[row] = state.d
            rec_dstar[row] = dstar_now
            rec_interval[row] = interval_idx
            try:
                rec_cost[row] = total_cost(p, state)
            except CopRangeError as exc:
                rec_cost[row] = np.nan
                if not cop_warned:
                    cop_warned = True
                    msg = f"cost column: {exc}"
                    warnings_log.append(msg)
                    logger.warning(msg)
            rec_v[row] = cert.v
            rec_xi1[row] = cert.xi1
            rec_xi2[row] = cert.xi2
            rec_total[row] = cert.total
            if dev < config.convergence_band:
                if streak == 0:
                    streak_start = t
                streak += 1
                if streak >= config.convergence_hold and conv_time is None:
                    conv_time = streak_start - interval_start
            else:
                streak = 0

        if idx < total_steps:
            y = loop.rk4(y, dt)
            if not np.all(np.isfinite(y)):
                raise DivergenceError(
                    "simulation diverged",
                    time=t + dt,
                    last_state=state,
                )

    close_interval()
    return SimulationRecord(
        time=rec_time,
        tout=rec_tout,
        tsup=rec_tsup,
        d=rec_d,
        dstar=rec_dstar,
        cost=rec_cost,
        cert_v=rec_v,
        cert_xi1=rec_xi1,
        cert_xi2=rec_xi2,
        cert_total=rec_total,
        interval_index=rec_interval,
        intervals=tuple(metrics),
        dt=dt,
        sample_stride=stride,
        injection_policy=config.injection_policy,
        warnings=tuple(warnings_log),
    )

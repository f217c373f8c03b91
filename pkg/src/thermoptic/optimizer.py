"""Energy-minimal setpoint solver.

For a homogeneous data center the energy-minimization problem reduces to a
linear program in the outlet-temperature profile:

    maximize   c1 . tout
    subject to 0 <= c3 @ tout + c4(dstar) <= dmax,   tout <= tsafe.

This module solves it through its KKT characterization with an active-set
procedure, returning primal setpoints together with certified multipliers,
and ships an independent brute-force validator based on vertex enumeration.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ActiveSetError, CapacityError, CopRangeError, HeterogeneousRacksError
from .model import DataCenterParams, SystemState, total_cost
from .steady_state import (
    SteadyStateConstants,
    steady_supply_temperature,
    steady_workload_distribution,
)

logger = logging.getLogger(__name__)

_MULT_NEG_TOL = 1e-12
_KKT_TOL = 1e-8


@dataclass(frozen=True)
class OptimalSetpoint:
    """Energy-minimal operating point with its KKT certificate.

    ``mu`` are the multipliers of the temperature thresholds, ``mu_plus`` /
    ``mu_minus`` those of the upper/lower workload bounds. ``active_set``
    collects racks pinned at full capacity, ``lower_active_set`` racks pinned
    at zero workload. Multipliers are None for primal-only results (the
    brute-force validator). ``degenerate`` marks the dstar endpoints where
    the feasible workload distribution is unique.
    """

    tout_bar: np.ndarray
    tsup_bar: float
    d_bar: np.ndarray
    mu: np.ndarray | None
    mu_plus: np.ndarray | None
    mu_minus: np.ndarray | None
    active_set: frozenset[int]
    cost: float
    lower_active_set: frozenset[int] = frozenset()
    degenerate: bool = False

    def __post_init__(self):
        for name in ("tout_bar", "d_bar", "mu", "mu_plus", "mu_minus"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "active_set", frozenset(int(i) for i in self.active_set))
        object.__setattr__(self, "lower_active_set", frozenset(int(i) for i in self.lower_active_set))

    def to_dict(self) -> dict:
        def vec(x):
            return None if x is None else [float(xi) for xi in x]

        return {
            "tout_bar": vec(self.tout_bar),
            "tsup_bar": float(self.tsup_bar),
            "d_bar": vec(self.d_bar),
            "mu": vec(self.mu),
            "mu_plus": vec(self.mu_plus),
            "mu_minus": vec(self.mu_minus),
            "active_set": sorted(self.active_set),
            "lower_active_set": sorted(self.lower_active_set),
            "cost_w": float(self.cost),
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class KktReport:
    """Per-block residuals of the KKT system for a candidate setpoint."""

    stationarity: float
    comp_upper: float
    comp_lower: float
    comp_temperature: float
    primal_box: float
    primal_temperature: float
    primal_total: float
    primal_consistency: float
    multiplier_negativity: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def max_residual(self) -> float:
        return max(
            self.stationarity,
            self.comp_upper,
            self.comp_lower,
            self.comp_temperature,
            self.primal_box,
            self.primal_temperature,
            self.primal_total,
            self.primal_consistency,
        )


def _require_homogeneous(p: DataCenterParams) -> None:
    for name in ("v", "w"):
        vec = getattr(p, name)
        if float(np.ptp(vec)) > 1e-9 * max(1.0, float(np.abs(vec).max())):
            raise HeterogeneousRacksError(
                f"rack power characteristics must be identical for the reduced "
                f"problem to be equivalent to the original one; '{name}' varies "
                f"across racks (min {vec.min():.6g}, max {vec.max():.6g})"
            )


def _implied_setpoint(
    k: SteadyStateConstants,
    tout: np.ndarray,
    dstar: float,
    mu=None,
    mu_plus=None,
    mu_minus=None,
    active=frozenset(),
    lower_active=frozenset(),
    degenerate=False,
) -> OptimalSetpoint:
    return OptimalSetpoint(
        tout_bar=tout,
        tsup_bar=steady_supply_temperature(k, tout, dstar),
        d_bar=steady_workload_distribution(k, tout, dstar),
        mu=mu,
        mu_plus=mu_plus,
        mu_minus=mu_minus,
        active_set=active,
        lower_active_set=lower_active,
        cost=float("nan"),
        degenerate=degenerate,
    )


def kkt_inactive_solution(k: SteadyStateConstants, tsafe: np.ndarray, dstar: float) -> OptimalSetpoint:
    """Closed-form candidate for the regime with no binding workload bound.

    Every outlet temperature sits at its threshold and the temperature
    multipliers equal c1. The caller must verify the implied workload is
    strictly inside its box before accepting the candidate; cost is left NaN
    until the candidate is accepted.
    """
    n = k.n
    return _implied_setpoint(
        k,
        np.asarray(tsafe, dtype=float),
        dstar,
        mu=k.c1.copy(),
        mu_plus=np.zeros(n),
        mu_minus=np.zeros(n),
    )


def kkt_partially_active_solution(
    k: SteadyStateConstants,
    p: DataCenterParams,
    dstar: float,
    active: frozenset[int],
) -> OptimalSetpoint:
    """Closed-form candidate when the racks in ``active`` run at full capacity.

    Outlet temperatures of the remaining racks sit at their thresholds; the
    active racks' temperatures solve the linear system that pins their
    workload at dmax. Workload multipliers come from the stationarity
    equations restricted to the active block (least-squares on that block),
    and a negative one, or an active temperature above its threshold,
    signals that the caller picked the wrong active set.
    """
    n = k.n
    act = sorted(int(i) for i in active)
    if not act or len(act) >= n:
        raise ValueError(f"active set must be a nonempty strict subset of 0..{n - 1}, got {act}")
    inact = [i for i in range(n) if i not in set(act)]
    c3 = k.c3
    c4 = k.c4(dstar)
    block = c3[np.ix_(act, act)]
    rhs = p.dmax[act] - c4[act] - c3[np.ix_(act, inact)] @ p.tsafe[inact]
    sol, _, rank, _ = np.linalg.lstsq(block, rhs, rcond=None)
    if rank < len(act):
        raise ActiveSetError(f"active block is singular (rank {rank} < {len(act)}) for active set {act}")
    tout = p.tsafe.copy()
    tout[act] = sol
    nu_act, _, rank_nu, _ = np.linalg.lstsq(block.T, k.c1[act], rcond=None)
    if rank_nu < len(act):
        raise ActiveSetError(f"multiplier block is singular for active set {act}")
    mu_plus = np.zeros(n)
    mu_plus[act] = nu_act
    mu = k.c1 - c3.T @ mu_plus
    return _implied_setpoint(
        k,
        tout,
        dstar,
        mu=mu,
        mu_plus=mu_plus,
        mu_minus=np.zeros(n),
        active=frozenset(act),
    )


def check_kkt(
    setpoint: OptimalSetpoint,
    k: SteadyStateConstants,
    p: DataCenterParams,
    dstar: float,
    tol: float = _KKT_TOL,
) -> KktReport:
    """Evaluate all KKT residual blocks for a candidate setpoint.

    The workload blocks are evaluated on the distribution implied by
    ``tout_bar`` through the steady-state map (the reduced problem's only
    primal variable); any gap between that and the stored ``d_bar`` shows up
    as the ``primal_consistency`` residual.
    """
    if setpoint.mu is None or setpoint.mu_plus is None or setpoint.mu_minus is None:
        raise ValueError("setpoint carries no multipliers; cannot evaluate the KKT system")
    tout = setpoint.tout_bar
    d = steady_workload_distribution(k, tout, dstar)
    mu, mup, mum = setpoint.mu, setpoint.mu_plus, setpoint.mu_minus
    stationarity = float(np.abs(-k.c1 + mu + k.c3.T @ (mup - mum)).max())
    comp_upper = abs(float(mup @ (d - p.dmax)))
    comp_lower = abs(float(mum @ d))
    comp_temp = abs(float(mu @ (tout - p.tsafe)))
    box_scale = np.maximum(p.dmax, 1.0)
    primal_box = float((np.maximum(np.maximum(d - p.dmax, -d), 0.0) / box_scale).max())
    primal_temp = float(np.maximum(tout - p.tsafe, 0.0).max() / max(1.0, float(np.abs(p.tsafe).max())))
    primal_total = abs(float(d.sum()) - dstar) / max(1.0, abs(dstar))
    primal_consistency = float((np.abs(setpoint.d_bar - d) / box_scale).max())
    mult_neg = float(max(0.0, -min(mu.min(), mup.min(), mum.min())))
    passed = (
        max(
            stationarity,
            comp_upper,
            comp_lower,
            comp_temp,
            primal_box,
            primal_temp,
            primal_total,
            primal_consistency,
        )
        < tol
        and mult_neg <= _MULT_NEG_TOL
    )
    return KktReport(
        stationarity=stationarity,
        comp_upper=comp_upper,
        comp_lower=comp_lower,
        comp_temperature=comp_temp,
        primal_box=primal_box,
        primal_temperature=primal_temp,
        primal_total=primal_total,
        primal_consistency=primal_consistency,
        multiplier_negativity=mult_neg,
        passed=passed,
    )


_ORACLE_MAX_N = 6


def brute_force_oracle(k: SteadyStateConstants, p: DataCenterParams, dstar: float) -> OptimalSetpoint:
    """Exact primal optimum by enumerating candidate vertices of the polytope.

    Solves every n-subset of the 3n constraint rows, keeps the feasible
    solutions, and returns the best one. Exponential in n, hence capped at
    small instances; entirely independent of the active-set path.
    """
    n = k.n
    if n > _ORACLE_MAX_N:
        raise ValueError(f"brute-force validation is limited to n <= {_ORACLE_MAX_N}, got n = {n}")
    c4 = k.c4(dstar)
    rows = np.vstack([np.eye(n), k.c3, -k.c3])
    rhs = np.concatenate([p.tsafe, p.dmax - c4, c4])
    feas_tol = 1e-9 * max(1.0, float(np.abs(rhs).max()))
    best_obj = -np.inf
    best_tout = None
    for subset in itertools.combinations(range(3 * n), n):
        sub = list(subset)
        try:
            tout = np.linalg.solve(rows[sub], rhs[sub])
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(tout)):
            continue
        if float(np.abs(rows[sub] @ tout - rhs[sub]).max()) > 1e-7 * (1.0 + float(np.abs(rhs).max())):
            continue  # ill-conditioned subset, not a trustworthy vertex
        if np.any(rows @ tout > rhs + feas_tol):
            continue
        obj = float(k.c1 @ tout)
        if obj > best_obj:
            best_obj = obj
            best_tout = tout
    if best_tout is None:
        raise CapacityError(f"no feasible vertex found for dstar = {dstar:g}")
    sp = _implied_setpoint(k, best_tout, dstar)
    d = sp.d_bar
    active = frozenset(int(i) for i in np.nonzero(d >= p.dmax - 1e-9 * p.dmax)[0])
    lower = frozenset(int(i) for i in np.nonzero(d <= 1e-9 * p.dmax)[0])
    sp = replace(sp, active_set=active, lower_active_set=lower)
    return replace(sp, cost=_steady_cost(p, sp))


def _steady_cost(p: DataCenterParams, sp: OptimalSetpoint) -> float:
    try:
        return total_cost(p, SystemState(tout=sp.tout_bar, tsup=sp.tsup_bar, d=sp.d_bar))
    except CopRangeError as exc:
        logger.warning("setpoint cost not evaluable: %s", exc)
        return float("nan")


def _upper_active_set_loop(
    p: DataCenterParams, k: SteadyStateConstants, dstar: float
) -> OptimalSetpoint | None:
    """Active-set iteration over the full-capacity constraints.

    Starting from the all-thresholds candidate: add the most violated upper
    workload bound, drop a rack whose multiplier turns negative or whose
    pinned temperature exceeds its threshold (wrong active set), lowest
    index breaking ties. Returns None when the instance is outside this
    loop's regime (a lower workload bound activates, the set would grow to
    all racks, or the iteration budget of 2n is exhausted).
    """
    n = k.n
    slack_tol = 1e-9 * p.dmax
    tsafe_tol = 1e-9 * np.maximum(np.abs(p.tsafe), 1.0)
    active: set[int] = set()
    for _ in range(2 * n):
        if active:
            try:
                cand = kkt_partially_active_solution(k, p, dstar, frozenset(active))
            except ActiveSetError:
                return None
        else:
            cand = kkt_inactive_solution(k, p.tsafe, dstar)
        d = cand.d_bar
        if active:
            nu = cand.mu_plus[sorted(active)]
            if np.any(nu < -_MULT_NEG_TOL):
                order = sorted(active)
                drop = order[int(np.argmin(nu))]
                active.discard(drop)
                continue
            temps = cand.tout_bar - p.tsafe
            offenders = [i for i in sorted(active) if temps[i] > tsafe_tol[i]]
            if offenders:
                active.discard(offenders[0])
                continue
        if np.any(d < -slack_tol):
            return None  # lower workload bound activates
        violation = d - (p.dmax - slack_tol)
        violation[sorted(active)] = -np.inf
        if np.any(violation > 0.0):
            if len(active) == n - 1:
                return None  # would pin every rack; endpoint regime
            excess = np.where(violation > 0.0, d - p.dmax, -np.inf)
            active.add(int(np.argmax(excess)))
            continue
        return cand
    logger.warning("active-set loop exhausted its 2n iteration budget at dstar=%g", dstar)
    return None


def _lp_fallback(
    p: DataCenterParams, k: SteadyStateConstants, dstar: float
) -> OptimalSetpoint:
    """Resolve regimes the closed-form loop cannot represent.

    The structured loop frees the pinned racks' own temperatures, which is
    provably infeasible when a lower workload bound binds (lifting a starved
    rack's workload requires cooling the other racks, not heating it). Here
    the primal is solved as a plain LP, snapped onto its binding rows, and
    the multipliers are recovered as the nonnegative least-squares solution
    of the stationarity system on those rows.
    """
    from scipy.optimize import linprog, nnls

    n = k.n
    c4 = k.c4(dstar)
    a_ub = np.vstack([np.eye(n), k.c3, -k.c3])
    b_ub = np.concatenate([p.tsafe, p.dmax - c4, c4])
    res = linprog(-k.c1, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * n, method="highs")
    if not res.success:
        raise ActiveSetError(f"LP fallback failed at dstar = {dstar:g}: {res.message}")
    x = np.asarray(res.x, dtype=float)
    row_scale = np.maximum(np.abs(b_ub), 1.0)
    last_err: OptimalSetpoint | None = None
    for bind_tol in (1e-8, 1e-6, 1e-4):
        slack = b_ub - a_ub @ x
        binding = np.nonzero(slack <= bind_tol * row_scale)[0]
        if binding.size == 0:
            continue
        snapped, _, _, _ = np.linalg.lstsq(a_ub[binding], b_ub[binding], rcond=None)
        if float(np.max(a_ub @ snapped - b_ub)) > 1e-9 * float(row_scale.max()):
            snapped = x
        cols = []
        col_kinds = []  # (kind, rack)
        for row in binding:
            if row < n:
                e = np.zeros(n)
                e[row] = 1.0
                cols.append(e)
                col_kinds.append(("mu", row))
            elif row < 2 * n:
                cols.append(k.c3[row - n])
                col_kinds.append(("mu_plus", row - n))
            else:
                cols.append(-k.c3[row - 2 * n])
                col_kinds.append(("mu_minus", row - 2 * n))
        coef, _ = nnls(np.column_stack(cols), k.c1)
        mu = np.zeros(n)
        mu_plus = np.zeros(n)
        mu_minus = np.zeros(n)
        for (kind, rack), value in zip(col_kinds, coef):
            if kind == "mu":
                mu[rack] += value
            elif kind == "mu_plus":
                mu_plus[rack] += value
            else:
                mu_minus[rack] += value
        sp = _implied_setpoint(k, snapped, dstar, mu=mu, mu_plus=mu_plus, mu_minus=mu_minus)
        d = sp.d_bar
        slack_tol = 1e-9 * p.dmax
        sp = replace(
            sp,
            active_set=frozenset(int(i) for i in np.nonzero(d >= p.dmax - slack_tol)[0]),
            lower_active_set=frozenset(int(i) for i in np.nonzero(d <= slack_tol)[0]),
        )
        if check_kkt(sp, k, p, dstar).passed:
            return sp
        last_err = sp
    detail = ""
    if last_err is not None:
        detail = f"; best residuals {check_kkt(last_err, k, p, dstar).to_dict()}"
    raise ActiveSetError(f"could not certify a KKT point at dstar = {dstar:g}{detail}")


def solve_reduced(p: DataCenterParams, k: SteadyStateConstants, dstar: float) -> OptimalSetpoint:
    """Solve the reduced energy-minimization problem for total demand dstar.

    Tries the closed-form inactive candidate first, then the active-set
    iteration over full-capacity racks, and falls back to an LP-based solve
    for regimes outside the structured iteration (binding lower workload
    bounds, the dstar endpoints). The returned point always carries
    multipliers that pass ``check_kkt``.

    Raises HeterogeneousRacksError for non-identical rack power
    characteristics, CapacityError for dstar outside [0, capacity], and
    ActiveSetError when no candidate can be certified.
    """
    _require_homogeneous(p)
    cap = p.capacity
    cap_tol = 1e-9 * max(1.0, cap)
    if dstar < -cap_tol or dstar > cap + cap_tol:
        raise CapacityError(f"dstar = {dstar:g} outside feasible range [0, {cap:g}]")
    dstar = float(min(max(dstar, 0.0), cap))
    degenerate = dstar <= cap_tol or dstar >= cap - cap_tol
    if degenerate:
        logger.info("dstar = %g is at a capacity endpoint; workload distribution is forced", dstar)

    sp: OptimalSetpoint | None = None
    if not degenerate:
        slack_tol = 1e-9 * p.dmax
        cand = kkt_inactive_solution(k, p.tsafe, dstar)
        if np.all(cand.d_bar > slack_tol) and np.all(p.dmax - cand.d_bar > slack_tol):
            sp = cand
        else:
            sp = _upper_active_set_loop(p, k, dstar)
            if sp is not None and np.any(sp.d_bar < -slack_tol):
                sp = None
    if sp is not None:
        sp = replace(sp, degenerate=degenerate, cost=_steady_cost(p, sp))
        if check_kkt(sp, k, p, dstar).passed:
            return sp
        logger.warning("structured candidate failed certification at dstar=%g; using LP fallback", dstar)
    sp = _lp_fallback(p, k, dstar)
    sp = replace(sp, degenerate=degenerate, cost=_steady_cost(p, sp))
    return sp

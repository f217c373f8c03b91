"""Closed-form steady-state maps and structural matrix verifiers.

At any thermal equilibrium the supply temperature and the workload
distribution are uniquely determined by the outlet-temperature profile and
the total demand. Both maps are affine and share four constants (c1..c4)
derived from the physical parameters; this module computes them, evaluates
the maps, and numerically certifies the sign/stability structure that the
rest of the pipeline relies on.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateParamsError
from .model import DataCenterParams, heat_capacity_matrix_MA, system_matrix_A

_UNIFORM_RTOL = 1e-9


def _is_uniform(vec: np.ndarray) -> bool:
    return float(np.ptp(vec)) <= _UNIFORM_RTOL * max(1.0, float(np.abs(vec).max()))


@dataclass(frozen=True)
class SteadyStateConstants:
    """Affine coefficients of the equilibrium supply-temperature and workload maps.

    tsup = c1 . tout + c2(dstar)       with c2(dstar) = (dstar + c2_offset) / c2_den
    d    = c3 @ tout + c4(dstar)       with c4(dstar) = c4_gain * dstar + c4_offset

    Identities (exact in real arithmetic): c1 sums to 1, c3 has zero row and
    column sums, and c4(dstar) sums to dstar. c2_den is strictly negative for
    valid parameters. ``w_uniform`` records whether the per-CPU powers were
    identical, the regime in which the c3 sign pattern is proved.
    """

    c1: np.ndarray
    c3: np.ndarray
    c2_offset: float
    c2_den: float
    c4_gain: np.ndarray
    c4_offset: np.ndarray
    w_uniform: bool

    @property
    def n(self) -> int:
        return self.c1.shape[0]

    def c2(self, dstar: float) -> float:
        return (dstar + self.c2_offset) / self.c2_den

    def c4(self, dstar: float) -> np.ndarray:
        return self.c4_gain * dstar + self.c4_offset


def compute_constants(p: DataCenterParams) -> SteadyStateConstants:
    """Derive the steady-state constants from the physical parameters.

    Raises DegenerateParamsError when the normalizing scalar
    1' W^-1 M A 1 is numerically zero (it is strictly negative for any
    physically realizable parameter set).
    """
    ones = np.ones(p.n)
    # W^-1 M A as a diagonal scaling of MA; no general inverse is formed.
    alpha = heat_capacity_matrix_MA(p) / p.w[:, np.newaxis]
    den = float(ones @ alpha @ ones)
    scale = max(1.0, float(np.abs(alpha).max()) * p.n)
    if abs(den) < 1e-12 * scale:
        raise DegenerateParamsError(
            f"normalizing scalar 1'W^-1MA1 = {den:.3e} is numerically zero "
            f"(threshold {1e-12 * scale:.3e}); steady-state maps undefined"
        )
    col = ones @ alpha  # row vector 1' W^-1 M A
    c1 = col / den
    c3 = -alpha @ (np.eye(p.n) - np.outer(ones, c1))
    alpha_ones = alpha @ ones
    c2_offset = float((p.v / p.w).sum())
    c4_gain = alpha_ones / den
    c4_offset = alpha_ones * (c2_offset / den) - p.v / p.w
    return SteadyStateConstants(
        c1=c1,
        c3=c3,
        c2_offset=c2_offset,
        c2_den=den,
        c4_gain=c4_gain,
        c4_offset=c4_offset,
        w_uniform=_is_uniform(p.w),
    )


def steady_supply_temperature(k: SteadyStateConstants, tout: np.ndarray, dstar: float) -> float:
    """Unique supply temperature holding the given outlet profile at total demand dstar."""
    return float(k.c1 @ np.asarray(tout, dtype=float)) + k.c2(dstar)


def steady_workload_distribution(k: SteadyStateConstants, tout: np.ndarray, dstar: float) -> np.ndarray:
    """Unique workload distribution holding the given outlet profile at total demand dstar.

    Sums to dstar by construction; box feasibility (0 <= d <= dmax) is the
    optimizer's concern, not checked here.
    """
    return k.c3 @ np.asarray(tout, dtype=float) + k.c4(dstar)


@dataclass(frozen=True)
class C3StructureReport:
    """Result of the workload-sensitivity sign check (positive diagonal, negative off-diagonal)."""

    n: int
    min_diagonal: float
    max_off_diagonal: float | None
    passed: bool
    within_proved_regime: bool
    note: str

    def to_dict(self) -> dict:
        return asdict(self)


def verify_c3_structure(k: SteadyStateConstants) -> C3StructureReport:
    """Check the sign pattern of c3: diagonal > 0, off-diagonal < 0.

    The pattern is proved only for racks with identical per-CPU power; for
    heterogeneous w the check still runs but the report is labeled as
    outside the proved regime. n = 1 is degenerate (c3 is identically zero)
    and reported as a vacuous pass.
    """
    c3 = k.c3
    n = k.n
    if n == 1:
        return C3StructureReport(
            n=1,
            min_diagonal=float(c3[0, 0]),
            max_off_diagonal=None,
            passed=True,
            within_proved_regime=k.w_uniform,
            note="degenerate n=1: c3 is identically zero, no sign pattern to check",
        )
    off_mask = ~np.eye(n, dtype=bool)
    min_diag = float(np.diag(c3).min())
    max_off = float(c3[off_mask].max())
    passed = min_diag > 0.0 and max_off < 0.0
    if k.w_uniform:
        note = "uniform per-CPU power: sign pattern is guaranteed"
    else:
        note = "heterogeneous per-CPU power: outside proof's assumptions, result informational"
    return C3StructureReport(
        n=n,
        min_diagonal=min_diag,
        max_off_diagonal=max_off,
        passed=passed,
        within_proved_regime=k.w_uniform,
        note=note,
    )


@dataclass(frozen=True)
class HurwitzReport:
    """Result of the stability check on the thermal coupling matrix."""

    n: int
    dominance_margin: float
    max_diagonal: float
    max_eig_real: float | None
    eig_converged: bool
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


_DENSE_EIG_LIMIT = 12


def verify_a_hurwitz(p: DataCenterParams) -> HurwitzReport:
    """Certify that the thermal coupling matrix is Hurwitz.

    Three checks: (i) strict row diagonal dominance margin
    min_i(|A_ii| - sum_{j != i} |A_ij|) > 0, (ii) all diagonal entries < 0,
    (iii) max real part of the spectrum < 0. The spectrum uses an iterative
    (Arnoldi) solver above a small size cutoff; if it fails to converge the
    dominance check remains decisive.
    """
    a = system_matrix_A(p)
    n = p.n
    diag = np.diag(a)
    off_sum = np.abs(a).sum(axis=1) - np.abs(diag)
    margin = float((np.abs(diag) - off_sum).min())
    max_diag = float(diag.max())
    max_eig_real: float | None
    converged = True
    if n <= _DENSE_EIG_LIMIT:
        max_eig_real = float(np.linalg.eigvals(a).real.max())
    else:
        from scipy.sparse.linalg import ArpackNoConvergence, eigs

        try:
            vals = eigs(a, k=1, which="LR", return_eigenvectors=False, maxiter=100 * n)
            max_eig_real = float(vals.real.max())
        except ArpackNoConvergence:
            max_eig_real = None
            converged = False
    dominance_ok = margin > 0.0 and max_diag < 0.0
    passed = dominance_ok and (max_eig_real < 0.0 if converged else True)
    return HurwitzReport(
        n=n,
        dominance_margin=margin,
        max_diagonal=max_diag,
        max_eig_real=max_eig_real,
        eig_converged=converged,
        passed=passed,
    )


@dataclass(frozen=True)
class IdentityReport:
    """Normalized residuals of the four steady-state constant identities."""

    c1_sum_residual: float
    c3_column_sum_residual: float
    c3_row_sum_residual: float
    c4_sum_residual: float
    c2_den: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def verify_identities(k: SteadyStateConstants, dstar: float = 1.0, tol: float = 1e-9) -> IdentityReport:
    """Evaluate the constant identities, normalized by the magnitude of c3."""
    ones = np.ones(k.n)
    norm = max(1.0, float(np.abs(k.c3).max()))
    r1 = abs(float(k.c1 @ ones) - 1.0)
    r2 = float(np.abs(ones @ k.c3).max()) / norm
    r3 = float(np.abs(k.c3 @ ones).max()) / norm
    r4 = abs(float(k.c4(dstar).sum()) - dstar) / max(1.0, abs(dstar))
    passed = max(r1, r2, r3, r4) < tol
    return IdentityReport(
        c1_sum_residual=r1,
        c3_column_sum_residual=r2,
        c3_row_sum_residual=r3,
        c4_sum_residual=r4,
        c2_den=k.c2_den,
        passed=passed,
    )

"""Feedback laws driving the data center to its energy-minimal setpoint.

Two integral controllers act on the measured outlet temperatures only: one
adjusts the CRAC supply temperature, the other shifts workload between racks
without changing the total. Their convergence certificate is a quadratic
storage function built from the solution of a Lyapunov equation; this module
solves that equation and evaluates the control derivatives and certificate
terms.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NotHurwitzError
from .model import DataCenterParams, SystemState, input_matrix_B, system_matrix_A
from .optimizer import OptimalSetpoint

_LYAP_RESIDUAL_TOL = 1e-8
_SYMMETRY_TOL = 1e-10


def solve_lyapunov(a: np.ndarray) -> np.ndarray:
    """Solve A'Z + ZA = -2I for the symmetric positive definite Z.

    Uses the Kronecker-structured dense linear system, which is cheap and
    deterministic at the sizes this package targets. Raises NotHurwitzError
    when ``a`` has an eigenvalue with nonnegative real part; warns when the
    solve comes back with a poor residual (ill-conditioned system).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    max_re = float(np.linalg.eigvals(a).real.max())
    if max_re >= 0.0:
        raise NotHurwitzError(
            f"matrix has an eigenvalue with real part {max_re:.6g} >= 0; Lyapunov equation unsolvable"
        )
    eye = np.eye(n)
    kron = np.kron(eye, a.T) + np.kron(a.T, eye)
    z = np.linalg.solve(kron, (-2.0 * eye).flatten(order="F")).reshape((n, n), order="F")
    z = 0.5 * (z + z.T)
    residual = float(np.abs(a.T @ z + z @ a + 2.0 * eye).max())
    if residual > _LYAP_RESIDUAL_TOL:
        warnings.warn(
            f"Lyapunov solve residual {residual:.3e} exceeds {_LYAP_RESIDUAL_TOL:g}; "
            "system appears ill-conditioned",
            RuntimeWarning,
            stacklevel=2,
        )
    min_eig = float(np.linalg.eigvalsh(z).min())
    if min_eig <= 0.0:
        raise NotHurwitzError(f"Lyapunov solution not positive definite (min eigenvalue {min_eig:.6g})")
    return z


@dataclass(frozen=True)
class ControllerGains:
    """Immutable controller data: Lyapunov weight, system matrices, thresholds.

    Construction verifies the defining equation A'Z + ZA = -2I to 1e-8,
    symmetry of Z to 1e-10, and positive definiteness.
    """

    z: np.ndarray
    a: np.ndarray
    b: np.ndarray
    tsafe: np.ndarray

    def __post_init__(self):
        for name in ("z", "a", "b", "tsafe"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        n = self.z.shape[0]
        if float(np.abs(self.z - self.z.T).max()) > _SYMMETRY_TOL:
            raise ValueError("z is not symmetric")
        residual = float(np.abs(self.a.T @ self.z + self.z @ self.a + 2.0 * np.eye(n)).max())
        if residual > _LYAP_RESIDUAL_TOL:
            raise ValueError(f"z does not satisfy the Lyapunov equation (residual {residual:.3e})")
        if float(np.linalg.eigvalsh(self.z).min()) <= 0.0:
            raise ValueError("z is not positive definite")

    @classmethod
    def from_params(cls, p: DataCenterParams) -> "ControllerGains":
        a = system_matrix_A(p)
        return cls(z=solve_lyapunov(a), a=a, b=input_matrix_B(p), tsafe=p.tsafe)

    @property
    def n(self) -> int:
        return self.z.shape[0]


def tsup_derivative(g: ControllerGains, tout: np.ndarray) -> float:
    """Supply-temperature control law, degC/s: 1'A'Z (tout - tsafe).

    Vanishes at tout = tsafe. For uniformly overheated racks the sign is
    negative (1'A'Z1 = -n follows from the Lyapunov equation), so the CRAC
    supplies colder air when the racks run hot.
    """
    row = g.z @ (g.a @ np.ones(g.n))  # == (1'A'Z)' since z is symmetric
    return float(row @ (np.asarray(tout, dtype=float) - g.tsafe))


def workload_derivative(g: ControllerGains, tout: np.ndarray) -> np.ndarray:
    """Workload redistribution law, CPU/s: (11'/n - I) B'Z (tout - tsafe).

    The leading projector annihilates the all-ones direction, so the entries
    always sum to zero and the total workload is conserved.
    """
    n = g.n
    raw = g.b.T @ g.z @ (np.asarray(tout, dtype=float) - g.tsafe)
    return np.full(n, raw.mean()) - raw


@dataclass(frozen=True)
class LyapunovCertificate:
    """Storage-function values at a state, relative to a setpoint.

    ``total`` decreases along closed-loop trajectories at rate
    ``dissipation`` (the negative squared outlet-temperature error).
    """

    v: float
    xi1: float
    xi2: float
    total: float
    dissipation: float

    def to_dict(self) -> dict:
        return asdict(self)


def certificate(g: ControllerGains, s: SystemState, setpoint: OptimalSetpoint) -> LyapunovCertificate:
    """Evaluate the convergence certificate at a state."""
    t_err = s.tout - setpoint.tout_bar
    tsup_err = s.tsup - setpoint.tsup_bar
    d_err = s.d - setpoint.d_bar
    v = 0.5 * float(t_err @ g.z @ t_err)
    xi1 = 0.5 * tsup_err**2
    xi2 = 0.5 * float(d_err @ d_err)
    return LyapunovCertificate(
        v=v,
        xi1=xi1,
        xi2=xi2,
        total=v + xi1 + xi2,
        dissipation=-float(t_err @ t_err),
    )

"""Shared fixtures and random-instance generators."""

from pathlib import Path

import numpy as np
import pytest

from thermoptic import CopCurve, DataCenterParams, synthesize_gamma
from thermoptic.config import load_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

# Wide validity interval so randomly placed equilibria stay evaluable.
WIDE_COP = CopCurve(a=0.0068, b=0.0008, c=0.458, tlo=0.0, thi=60.0)


def random_gamma(rng: np.random.Generator, n: int, level: float | None = None) -> np.ndarray:
    """Recirculation matrix with row sums at a random level below one."""
    if level is None:
        level = float(rng.uniform(0.15, 0.6))
    if n == 1:
        return np.array([[level]])
    raw = rng.uniform(0.2, 1.0, size=(n, n))
    raw[np.diag_indices(n)] = rng.uniform(0.01, 0.05, size=n)
    for _ in range(8):
        raw /= raw.sum(axis=0, keepdims=True)
        raw /= raw.sum(axis=1, keepdims=True)
    return level * raw


def random_params(
    rng: np.random.Generator,
    n: int,
    homogeneous: bool = True,
    level: float | None = None,
    uniform_tsafe: bool = False,
) -> DataCenterParams:
    """Physically realizable random instance.

    Flows are heterogeneous; gamma is rescaled if needed so every rack
    receives a strictly positive share of CRAC supply air (flow
    conservation), which the stability structure requires. With
    ``uniform_tsafe`` the safe thresholds are identical, which keeps the
    box-interior operating regime reachable at moderate loads.
    """
    gamma = random_gamma(rng, n, level)
    flow = rng.uniform(0.9, 1.4, size=n)
    recirc_in = gamma.T @ flow
    headroom = float((flow / recirc_in).min())
    if headroom <= 1.2:
        gamma = gamma * (0.8 * headroom)
    if homogeneous:
        v = float(rng.uniform(800.0, 1500.0))
        w = float(rng.uniform(100.0, 160.0))
    else:
        v = rng.uniform(800.0, 1500.0, size=n)
        w = rng.uniform(100.0, 160.0, size=n)
    tsafe = float(rng.uniform(28.0, 32.0)) if uniform_tsafe else rng.uniform(27.0, 33.0, size=n)
    return DataCenterParams(
        n=n,
        gamma=gamma,
        flow=flow,
        mass=rng.uniform(1.0, 4.0, size=n),
        rho=1.19,
        cp=1005.0,
        v=v,
        w=w,
        dmax=rng.uniform(10.0, 25.0, size=n),
        tsafe=tsafe,
        cop=WIDE_COP,
    )


def simple_params(n: int = 1, **overrides) -> DataCenterParams:
    """Minimal hand-checkable instance; unit-ish physical constants."""
    defaults = dict(
        n=n,
        gamma=np.full((n, n), 0.2 / n),
        flow=1.0,
        mass=1.0,
        rho=1.0,
        cp=1.0,
        v=10.0,
        w=2.0,
        dmax=20.0,
        tsafe=30.0,
        cop=WIDE_COP,
    )
    defaults.update(overrides)
    return DataCenterParams(**defaults)


@pytest.fixture(scope="session")
def case_study():
    """The bundled 30-rack scenario."""
    return load_config(CONFIG_DIR / "case_study.json")


@pytest.fixture(scope="session")
def case_params(case_study):
    return case_study.params


@pytest.fixture(scope="session")
def small_config_path():
    return CONFIG_DIR / "small.json"

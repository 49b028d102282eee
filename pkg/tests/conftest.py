import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dcsweep.grid import GridDims, SurfaceGrid
from dcsweep.surfaces import SURFACE_KINDS, gen_surface


def corpus_surfaces():
    """Synthetic surfaces plus a random smooth field, at several sizes."""
    out = []
    for size in (8, 16, 32):
        for kind in SURFACE_KINDS:
            out.append(gen_surface(kind, GridDims(size, size)))
    rng = np.random.default_rng(5)
    out.append(SurfaceGrid.from_array(np.cumsum(rng.standard_normal((16, 8)), axis=0), "walk"))
    out.append(SurfaceGrid.from_array(rng.standard_normal((4, 32)), "noise4x32"))
    return out


@pytest.fixture(scope="session")
def corpus():
    return corpus_surfaces()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sphere8():
    return gen_surface("sphere", GridDims(8, 8))


def adjoint_gap(op, rng, trials=20):
    """Worst normalized |<Au, v> - <u, A.T v>| over random pairs."""
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(op.in_dim)
        v = rng.standard_normal(op.out_dim)
        lhs = op.apply(u) @ v
        rhs = u @ op.rapply(v)
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v) + 1))
    return worst

"""Matrix-free linear operators for derivative compressive sampling.

Every operator is a :class:`LinearOp` carrying a forward map and its adjoint.
Conventions (row-major flattening of an H x W grid):

* ``W`` is the 2-D orthonormal Haar synthesis (coefficients -> samples),
  ``W.T`` the analysis.  The transform is separable: a full-depth 1-D Haar
  transform along rows and along columns.
* ``D_x`` differences along columns, ``D_y`` along rows.  Both are forward
  differences whose last entry per line is zero (replicated edge), i.e.
  ``D_x = I_H (x) d_W`` and ``D_y = d_H (x) I_W`` so they commute exactly.
* A coefficient vector is ``c = [c_x; c_y]``; ``T_x``/``T_y`` are the slices
  selecting each half.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .grid import GridDims, SurfaceGrid
from .noise import NoiseSpec, apply_noise, check_seed, derive_seed, make_rng


@dataclass(frozen=True, eq=False)
class LinearOp:
    """A linear map ``R^in_dim -> R^out_dim`` given by forward/adjoint callables."""

    in_dim: int
    out_dim: int
    forward: object = field(repr=False)
    adjoint: object = field(repr=False)
    name: str = "op"

    def __call__(self, x):
        return self.apply(x)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.in_dim,):
            raise ContractViolation(
                f"{self.name}: expected input of length {self.in_dim}, got shape {x.shape}")
        return self.forward(x)

    def rapply(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.out_dim,):
            raise ContractViolation(
                f"{self.name}.T: expected input of length {self.out_dim}, got shape {y.shape}")
        return self.adjoint(y)

    @property
    def T(self):
        return LinearOp(self.out_dim, self.in_dim, self.adjoint, self.forward,
                        name=f"{self.name}.T")

    def __matmul__(self, other):
        if not isinstance(other, LinearOp):
            return self.apply(other)
        if other.out_dim != self.in_dim:
            raise ContractViolation(
                f"cannot compose {self.name} ({self.in_dim} in) with "
                f"{other.name} ({other.out_dim} out)")
        return LinearOp(other.in_dim, self.out_dim,
                        lambda x: self.forward(other.forward(x)),
                        lambda y: other.adjoint(self.adjoint(y)),
                        name=f"{self.name}@{other.name}")

    def scaled(self, s):
        s = float(s)
        return LinearOp(self.in_dim, self.out_dim,
                        lambda x: s * self.forward(x),
                        lambda y: s * self.adjoint(y),
                        name=f"{s:g}*{self.name}")

    def to_dense(self):
        """Materialize by applying to unit vectors.  Only for small test sizes."""
        eye = np.eye(self.in_dim)
        return np.column_stack([self.forward(eye[:, j]) for j in range(self.in_dim)])


def identity_op(n):
    return LinearOp(n, n, lambda x: x.copy(), lambda y: y.copy(), name="I")


def zero_op(in_dim, out_dim):
    return LinearOp(in_dim, out_dim,
                    lambda x: np.zeros(out_dim), lambda y: np.zeros(in_dim), name="0")


def matrix_op(A, name="A"):
    A = np.asarray(A, dtype=float)
    return LinearOp(A.shape[1], A.shape[0], lambda x: A @ x, lambda y: A.T @ y, name=name)


def vstack(ops, name="stack"):
    """``[A_1; A_2; ...]`` sharing one input space."""
    n = ops[0].in_dim
    if any(op.in_dim != n for op in ops):
        raise ContractViolation("vstack: operators must share the input dimension")
    cuts = np.cumsum([op.out_dim for op in ops])[:-1]

    def fwd(x):
        return np.concatenate([op.forward(x) for op in ops])

    def adj(y):
        parts = np.split(y, cuts)
        out = ops[0].adjoint(parts[0])
        for op, part in zip(ops[1:], parts[1:]):
            out = out + op.adjoint(part)
        return out

    return LinearOp(n, int(sum(op.out_dim for op in ops)), fwd, adj, name=name)


def block_diag(a, b, name="blkdiag"):
    """``diag{a, b}`` acting on ``[x_a; x_b]``."""

    def fwd(x):
        return np.concatenate([a.forward(x[:a.in_dim]), b.forward(x[a.in_dim:])])

    def adj(y):
        return np.concatenate([a.adjoint(y[:a.out_dim]), b.adjoint(y[a.out_dim:])])

    return LinearOp(a.in_dim + b.in_dim, a.out_dim + b.out_dim, fwd, adj, name=name)


def select_op(n, half):
    """``T_x`` (half=0) or ``T_y`` (half=1): slice of a length-2n vector."""
    lo = half * n

    def fwd(c):
        return c[lo:lo + n].copy()

    def adj(v):
        out = np.zeros(2 * n)
        out[lo:lo + n] = v
        return out

    return LinearOp(2 * n, n, fwd, adj, name="Tx" if half == 0 else "Ty")


# ---------------------------------------------------------------------------
# Haar basis

def _haar1d_analysis(x):
    """Full-depth orthonormal 1-D Haar analysis along axis 0."""
    x = np.array(x, dtype=float)
    k = x.shape[0]
    out = np.empty_like(x)
    while k > 1:
        even, odd = x[0:k:2], x[1:k:2]
        half = k // 2
        out[half:k] = (even - odd) / math.sqrt(2.0)
        x[:half] = (even + odd) / math.sqrt(2.0)
        k = half
    out[0] = x[0]
    return out


@lru_cache(maxsize=None)
def haar_matrix(k):
    """k x k orthonormal Haar analysis matrix (rows: scaling, coarse..fine details)."""
    if k < 1 or k & (k - 1):
        raise ConfigurationError(f"Haar length must be a power of two, got {k}")
    H = _haar1d_analysis(np.eye(k))
    H.setflags(write=False)
    return H


class HaarBasis:
    """Separable 2-D orthonormal Haar transform on a power-of-two grid."""

    def __init__(self, dims):
        self.dims = dims
        self._hr = haar_matrix(dims.rows)
        self._hc = haar_matrix(dims.cols)
        n = dims.n
        self.synthesis = LinearOp(n, n, self.inverse, self.forward, name="W")
        self.analysis = self.synthesis.T

    def forward(self, z):
        Z = z.reshape(self.dims.shape)
        return (self._hr @ Z @ self._hc.T).ravel()

    def inverse(self, c):
        C = c.reshape(self.dims.shape)
        return (self._hr.T @ C @ self._hc).ravel()


@lru_cache(maxsize=64)
def _basis(dims):
    return HaarBasis(dims)


def haar_forward(z_flat, dims):
    """Analysis ``W.T z``: samples to Haar coefficients."""
    return _basis(dims).forward(dims.check(z_flat))


def haar_inverse(c, dims):
    """Synthesis ``W c``: Haar coefficients to samples."""
    return _basis(dims).inverse(dims.check(c, "coefficient vector"))


# ---------------------------------------------------------------------------
# Differences

def _fdiff(a, axis):
    out = np.zeros_like(a)
    if axis == 1:
        out[:, :-1] = a[:, 1:] - a[:, :-1]
    else:
        out[:-1, :] = a[1:, :] - a[:-1, :]
    return out


def _fdiff_adj(a, axis):
    out = np.zeros_like(a)
    if axis == 1:
        out[:, 1:] += a[:, :-1]
        out[:, :-1] -= a[:, :-1]
    else:
        out[1:, :] += a[:-1, :]
        out[:-1, :] -= a[:-1, :]
    return out


@dataclass(frozen=True, eq=False)
class DiffOps:
    dims: GridDims
    dx: LinearOp
    dy: LinearOp


def make_diff_ops(dims):
    """Forward differences ``D_x`` (along columns) and ``D_y`` (along rows)."""
    if not isinstance(dims, GridDims):
        raise ConfigurationError(f"expected GridDims, got {type(dims).__name__}")
    shape, n = dims.shape, dims.n

    def op(axis, name):
        return LinearOp(n, n,
                        lambda v: _fdiff(v.reshape(shape), axis).ravel(),
                        lambda w: _fdiff_adj(w.reshape(shape), axis).ravel(),
                        name=name)

    return DiffOps(dims, op(1, "Dx"), op(0, "Dy"))


# ---------------------------------------------------------------------------
# Sensing

@dataclass(frozen=True, eq=False)
class SensingOp:
    seed: int
    m: int
    n: int
    matrix: np.ndarray = field(repr=False)
    op: LinearOp = field(repr=False)


def make_sensing(seed, m, n):
    """Dense Gaussian sensing matrix with i.i.d. N(0, 1/m) entries."""
    seed = check_seed(seed)
    if not (isinstance(m, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise ConfigurationError("m and n must be integers")
    if not 0 < m <= n:
        raise ConfigurationError(f"need 0 < m <= n, got m={m}, n={n}")
    A = make_rng(seed).normal(0.0, 1.0 / math.sqrt(m), size=(int(m), int(n)))
    A.setflags(write=False)
    return SensingOp(seed, int(m), int(n), A, matrix_op(A, name="Psi"))


# ---------------------------------------------------------------------------
# Stacked DCS system

@dataclass(frozen=True, eq=False)
class StackedSystem:
    """All operators and data of one DCS problem instance.

    ``phi`` maps ``c`` (length 2n) to the 2m measurements, ``b_op`` maps ``c``
    to the n cross-derivative residuals ``D_y W c_x - D_x W c_y``.
    """

    dims: GridDims
    psi_x: SensingOp
    psi_y: SensingOp
    haar: HaarBasis
    diffs: DiffOps
    phi: LinearOp
    b_op: LinearOp
    y: np.ndarray
    y_clean: np.ndarray = field(default=None, repr=False)
    zx: np.ndarray = field(default=None, repr=False)
    zy: np.ndarray = field(default=None, repr=False)
    noise: NoiseSpec = None

    @property
    def n(self):
        return self.dims.n

    def coefficients_of(self, zx, zy):
        """``[W.T zx; W.T zy]``, the exact coefficient vector of a gradient field."""
        return np.concatenate([self.haar.forward(np.asarray(zx, float)),
                               self.haar.forward(np.asarray(zy, float))])

    def c_true(self):
        return self.coefficients_of(self.zx, self.zy)

    def augmented(self):
        """``(Phi', y')``: measurements stacked with the constraint rows ``B c = 0``."""
        return (vstack([self.phi, self.b_op], name="Phi'"),
                np.concatenate([self.y, np.zeros(self.n)]))


def build_phi(psi_x, psi_y, haar):
    W = haar.synthesis
    return block_diag(psi_x.op @ W, psi_y.op @ W, name="Phi")


def build_b(dims, haar, diffs):
    n = dims.n
    W = haar.synthesis
    Tx, Ty = select_op(n, 0), select_op(n, 1)
    left = diffs.dy @ W @ Tx
    right = diffs.dx @ W @ Ty

    def fwd(c):
        return left.forward(c) - right.forward(c)

    def adj(v):
        return left.adjoint(v) - right.adjoint(v)

    return LinearOp(2 * n, n, fwd, adj, name="B")


def assemble_system(z, psi_seed_x, psi_seed_y, m, noise=None, noise_seed=0):
    """Sample the gradients of ``z`` through two Gaussian sensing matrices.

    Noise (if any) is added to the measurement vectors ``b_x`` and ``b_y``
    using two sub-streams derived from ``noise_seed``.
    """
    if not isinstance(z, SurfaceGrid):
        raise ContractViolation(f"expected SurfaceGrid, got {type(z).__name__}")
    noise = NoiseSpec() if noise is None else noise
    dims = z.dims
    n = dims.n
    haar = _basis(dims)
    diffs = make_diff_ops(dims)
    psi_x = make_sensing(psi_seed_x, m, n)
    psi_y = make_sensing(psi_seed_y, m, n)

    zx = diffs.dx.forward(z.z)
    zy = diffs.dy.forward(z.z)
    bx_clean = psi_x.matrix @ zx
    by_clean = psi_y.matrix @ zy
    noise_seed = check_seed(noise_seed)
    bx = apply_noise(bx_clean, noise, derive_seed(noise_seed, "bx"))
    by = apply_noise(by_clean, noise, derive_seed(noise_seed, "by"))

    return StackedSystem(
        dims=dims, psi_x=psi_x, psi_y=psi_y, haar=haar, diffs=diffs,
        phi=build_phi(psi_x, psi_y, haar), b_op=build_b(dims, haar, diffs),
        y=np.concatenate([bx, by]), y_clean=np.concatenate([bx_clean, by_clean]),
        zx=zx, zy=zy, noise=noise)


def default_m(n, ratio=0.5):
    """Measurements per axis: ``ceil(ratio * n)``."""
    if not 0 < ratio <= 1:
        raise ConfigurationError(f"m_ratio must lie in (0, 1], got {ratio}")
    return max(1, min(n, math.ceil(ratio * n)))

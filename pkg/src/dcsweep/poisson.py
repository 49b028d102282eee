"""Least-squares integration of a gradient field (discrete Poisson equation)."""

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ContractViolation, NumericalFailure
from .grid import GradientField, SurfaceGrid
from .operators import make_diff_ops

CG_RTOL = 1e-10


def integrate(g, label="reconstruction", rtol=CG_RTOL, maxiter=None):
    """Zero-mean minimizer of ``||D_x z - zx||^2 + ||D_y z - zy||^2``.

    Conjugate gradients on the normal equations ``(Dx'Dx + Dy'Dy) z = Dx'zx + Dy'zy``
    with the same replicated-edge differences used for sampling.  The system is
    singular only along constants and the right-hand side is orthogonal to them,
    so CG from zero converges; the mean is removed afterwards.
    """
    if not isinstance(g, GradientField):
        raise ContractViolation(f"expected GradientField, got {type(g).__name__}")
    dims = g.dims
    n = dims.n
    d = make_diff_ops(dims)
    rhs = d.dx.adjoint(g.zx) + d.dy.adjoint(g.zy)
    if not np.any(rhs):
        return SurfaceGrid(dims, np.zeros(n), label)

    def normal(v):
        v = np.ravel(v)
        return d.dx.adjoint(d.dx.forward(v)) + d.dy.adjoint(d.dy.forward(v))

    N = LinearOperator((n, n), matvec=normal, dtype=float)
    maxiter = 10 * n if maxiter is None else int(maxiter)
    z, info = cg(N, rhs, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        res = float(np.linalg.norm(rhs - normal(z)) / np.linalg.norm(rhs))
        raise NumericalFailure(
            f"Poisson CG did not converge in {maxiter} iterations "
            f"(relative residual {res:.3e})", iteration=maxiter, residual=res)
    return SurfaceGrid(dims, z - z.mean(), label)


def align_mean(candidate, reference):
    """Shift ``candidate`` so its mean equals that of ``reference``."""
    if candidate.dims != reference.dims:
        raise ContractViolation(
            f"dims differ: {candidate.dims.shape} vs {reference.dims.shape}")
    shift = reference.z.mean() - candidate.z.mean()
    return SurfaceGrid(candidate.dims, candidate.z + shift, candidate.label)

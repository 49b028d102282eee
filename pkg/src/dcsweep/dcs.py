"""Augmented-Lagrangian recovery of gradient coefficients under ``B c = 0``.

Each outer step solves

    c+ = argmin 0.5 ||Phi c - y||^2 + lam ||c||_1 + (delta/2) ||B c + p||^2

and then updates the multipliers ``p+ = p + B c+``.  The inner problem is
handed to FISTA as one L1 least-squares problem with operator
``[Phi; sqrt(delta) B]`` and data ``[y; -sqrt(delta) p]``.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import ConfigurationError, ContractViolation, NumericalFailure
from .grid import GradientField
from .operators import vstack
from .sparse_solver import SolveReport, SolverParams, estimate_lipschitz, fista_solve


@dataclass(frozen=True)
class DcsParams:
    lam: float = 1e-3
    delta: float = 1.0
    outer_iters: int = 15
    constraint_tol: float = 1e-4
    inner: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ConfigurationError(f"delta must be > 0, got {self.delta}")
        if int(self.outer_iters) < 1:
            raise ConfigurationError(f"outer_iters must be >= 1, got {self.outer_iters}")
        if not self.constraint_tol > 0:
            raise ConfigurationError(f"constraint_tol must be > 0, got {self.constraint_tol}")
        # validates lam
        SolverParams(lam=self.lam)

    def inner_params(self):
        return replace(self.inner, lam=self.lam)


@dataclass
class DcsState:
    c: np.ndarray
    p: np.ndarray
    t: int = 0
    constraint_norm: float = float("nan")
    trace: list = field(default_factory=list, repr=False)


def stacked_operator(sys, delta):
    return vstack([sys.phi, sys.b_op.scaled(math.sqrt(delta))], name="[Phi; sqrt(delta) B]")


def dcs_solve(sys, params, callback=None):
    """Run the multiplier iteration on an assembled :class:`StackedSystem`.

    Stops after ``outer_iters`` steps or once ``||B c|| <= constraint_tol * ||c||``.
    ``c`` is warm-started across outer steps; ``p`` starts at zero.
    ``callback(state)`` is invoked after every multiplier update.

    Returns ``(c, state, report)`` where ``report`` aggregates the inner
    iteration counts and carries the last inner solve's objective and KKT
    residual.
    """
    n = sys.dims.n
    sqrt_d = math.sqrt(params.delta)
    A = stacked_operator(sys, params.delta)
    L = estimate_lipschitz(A)
    inner = params.inner_params()

    c = np.zeros(2 * n)
    p = np.zeros(n)
    state = DcsState(c=c, p=p)
    total_iters = 0
    rep = None

    for t in range(1, params.outer_iters + 1):
        data = np.concatenate([sys.y, -sqrt_d * p])
        try:
            c, rep = fista_solve(A, data, inner, c0=c, lipschitz=L)
        except NumericalFailure as exc:
            raise NumericalFailure(f"outer iteration {t}: {exc}",
                                   iteration=(t, exc.iteration)) from exc
        L = rep.lipschitz
        total_iters += rep.iterations
        bc = sys.b_op.forward(c)
        p = p + bc
        cnorm = float(np.linalg.norm(bc))
        if not math.isfinite(cnorm):
            raise NumericalFailure(f"non-finite constraint norm at outer iteration {t}",
                                   iteration=(t, None))
        r = sys.phi.forward(c) - sys.y
        state.c, state.p, state.t, state.constraint_norm = c, p, t, cnorm
        state.trace.append({
            "t": t,
            "constraint_norm": cnorm,
            "objective": 0.5 * float(r @ r) + params.lam * float(np.abs(c).sum()),
            "inner_objective": rep.final_objective,
            "inner_iterations": rep.iterations,
        })
        if callback is not None:
            callback(state)
        if cnorm <= params.constraint_tol * float(np.linalg.norm(c)):
            break

    report = SolveReport(iterations=total_iters, final_objective=rep.final_objective,
                         kkt_residual=rep.kkt_residual, converged=rep.converged,
                         lipschitz=L, restarts=rep.restarts)
    return c, state, report


def recover_gradients(c, sys):
    """``z_x = W T_x c``, ``z_y = W T_y c``."""
    c = np.asarray(c, dtype=float)
    n = sys.dims.n
    if c.shape != (2 * n,):
        raise ContractViolation(f"coefficient vector must have length {2 * n}, got shape {c.shape}")
    return GradientField(sys.dims, sys.haar.inverse(c[:n]), sys.haar.inverse(c[n:]))

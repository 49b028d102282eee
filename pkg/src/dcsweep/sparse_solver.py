"""L1-regularized least squares by accelerated proximal gradient (FISTA).

Solves ``min_c 0.5 * ||A c - y||^2 + lam * ||c||_1`` for a matrix-free
:class:`~dcsweep.operators.LinearOp` ``A``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigurationError, ContractViolation, NumericalFailure

STEP_RULES = ("fixed", "backtracking")
# iterations between KKT evaluations once the objective has stalled
KKT_RECHECK = 10
# objective increases below this (relative) are floating-point noise
ROUNDOFF = 1e-13


@dataclass(frozen=True)
class SolverParams:
    lam: float = 0.0
    max_iter: int = 2000
    tol: float = 1e-8
    step_rule: str = "fixed"

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigurationError(f"lambda must be finite and >= 0, got {self.lam}")
        if int(self.max_iter) < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be > 0, got {self.tol}")
        if self.step_rule not in STEP_RULES:
            raise ConfigurationError(f"step_rule must be one of {STEP_RULES}, got {self.step_rule!r}")


@dataclass
class SolveReport:
    iterations: int
    final_objective: float
    kkt_residual: float
    converged: bool
    lipschitz: float = float("nan")
    restarts: int = 0
    objectives: list = field(default_factory=list, repr=False)


def soft_threshold(v, t):
    """Elementwise ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ContractViolation(f"threshold must be >= 0, got {t}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def objective(c, A, y, lam):
    r = A.forward(c) - y
    return 0.5 * float(r @ r) + lam * float(np.abs(c).sum())


def kkt_residual(c, A, y, lam):
    """Largest violation of the subgradient optimality conditions.

    With ``g = A.T (A c - y)`` this is ``|g_i + lam sign(c_i)|`` on the support
    and ``max(|g_i| - lam, 0)`` off it, maximized over ``i``.
    """
    if lam < 0:
        raise ContractViolation(f"lambda must be >= 0, got {lam}")
    c = np.asarray(c, dtype=float)
    return _kkt_from_residual(c, A.adjoint(A.forward(c) - np.asarray(y, dtype=float)), lam)


def _kkt_from_residual(c, g, lam):
    on = c != 0
    viol = np.where(on, np.abs(g + lam * np.sign(c)), np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max()) if viol.size else 0.0


def estimate_lipschitz(A, iters=30, rtol=1e-3, seed=0):
    """Power-method estimate of ``||A.T A||_2`` (a lower bound)."""
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(A.in_dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = A.adjoint(A.forward(v))
        nw = float(np.linalg.norm(w))
        if nw == 0.0 or not math.isfinite(nw):
            return nw
        v = w / nw
        if abs(nw - est) <= rtol * nw:
            est = nw
            break
        est = nw
    return est


def fista_solve(A, y, params, c0=None, lipschitz=None):
    """Minimize ``0.5 ||A c - y||^2 + lam ||c||_1`` starting from ``c0``.

    The step is ``1/L`` with ``L`` from :func:`estimate_lipschitz` unless
    given.  Momentum is reset whenever a step would raise the objective, so the
    accepted objective sequence never increases; if even a plain proximal
    gradient step raises it, ``L`` was underestimated and is doubled.  With
    ``step_rule="backtracking"`` the quadratic upper bound is checked on every
    step instead.

    Converges when an accepted step lowers the objective by less than ``tol``
    (relative) and the KKT residual is at most
    ``10 * tol * (||A.T y||_inf + lam)``; otherwise runs to ``max_iter``.

    Returns
    -------
    c : ndarray
    report : SolveReport
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (A.out_dim,):
        raise ContractViolation(f"y must have length {A.out_dim}, got shape {y.shape}")
    lam = float(params.lam)
    if c0 is None:
        x = np.zeros(A.in_dim)
    else:
        x = np.array(c0, dtype=float)
        if x.shape != (A.in_dim,):
            raise ContractViolation(f"c0 must have length {A.in_dim}, got shape {x.shape}")

    L = estimate_lipschitz(A) if lipschitz is None else float(lipschitz)
    if not L > 0 or not math.isfinite(L):
        # zero operator: any step works
        L = 1.0
    backtrack = params.step_rule == "backtracking"

    Ax = A.forward(x)
    r = Ax - y
    F = 0.5 * float(r @ r) + lam * float(np.abs(x).sum())
    if not math.isfinite(F):
        raise NumericalFailure("non-finite objective at the starting point", iteration=0)
    objectives = [F]
    kkt_bound = 10.0 * params.tol * (float(np.abs(A.adjoint(y)).max(initial=0.0)) + lam)
    next_check = 0
    z, Az = x, Ax
    t = 1.0
    momentum = False
    converged = False
    restarts = 0
    k = 0

    while k < params.max_iter:
        k += 1
        rz = Az - y
        g = A.adjoint(rz)
        fz = 0.5 * float(rz @ rz)
        while True:
            x_new = soft_threshold(z - g / L, lam / L)
            Ax_new = A.forward(x_new)
            r_new = Ax_new - y
            f_new = 0.5 * float(r_new @ r_new)
            if not backtrack:
                break
            d = x_new - z
            bound = fz + float(g @ d) + 0.5 * L * float(d @ d)
            if f_new <= bound + 1e-12 * abs(fz) or L > 1e300:
                break
            L *= 2.0
        F_new = f_new + lam * float(np.abs(x_new).sum())
        if not math.isfinite(F_new):
            raise NumericalFailure(f"non-finite objective at iteration {k}", iteration=k)

        if F_new > F:
            if momentum:
                z, Az, t, momentum = x, Ax, 1.0, False
                restarts += 1
                continue
            if F_new - F <= ROUNDOFF * abs(F):
                # stalled at roundoff; nothing further to gain
                converged = _kkt_from_residual(x, A.adjoint(Ax - y), lam) <= kkt_bound
                break
            L *= 2.0
            continue

        decrease = (F - F_new) / max(abs(F), np.finfo(float).tiny)
        if momentum and float((z - x_new) @ (x_new - x)) > 0.0:
            # gradient-based adaptive restart
            t = 1.0
            restarts += 1
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new
        z = x_new + beta * (x_new - x)
        Az = Ax_new + beta * (Ax_new - Ax)
        momentum = beta != 0.0
        x, Ax, F, t = x_new, Ax_new, F_new, t_new
        objectives.append(F)
        if decrease < params.tol and k >= next_check:
            kkt = _kkt_from_residual(x, A.adjoint(Ax - y), lam)
            if kkt <= kkt_bound:
                converged = True
                break
            next_check = k + KKT_RECHECK

    report = SolveReport(iterations=k, final_objective=F,
                         kkt_residual=kkt_residual(x, A, y, lam), converged=converged,
                         lipschitz=L, restarts=restarts, objectives=objectives)
    return x, report

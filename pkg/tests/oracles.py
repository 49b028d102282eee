"""Independent brute-force references used by the test suite.

Nothing here calls into the package's fast paths: matrices are written down
from their closed-form definitions.
"""

import itertools

import numpy as np


def haar_basis_1d(k):
    """Rows are the orthonormal Haar functions sampled on k points:
    the constant, then psi_{j,i} for j = 0.. (coarse to fine), i by position."""
    rows = [np.full(k, 1.0 / np.sqrt(k))]
    levels = int(np.log2(k))
    for j in range(levels):
        width = k // 2**j
        amp = np.sqrt(2.0**j / k)
        for i in range(2**j):
            r = np.zeros(k)
            r[i * width:i * width + width // 2] = amp
            r[i * width + width // 2:(i + 1) * width] = -amp
            rows.append(r)
    return np.array(rows)


def haar_analysis_2d(rows, cols):
    """Dense W.T for row-major flattening."""
    return np.kron(haar_basis_1d(rows), haar_basis_1d(cols))


def fdiff_1d(k):
    D = np.zeros((k, k))
    for i in range(k - 1):
        D[i, i] = -1.0
        D[i, i + 1] = 1.0
    return D


def diff_matrices(rows, cols):
    """Dense (D_x, D_y): differences along columns / along rows."""
    Dx = np.zeros((rows * cols, rows * cols))
    Dy = np.zeros_like(Dx)
    idx = lambda r, c: r * cols + c
    for r in range(rows):
        for c in range(cols):
            if c < cols - 1:
                Dx[idx(r, c), idx(r, c + 1)] = 1.0
                Dx[idx(r, c), idx(r, c)] = -1.0
            if r < rows - 1:
                Dy[idx(r, c), idx(r + 1, c)] = 1.0
                Dy[idx(r, c), idx(r, c)] = -1.0
    return Dx, Dy


def lasso_objective(A, y, lam, c):
    r = A @ c - y
    return 0.5 * r @ r + lam * np.abs(c).sum()


def lasso_exhaustive(A, y, lam, max_support=2):
    """Global minimizer of 0.5||Ac - y||^2 + lam||c||_1 among supports of size
    <= max_support, by enumerating every support and sign pattern.

    Returns ``(c, objective, certified)``; ``certified`` means the candidate
    also satisfies the full subgradient conditions, i.e. it is the global
    optimum over all of R^n.
    """
    m, n = A.shape
    best = (np.zeros(n), lasso_objective(A, y, lam, np.zeros(n)), False)
    candidates = []
    for s in range(0, max_support + 1):
        for S in itertools.combinations(range(n), s):
            S = list(S)
            for signs in itertools.product((-1.0, 1.0), repeat=s):
                c = np.zeros(n)
                if s:
                    As = A[:, S]
                    G = As.T @ As
                    if np.linalg.cond(G) > 1e12:
                        continue
                    cs = np.linalg.solve(G, As.T @ y - lam * np.array(signs))
                    if np.any(np.sign(cs) != np.array(signs)):
                        continue
                    c[S] = cs
                candidates.append(c)
    for c in candidates:
        g = A.T @ (A @ c - y)
        on = c != 0
        ok = np.all(np.abs(g[~on]) <= lam * (1 + 1e-9) + 1e-12)
        f = lasso_objective(A, y, lam, c)
        if ok and (not best[2] or f < best[1]):
            best = (c, f, True)
        elif not best[2] and f < best[1]:
            best = (c, f, False)
    return best


def poisson_dense(rows, cols, zx, zy):
    """Zero-mean least-squares surface via the pseudo-inverse of [D_x; D_y]."""
    Dx, Dy = diff_matrices(rows, cols)
    D = np.vstack([Dx, Dy])
    z = np.linalg.pinv(D) @ np.concatenate([zx, zy])
    return z - z.mean()


def snr_db_reference(ref, est):
    ref = np.asarray(ref, float) - np.mean(ref)
    est = np.asarray(est, float) - np.mean(est)
    return 10 * np.log10(np.sum(ref**2) / np.sum((ref - est) ** 2))

"""Pure numpy implementations of the flat-vector kernels.

Mirrors the compiled module in ``_core.pyx``; the two must implement the same
iteration logic (same step rule, same stopping rule) so that results agree to
floating-point noise regardless of which backend is active.
"""

import numpy as np


def mean_rows(rows: np.ndarray) -> np.ndarray:
    """Element-wise mean of the rows of a (k, d) float64 array."""
    return np.add.reduce(rows, axis=0) / rows.shape[0]


def weighted_rows(rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of rows: sum_i weights[i] * rows[i]."""
    return weights @ rows


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """alpha * x + y, as a new array."""
    return alpha * x + y


def scale(alpha: float, x: np.ndarray) -> np.ndarray:
    return alpha * x


def dot(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(x, y))


def nrm2(x: np.ndarray) -> float:
    return float(np.sqrt(np.dot(x, x)))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto the unit simplex (sort-based)."""
    n = v.shape[0]
    u = np.sort(v)[::-1]
    shifted = (np.cumsum(u) - 1.0) / np.arange(1, n + 1)
    rho = np.nonzero(u > shifted)[0][-1]
    return np.maximum(v - shifted[rho], 0.0)


def dual_pgd(
    gram: np.ndarray,
    lin: np.ndarray,
    ball_radius: float,
    iters: int,
    step: float,
    tol: float,
) -> np.ndarray:
    """Projected gradient descent for the simplex-constrained dual.

    Minimizes F(w) = w.lin + ball_radius * sqrt(w' gram w) over the unit
    simplex, starting from the uniform point.  The sqrt term is nonsmooth at
    w' gram w = 0; there the zero subgradient is used.  Returns the best
    iterate seen (constant-step subgradient steps can oscillate around a
    kink, so the last iterate is not necessarily the best one).
    """
    n = lin.shape[0]
    w = np.full(n, 1.0 / n)
    best_w = w.copy()
    best_f = np.inf
    for _ in range(iters):
        gw = gram @ w
        quad_norm = np.sqrt(max(float(w @ gw), 0.0))
        f_val = float(w @ lin) + ball_radius * quad_norm
        if f_val < best_f:
            best_f = f_val
            best_w = w.copy()
        if quad_norm > 1e-15:
            grad = lin + (ball_radius / quad_norm) * gw
        else:
            grad = lin.copy()
        w_next = project_simplex(w - step * grad)
        delta = float(np.max(np.abs(w_next - w)))
        w = w_next
        if delta <= tol:
            break
    gw = gram @ w
    f_val = float(w @ lin) + ball_radius * np.sqrt(max(float(w @ gw), 0.0))
    if f_val < best_f:
        best_w = w.copy()
    return best_w

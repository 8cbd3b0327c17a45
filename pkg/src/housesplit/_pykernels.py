"""NumPy reference implementations of the numerical kernels.

These are the fallback used when the compiled ``_ckernels`` extension is not
available. Signatures and outputs match the Cython versions exactly.
"""
import numpy as np


def grouped_normal_equations(X, y, groups, n_groups):
    """Accumulate per-group ``X^T X``, ``X^T y`` and counts.

    Parameters
    ----------
    X : ndarray, shape (m, k)
    y : ndarray, shape (m,)
    groups : ndarray of int, shape (m,)
        Group label of each row, in ``[0, n_groups)``.
    n_groups : int

    Returns
    -------
    gram : ndarray, shape (n_groups, k, k)
    rhs : ndarray, shape (n_groups, k)
    counts : ndarray of int64, shape (n_groups,)
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.int64)
    k = X.shape[1]
    gram = np.zeros((n_groups, k, k))
    rhs = np.zeros((n_groups, k))
    counts = np.bincount(groups, minlength=n_groups).astype(np.int64)
    for g in np.flatnonzero(counts):
        rows = groups == g
        Xg = X[rows]
        gram[g] = Xg.T @ Xg
        rhs[g] = Xg.T @ y[rows]
    return gram, rhs, counts


def assign_min_residual(X, y, theta):
    """Label each row with the parameter vector giving the smallest squared residual.

    Ties go to the lowest index. Returns ``(labels, squared_residuals)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    res = y[:, None] - X @ theta.T
    sq = res * res
    labels = np.argmin(sq, axis=1).astype(np.int64)
    return labels, sq[np.arange(len(y)), labels]


def veronese(X, exponents):
    """Evaluate every monomial ``prod_l x_l ** e_l`` at every row of ``X``.

    ``exponents`` has shape (K, D); the result has shape (m, K).
    """
    X = np.asarray(X, dtype=np.float64)
    exponents = np.asarray(exponents, dtype=np.int64)
    out = np.ones((X.shape[0], exponents.shape[0]))
    for l in range(X.shape[1]):
        e = exponents[:, l]
        if e.any():
            out *= X[:, l:l + 1] ** e[None, :]
    return out


def veronese_gradient(X, exponents, coef):
    """Gradient of ``P(x) = sum_k coef_k * x^{e_k}`` at every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    exponents = np.asarray(exponents, dtype=np.int64)
    coef = np.asarray(coef, dtype=np.float64)
    m, D = X.shape
    grad = np.zeros((m, D))
    for l in range(D):
        e = exponents[:, l]
        active = e > 0
        if not active.any():
            continue
        lowered = exponents[active].copy()
        lowered[:, l] -= 1
        grad[:, l] = veronese(X, lowered) @ (coef[active] * e[active])
    return grad

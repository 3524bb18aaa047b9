"""The GMDD mean-dependence metric and its finite-sample estimators.

GMDD(U|Z) = -E[(U - EU)(U' - EU) K(Z - Z')] for an independent copy
(U', Z').  It is zero exactly when E[U|Z] = E[U] almost surely, which is
what makes it usable as an omnibus test ingredient.

Three estimators are provided: the known-mean second-order U-statistic,
its plug-in-mean variant, and an unbiased U-centered version.  A direct
fourth-order enumeration of the U-centered estimator is kept (behind a
size guard) as an exact oracle, together with an exact population value
for finitely supported distributions.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .kernels import KernelSpec, kernel_matrix

__all__ = [
    "gmdd_known_mean",
    "gmdd_plugin_mean",
    "gmdd_u_centered",
    "gmdd_u_centered_enum",
    "population_gmdd_discrete",
    "u_center",
]


def _check_sample(u, z, min_n: int) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if u.ndim != 1 or z.ndim != 2 or z.shape[0] != u.shape[0]:
        raise ValueError("u must be (n,) and z must be (n, p_z) with matching n")
    if u.shape[0] < min_n:
        raise ValueError(f"need at least {min_n} observations, got {u.shape[0]}")
    if not (np.isfinite(u).all() and np.isfinite(z).all()):
        raise ValueError("sample contains non-finite values")
    return u, z


def _offdiag_quad(kmat: np.ndarray, u: np.ndarray) -> float:
    """sum_{i != j} u_i u_j K_ij."""
    return float(u @ (kmat @ u) - np.diagonal(kmat) @ (u * u))


def gmdd_known_mean(u, z, kernel: KernelSpec) -> float:
    """GMDD estimate when E[U] is known to be zero.

    Returns -(n(n-1))^{-1} sum_{i != j} u_i u_j K(z_i - z_j).  The caller
    asserts that u is already centered (e.g. a residual vector).
    """
    u, z = _check_sample(u, z, 2)
    n = u.shape[0]
    kmat = kernel_matrix(kernel, z)
    return -_offdiag_quad(kmat, u) / (n * (n - 1))


def gmdd_plugin_mean(u, z, kernel: KernelSpec) -> float:
    """GMDD estimate with E[U] replaced by the sample mean of u."""
    u, z = _check_sample(u, z, 2)
    return gmdd_known_mean(u - u.mean(), z, kernel)


def u_center(a: np.ndarray) -> np.ndarray:
    """U-centered copy of a square matrix.

    Off-diagonal entries lose their row mean (over n-2), column mean
    (over n-2) and gain the grand mean (over (n-1)(n-2)); the diagonal is
    forced to zero.  This is the centering that turns the plug-in inner
    product into an unbiased U-statistic.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError("expected a square matrix")
    if n < 3:
        raise ValueError("U-centering needs n >= 3")
    row = a.sum(axis=1, keepdims=True)
    col = a.sum(axis=0, keepdims=True)
    out = a - row / (n - 2) - col / (n - 2) + a.sum() / ((n - 1) * (n - 2))
    np.fill_diagonal(out, 0.0)
    return out


def gmdd_u_centered(u, z, kernel: KernelSpec) -> float:
    """Unbiased GMDD estimate via U-centering, valid for n >= 4.

    Computes the inner product (1/(n(n-3))) sum_{i != j} a~_ij b~_ij of
    the U-centered kernel matrix a_ij = K(z_i - z_j) and product matrix
    b_ij = -u_i u_j.
    """
    u, z = _check_sample(u, z, 4)
    n = u.shape[0]
    a_t = u_center(kernel_matrix(kernel, z))
    b_t = u_center(-np.outer(u, u))
    return float((a_t * b_t).sum() / (n * (n - 3)))


def gmdd_u_centered_enum(u, z, kernel: KernelSpec) -> float:
    """Direct fourth-order U-statistic form of :func:`gmdd_u_centered`.

    Enumerates every ordered 4-tuple of distinct indices, so it is
    O(n^4) and guarded to n <= 12.  Kept purely as an exact oracle.
    """
    u, z = _check_sample(u, z, 4)
    n = u.shape[0]
    if n > 12:
        raise ValueError("enumeration oracle is limited to n <= 12")
    a = kernel_matrix(kernel, z)
    b = -np.outer(u, u)
    idx = np.array(list(itertools.permutations(range(n), 4)))
    i, j, q, r = idx.T
    total = np.sum(a[i, j] * b[q, r] + a[i, j] * b[i, j] - 2.0 * a[i, j] * b[i, r])
    return float(total * math.factorial(n - 4) / math.factorial(n))


def population_gmdd_discrete(support, kernel: KernelSpec) -> float:
    """Exact population GMDD for a finitely supported (U, Z).

    ``support`` is an iterable of (u, z, probability) atoms; z may be a
    scalar or a length-p_z vector.  Probabilities must be nonnegative and
    sum to one within 1e-12.  The value is the exact double sum over the
    product of the support with itself.
    """
    rows = list(support)
    if not rows:
        raise ValueError("empty support")
    u = np.asarray([r[0] for r in rows], dtype=float)
    z = np.asarray([np.atleast_1d(r[1]) for r in rows], dtype=float)
    p = np.asarray([r[2] for r in rows], dtype=float)
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must be nonnegative and sum to 1")
    if not (np.isfinite(u).all() and np.isfinite(z).all()):
        raise ValueError("support contains non-finite values")
    c = u - p @ u
    w = p * c
    kmat = kernel_matrix(kernel, z)
    return float(-(w @ kmat @ w))

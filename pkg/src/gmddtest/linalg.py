"""Symmetric eigendecomposition with hard eigenvalue thresholding.

Wald statistics in this package invert covariance estimates whose
population counterparts may be singular.  The regularized inverse keeps
only eigenvalues strictly above the cutoff c_n * lambda_1, where
c_n = n^(-1/2 + iota) and lambda_1 is the largest eigenvalue; anything
at or below the cut, including negative sample eigenvalues, counts as
rank noise and is zeroed.  Anchoring the cut to lambda_1 makes the rule
invariant to the overall scale of the covariance, so rank selection
behaves identically whether the statistic's natural variance is 2 or
2e-3; with an absolute cut, well-conditioned scalar variances far below
c_n would be spuriously zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateCovarianceError",
    "ThresholdedInverse",
    "threshold_cutoff",
    "thresholded_pinv",
]


class DegenerateCovarianceError(RuntimeError):
    """Raised when every eigenvalue falls at or below the threshold."""


@dataclass(frozen=True)
class ThresholdedInverse:
    """Eigendecomposition of a symmetric matrix with a thresholded inverse.

    Attributes
    ----------
    pseudo_inverse : (p, p) ndarray
        Moore-Penrose inverse restricted to retained eigendirections.
    retained_rank : int
        Number of eigenvalues strictly above ``threshold``.
    eigenvalues : (p,) ndarray
        All eigenvalues, descending.
    eigenvectors : (p, p) ndarray
        Columns aligned with ``eigenvalues``.
    threshold : float
        The cutoff c_n = n^(-1/2 + iota).
    """

    pseudo_inverse: np.ndarray
    retained_rank: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    threshold: float


def threshold_cutoff(n: int, iota: float) -> float:
    """The scale-free rate c_n = n^(-1/2 + iota)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0.0 < iota < 0.5:
        raise ValueError("iota must lie in (0, 0.5)")
    return float(n) ** (-0.5 + iota)


def thresholded_pinv(a, n: int, iota: float = 0.001) -> ThresholdedInverse:
    """Thresholded Moore-Penrose inverse of a symmetric matrix.

    The input is symmetrized as (A + A')/2 before decomposition.
    Eigenvalues are retained when strictly above c_n * lambda_1 with
    c_n = n^(-1/2 + iota); the default iota = 0.001 gives n^(-0.499).
    If no eigenvalue is positive, nothing is retained and the inverse
    is zero.  ``threshold`` on the result is the effective cutoff.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.isfinite(a).all():
        raise ValueError("matrix contains non-finite entries")
    cn = threshold_cutoff(n, iota)
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    w = w[::-1]
    v = v[:, ::-1]
    cutoff = cn * max(w[0], 0.0)
    keep = w > cutoff if w[0] > 0.0 else np.zeros_like(w, dtype=bool)
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        pinv = np.zeros_like(a)
    else:
        vk = v[:, keep]
        pinv = (vk / w[keep]) @ vk.T
    return ThresholdedInverse(pinv, rank, w, v, cutoff)

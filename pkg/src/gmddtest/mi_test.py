"""Pivotal chi-squared test of conditional mean independence.

The test replaces U in the GMDD pairing with an auxiliary variable V
whose conditional mean given Z stays non-degenerate under the null, so
the scaled statistic is asymptotically normal instead of degenerate.
V is built by symmetrizing arbitrary non-degenerate functions h_l(Z)
around U, optionally augmented with extra directions q_l(Z):

    V = [h_1(Z), U - h_1(Z), ..., h_ph(Z), U - h_ph(Z), q_1(Z), ...]

or, in scalar mode, V = U - f(Z).  The Wald statistic inverts the
covariance estimate through the thresholded pseudo-inverse; degrees of
freedom are declared from the structure of V (one per symmetrized pair
plus one per augmentation, or one in scalar mode), never estimated.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2

from .kernels import KernelSpec, kernel_matrix
from .linalg import DegenerateCovarianceError, thresholded_pinv

__all__ = [
    "VSpec",
    "MiTestResult",
    "default_h",
    "build_v",
    "delta_hat",
    "psi1_hat",
    "omega_tilde",
    "mi_test",
    "mi_test_kmat",
]

_COLLINEAR_TOL = 1e-8


def default_h(z: np.ndarray) -> np.ndarray:
    """The default symmetrized direction exp(0.5 * sum of Z columns)."""
    return np.exp(0.5 * z.sum(axis=1))


@dataclass(frozen=True)
class VSpec:
    """Recipe for the auxiliary variable V.

    ``symmetrized_h`` and ``augmentations`` hold vectorized callables
    mapping the full (n, p_z) conditioning matrix to a length-n column.
    ``scalar_mode`` instead builds the univariate V = u - f(Z) and is
    mutually exclusive with the other two.  Columns are centered at
    their sample means when ``center_v`` is set.
    """

    symmetrized_h: tuple[Callable, ...] = ()
    augmentations: tuple[Callable, ...] = ()
    scalar_mode: Callable | None = None
    center_v: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "symmetrized_h", tuple(self.symmetrized_h))
        object.__setattr__(self, "augmentations", tuple(self.augmentations))
        if self.scalar_mode is not None:
            if self.symmetrized_h or self.augmentations:
                raise ValueError("scalar_mode excludes symmetrized pairs and augmentations")
        elif not self.symmetrized_h:
            raise ValueError("need at least one symmetrized h (or scalar_mode)")

    @property
    def df(self) -> int:
        """Declared null rank: p_h + p_q, or 1 in scalar mode."""
        if self.scalar_mode is not None:
            return 1
        return len(self.symmetrized_h) + len(self.augmentations)

    @property
    def p_v(self) -> int:
        if self.scalar_mode is not None:
            return 1
        return 2 * len(self.symmetrized_h) + len(self.augmentations)


def default_vspec() -> VSpec:
    return VSpec(symmetrized_h=(default_h,))


@dataclass
class MiTestResult:
    statistic: float
    df: int
    p_value: float
    delta_hat: np.ndarray
    omega_spectrum: np.ndarray
    retained_rank: int
    elapsed: float

    def to_json_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "delta_hat": self.delta_hat.tolist(),
            "spectrum": self.omega_spectrum.tolist(),
            "retained_rank": self.retained_rank,
            "elapsed": self.elapsed,
        }


def _eval_column(fn: Callable, z: np.ndarray, what: str) -> np.ndarray:
    col = np.asarray(fn(z), dtype=float)
    if col.shape != (z.shape[0],):
        raise ValueError(f"{what} must return a length-n vector")
    if not np.isfinite(col).all():
        raise ValueError(f"{what} produced non-finite values")
    return col


def _correlation(a: np.ndarray, b: np.ndarray) -> float:
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.linalg.norm(ac) * np.linalg.norm(bc)
    if denom == 0.0:
        return 1.0
    return float(abs(ac @ bc) / denom)


def build_v(u, z, vs: VSpec) -> np.ndarray:
    """Materialize V as an (n, p_v) matrix.

    Column order is [h_1, u - h_1, ..., q_1, ...] (or the single scalar
    column).  Degenerate h columns (zero sample variance) are rejected,
    as are augmentations numerically collinear with existing columns.
    """
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if u.ndim != 1 or z.shape[0] != u.shape[0]:
        raise ValueError("u must be (n,) and z must be (n, p_z) with matching n")
    if vs.scalar_mode is not None:
        f = _eval_column(vs.scalar_mode, z, "scalar_mode function")
        v = (u - f)[:, None]
    else:
        cols: list[np.ndarray] = []
        for i, h in enumerate(vs.symmetrized_h):
            hv = _eval_column(h, z, f"h_{i + 1}")
            if np.ptp(hv) == 0.0:
                raise ValueError(f"h_{i + 1} is degenerate (zero sample variance)")
            cols.append(hv)
            cols.append(u - hv)
        for i, q in enumerate(vs.augmentations):
            qv = _eval_column(q, z, f"augmentation q_{i + 1}")
            if np.ptp(qv) == 0.0:
                raise ValueError(f"augmentation q_{i + 1} is degenerate (zero sample variance)")
            for prev in cols:
                if _correlation(qv, prev) > 1.0 - _COLLINEAR_TOL:
                    raise ValueError(
                        f"augmentation q_{i + 1} is numerically collinear with an existing column"
                    )
            cols.append(qv)
        v = np.column_stack(cols)
    if vs.center_v:
        v = v - v.mean(axis=0)
    return v


def _as_v_matrix(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return v


def delta_hat(u, v, kmat) -> np.ndarray:
    """(n(n-1))^{-1} sum_{i != j} K_ij u_i v_j, one entry per V column."""
    u = np.asarray(u, dtype=float)
    v = _as_v_matrix(v)
    n = u.shape[0]
    if n < 2:
        raise ValueError("need n >= 2")
    if v.shape[0] != n or kmat.shape != (n, n):
        raise ValueError("dimension mismatch")
    kd = np.diagonal(kmat)
    return u @ (kmat @ v - kd[:, None] * v) / (n * (n - 1))


def psi1_hat(u, v, kmat) -> np.ndarray:
    """Projected-pair rows: row i is (2(n-1))^{-1} sum_{j != i} K_ij (v_i u_j + v_j u_i)."""
    u = np.asarray(u, dtype=float)
    v = _as_v_matrix(v)
    n = u.shape[0]
    if n < 2:
        raise ValueError("need n >= 2")
    if v.shape[0] != n or kmat.shape != (n, n):
        raise ValueError("dimension mismatch")
    kd = np.diagonal(kmat)
    ku = kmat @ u - kd * u
    kv = kmat @ v - kd[:, None] * v
    return (v * ku[:, None] + u[:, None] * kv) / (2.0 * (n - 1))


def omega_tilde(u, v, kmat) -> np.ndarray:
    """Covariance estimate 4/(n-1) sum_i (psi1_i - delta)(psi1_i - delta)'."""
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    if n < 3:
        raise ValueError("need n >= 3")
    c = psi1_hat(u, v, kmat) - delta_hat(u, v, kmat)
    return 4.0 / (n - 1) * (c.T @ c)


def mi_test_kmat(u, v, kmat, df: int, iota: float = 0.001) -> MiTestResult:
    """Wald test from a prebuilt V matrix and kernel matrix.

    This is the assembly stage of :func:`mi_test`; it is public so that
    callers with custom or precomputed kernel matrices can reuse it.
    """
    start = time.perf_counter()
    u = np.asarray(u, dtype=float)
    v = _as_v_matrix(v)
    n = u.shape[0]
    if not 1 <= df <= v.shape[1]:
        raise ValueError(f"df={df} must lie in 1..p_v={v.shape[1]}")
    d = delta_hat(u, v, kmat)
    om = omega_tilde(u, v, kmat)
    thr = thresholded_pinv(om, n, iota)
    if thr.retained_rank == 0:
        raise DegenerateCovarianceError("degenerate covariance: no eigenvalue above threshold")
    stat = float(n * d @ thr.pseudo_inverse @ d)
    p_value = float(chi2.sf(stat, df))
    return MiTestResult(
        statistic=stat,
        df=df,
        p_value=p_value,
        delta_hat=d,
        omega_spectrum=thr.eigenvalues,
        retained_rank=thr.retained_rank,
        elapsed=time.perf_counter() - start,
    )


def mi_test(u, z, vs: VSpec | None, kernel: KernelSpec, iota: float = 0.001) -> MiTestResult:
    """Test whether E[u | z] is constant.

    ``u`` is used as given; when E[U] is unknown the caller should pass
    a pre-centered vector.  ``vs=None`` selects the default single
    symmetrized pair with h(Z) = exp(0.5 * sum of Z columns).
    """
    start = time.perf_counter()
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if not (np.isfinite(u).all() and np.isfinite(z).all()):
        raise ValueError("inputs contain non-finite values")
    if vs is None:
        vs = default_vspec()
    v = build_v(u, z, vs)
    kmat = kernel_matrix(kernel, z)
    result = mi_test_kmat(u, v, kmat, vs.df, iota)
    result.elapsed = time.perf_counter() - start
    return result

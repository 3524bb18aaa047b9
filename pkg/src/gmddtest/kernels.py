"""Weight functions K(.) used by the GMDD family of ICM metrics.

Every family is an even function on R^{p_z}.  The integrable families
(gauss, laplace, uniform, triangular, logistic, cauchy) are stored as the
*negated* Fourier transform / density, so K(0) < 0 and |K(z)| <= |K(0)|.
The non-integrable distance families (mdd, srb) are the homogeneous
weights ||z||^alpha, with mdd the alpha = 1 case.

All formulas are composed from even primitives of the coordinates
(|d|, d*d), so K(z) == K(-z) holds bitwise, and a kernel matrix built
from pairwise differences is symmetric to exact equality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FAMILIES", "KernelSpec", "eval_kernel", "kernel_matrix", "parse_kernel"]

FAMILIES = (
    "gauss",
    "mdd",
    "srb",
    "laplace",
    "uniform",
    "triangular",
    "logistic",
    "cauchy",
)

# Below this the (1 - cos t)/t^2 and sin(t)/t factors switch to a 4th-order
# series to dodge catastrophic cancellation.
_SERIES_CUT = 1e-4

# Fixed row-block size for chunked pairwise evaluation; the blocking is
# deterministic so results never depend on how work is scheduled.
_BLOCK_ROWS = 256


@dataclass(frozen=True)
class KernelSpec:
    """One K(.) family plus its parameters.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    p_z : int
        Dimension of the kernel argument.
    alpha : float, optional
        Exponent of the srb family, must lie in (0, 2).
    sigma : float, optional
        Scale of the laplace family, must be positive.  Defaults to 1.
    a : tuple of float, optional
        Per-coordinate frequencies of the uniform family, all positive,
        length ``p_z``.  Defaults to all ones.
    """

    family: str
    p_z: int
    alpha: float | None = None
    sigma: float | None = None
    a: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not isinstance(self.p_z, (int, np.integer)) or self.p_z < 1:
            raise ValueError("p_z must be a positive integer")
        if self.family == "srb":
            if self.alpha is None or not 0.0 < float(self.alpha) < 2.0:
                raise ValueError("srb requires alpha in (0, 2)")
        elif self.alpha is not None:
            raise ValueError("alpha is only meaningful for the srb family")
        if self.family == "laplace":
            sigma = 1.0 if self.sigma is None else float(self.sigma)
            if not sigma > 0.0:
                raise ValueError("laplace requires sigma > 0")
            object.__setattr__(self, "sigma", sigma)
        elif self.sigma is not None:
            raise ValueError("sigma is only meaningful for the laplace family")
        if self.family == "uniform":
            a = tuple(1.0 for _ in range(self.p_z)) if self.a is None else tuple(float(v) for v in self.a)
            if len(a) != self.p_z:
                raise ValueError("uniform requires one frequency per coordinate")
            if any(not v > 0.0 for v in a):
                raise ValueError("uniform frequencies must all be positive")
            object.__setattr__(self, "a", a)
        elif self.a is not None:
            raise ValueError("a is only meaningful for the uniform family")


def _sinc(t: np.ndarray) -> np.ndarray:
    """sin(t)/t for t >= 0 with sin(0)/0 = 1, series-protected near 0."""
    out = np.empty_like(t)
    small = t < _SERIES_CUT
    ts2 = t[small] ** 2
    out[small] = 1.0 - ts2 / 6.0 + ts2 * ts2 / 120.0
    tl = t[~small]
    out[~small] = np.sin(tl) / tl
    return out


def _cos_ratio(t: np.ndarray) -> np.ndarray:
    """2(1 - cos t)/t^2 for t >= 0 with value 1 at t = 0."""
    out = np.empty_like(t)
    small = t < _SERIES_CUT
    ts2 = t[small] ** 2
    out[small] = 1.0 - ts2 / 12.0 + ts2 * ts2 / 360.0
    tl = t[~small]
    out[~small] = 2.0 * (1.0 - np.cos(tl)) / (tl * tl)
    return out


def _apply(spec: KernelSpec, d: np.ndarray) -> np.ndarray:
    """Evaluate K on difference vectors, shape (..., p_z) -> (...)."""
    fam = spec.family
    if fam == "gauss":
        return -np.exp(-0.5 * np.sum(d * d, axis=-1))
    if fam == "mdd":
        return np.sqrt(np.sum(d * d, axis=-1))
    if fam == "srb":
        return np.sum(d * d, axis=-1) ** (0.5 * spec.alpha)
    if fam == "laplace":
        return -np.exp(-np.sqrt(np.sum(d * d, axis=-1)) / spec.sigma)
    if fam == "uniform":
        t = np.abs(d) * np.asarray(spec.a)
        return -np.prod(_sinc(t), axis=-1)
    if fam == "triangular":
        return -np.prod(_cos_ratio(np.abs(d)), axis=-1)
    if fam == "logistic":
        q = np.exp(-np.abs(d))
        return -np.prod(q / ((1.0 + q) ** 2), axis=-1)
    # cauchy
    return -np.prod(1.0 / (np.pi * (1.0 + d * d)), axis=-1)


def eval_kernel(spec: KernelSpec, z) -> float:
    """Evaluate K(z) for a single vector z of length ``spec.p_z``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (spec.p_z,):
        raise ValueError(f"expected a vector of length {spec.p_z}, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("kernel argument must be finite")
    return float(_apply(spec, z))


def kernel_matrix(spec: KernelSpec, Z) -> np.ndarray:
    """Pairwise matrix with entry (i, j) equal to K(Z_i - Z_j).

    The result is exactly symmetric and its diagonal equals K(0).
    Evaluation is chunked over fixed row blocks to bound memory; the
    blocking never changes the result.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2 or Z.shape[1] != spec.p_z:
        raise ValueError(f"expected an (n, {spec.p_z}) matrix, got shape {Z.shape}")
    if not np.isfinite(Z).all():
        raise ValueError("kernel argument must be finite")
    n = Z.shape[0]
    out = np.empty((n, n))
    for lo in range(0, n, _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, n)
        out[lo:hi] = _apply(spec, Z[lo:hi, None, :] - Z[None, :, :])
    return out


def parse_kernel(text: str, p_z: int) -> KernelSpec:
    """Build a KernelSpec from its command-line form.

    Accepted forms: ``gauss``, ``mdd``, ``srb:<alpha>``, ``laplace:<sigma>``
    (or bare ``laplace`` for sigma = 1), ``uniform`` (optionally
    ``uniform:<a1>,<a2>,...``), ``triangular``, ``logistic``, ``cauchy``.
    """
    name, _, arg = text.strip().lower().partition(":")
    try:
        if name == "srb":
            if not arg:
                raise ValueError("srb needs an exponent, e.g. srb:0.5")
            return KernelSpec("srb", p_z, alpha=float(arg))
        if name == "laplace":
            return KernelSpec("laplace", p_z, sigma=float(arg) if arg else 1.0)
        if name == "uniform":
            a = tuple(float(v) for v in arg.split(",")) if arg else None
            return KernelSpec("uniform", p_z, a=a)
        if arg:
            raise ValueError(f"kernel {name!r} takes no parameter")
        return KernelSpec(name, p_z)
    except ValueError as exc:
        raise ValueError(f"cannot parse kernel {text!r}: {exc}") from None

"""Wild-bootstrap ICM baselines: gauss, mdd, dl, and esc6.

Each family reduces to a quadratic or squared-partial-sum form in the
residual vector with a data-only weight matrix, so bootstrap replicates
only need one matrix-vector pass:

  gauss/mdd  n * GMDD of the (mean-centered) residuals with that kernel
  dl         n^{-1} sum_k (sum_i u_i 1{Z_i <= Z_k componentwise})^2
  esc6       sum_{ij} u_i u_j A_ij with angular weights
             A_ij = n^{-1} sum_r |pi - angle(Z_i - Z_r, Z_j - Z_r)|

For esc6, terms with r == i or r == j are dropped, and coincident data
points (zero difference vector at r != i, j) take the convention value
pi.  The constant in front of the angular weights is omitted: bootstrap
p-values are invariant to positive scalings of the statistic.

The wild bootstrap perturbs residuals with mean-zero unit-variance
multipliers (Mammen two-point by default, Rademacher optional), refits
the same model on the rebuilt response, and recomputes the statistic on
the bootstrap residuals.  Replicate b draws its multipliers from the
stream keyed by (seed, b), so results do not depend on scheduling.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .dataio import Dataset
from .estimators import ModelSpec, fit
from .kernels import KernelSpec, kernel_matrix
from .spec_test import kernel_argument

__all__ = [
    "FAMILIES",
    "BootstrapConfig",
    "IcmStatistic",
    "BootstrapResult",
    "icm_statistic",
    "family_matrix",
    "wild_bootstrap_pvalue",
    "wild_bootstrap_many",
    "mi_wild_bootstrap_pvalue",
]

FAMILIES = ("gauss", "mdd", "dl", "esc6")

_MAMMEN_LO = (1.0 - math.sqrt(5.0)) / 2.0
_MAMMEN_HI = (1.0 + math.sqrt(5.0)) / 2.0
_MAMMEN_P_LO = (math.sqrt(5.0) + 1.0) / (2.0 * math.sqrt(5.0))


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 499
    multiplier: str = "mammen"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.multiplier not in ("mammen", "rademacher"):
            raise ValueError(f"unknown multiplier {self.multiplier!r}")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass
class IcmStatistic:
    family: str
    value: float


@dataclass
class BootstrapResult:
    family: str
    statistic: float
    p_value: float
    B: int
    elapsed: float

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "B": self.B,
            "elapsed": self.elapsed,
        }


def _esc6_matrix(z: np.ndarray) -> np.ndarray:
    n = z.shape[0]
    acc = np.zeros((n, n))
    for r in range(n):
        d = z - z[r]
        norms = np.sqrt(np.sum(d * d, axis=1))
        gram = d @ d.T
        denom = np.outer(norms, norms)
        zero = denom == 0.0
        cos = np.clip(gram / np.where(zero, 1.0, denom), -1.0, 1.0)
        cos[zero] = 1.0  # coincident points: angle 0, weight pi
        ang = np.pi - np.arccos(cos)
        ang[r, :] = 0.0
        ang[:, r] = 0.0
        acc += ang
    return acc / n


def family_matrix(family: str, z) -> np.ndarray:
    """Data-only weight matrix that turns residuals into the statistic."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] < 2:
        raise ValueError("need n >= 2")
    if not np.isfinite(z).all():
        raise ValueError("conditioning matrix contains non-finite values")
    if family in ("gauss", "mdd"):
        return kernel_matrix(KernelSpec(family, z.shape[1]), z)
    if family == "dl":
        return (z[:, None, :] <= z[None, :, :]).all(axis=-1).astype(float)
    if family == "esc6":
        return _esc6_matrix(z)
    raise ValueError(f"unknown ICM family {family!r}")


def _stat_columns(family: str, w: np.ndarray, resid_cols: np.ndarray) -> np.ndarray:
    """Evaluate one family's statistic on each residual column."""
    n = resid_cols.shape[0]
    if family in ("gauss", "mdd"):
        c = resid_cols - resid_cols.mean(axis=0)
        s = w @ c
        diag = np.diagonal(w)
        return -((c * s).sum(axis=0) - diag @ (c * c)) / (n - 1)
    if family == "dl":
        t = w.T @ resid_cols  # entry (k, b): sum_i 1{Z_i <= Z_k} u_ib
        return (t * t).sum(axis=0) / n
    if family == "esc6":
        return (resid_cols * (w @ resid_cols)).sum(axis=0)
    raise ValueError(f"unknown ICM family {family!r}")


def icm_statistic(u_hat, z, family: str) -> IcmStatistic:
    """One family's statistic on a residual vector."""
    u_hat = np.asarray(u_hat, dtype=float)
    if u_hat.ndim != 1 or u_hat.shape[0] < 2:
        raise ValueError("u_hat must be a vector with n >= 2")
    if not np.isfinite(u_hat).all():
        raise ValueError("u_hat contains non-finite values")
    w = family_matrix(family, z)
    value = float(_stat_columns(family, w, u_hat[:, None])[0])
    return IcmStatistic(family=family, value=value)


def _multipliers(cfg: BootstrapConfig, n: int) -> np.ndarray:
    """(n, B) multiplier draws; column b comes from the (seed, b) stream."""
    out = np.empty((n, cfg.B))
    for b in range(cfg.B):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, b])))
        u = gen.random(n)
        if cfg.multiplier == "mammen":
            out[:, b] = np.where(u < _MAMMEN_P_LO, _MAMMEN_LO, _MAMMEN_HI)
        else:
            out[:, b] = np.where(u < 0.5, -1.0, 1.0)
    return out


def _bootstrap_residuals(model: ModelSpec, data: Dataset, est, mult: np.ndarray) -> np.ndarray:
    """(n, B) residual columns after refitting on each rebuilt response."""
    perturbed = est.residuals[:, None] * mult
    if model.kind in ("ols", "iv"):
        # Refitting the linear model on y* = fitted + u*v is exactly the
        # annihilator applied to the perturbation (it kills the fitted part).
        x = est.design
        if model.kind == "ols":
            zt = x
        else:
            zt = data.cols(model.iv_cols)
            if model.intercept:
                zt = np.hstack([np.ones((x.shape[0], 1)), zt])
        proj = x @ np.linalg.solve(zt.T @ x, zt.T @ perturbed)
        return perturbed - proj
    out = np.empty_like(mult)
    y_col = data.columns.index(model.y_col)
    for b in range(mult.shape[1]):
        values = data.values.copy()
        values[:, y_col] = est.fitted + perturbed[:, b]
        try:
            refit = fit(model, Dataset(data.columns, values, provenance=data.provenance))
        except Exception as exc:
            raise RuntimeError(f"bootstrap replicate {b} failed to refit: {exc}") from exc
        out[:, b] = refit.residuals
    return out


def wild_bootstrap_many(
    data: Dataset, model: ModelSpec, families, cfg: BootstrapConfig
) -> dict[str, BootstrapResult]:
    """Run several families on one shared set of bootstrap refits.

    The fit and refits are done once; each family then reduces the same
    residual columns with its own weight matrix.  Per-family ``elapsed``
    covers only that reduction; use :func:`wild_bootstrap_pvalue` when
    the full wall time of a standalone run is wanted.
    """
    families = tuple(families)
    for fam in families:
        if fam not in FAMILIES:
            raise ValueError(f"unknown ICM family {fam!r}")
    est = fit(model, data)
    z = kernel_argument(model, data)
    mult = _multipliers(cfg, data.n)
    resid_cols = _bootstrap_residuals(model, data, est, mult)
    out = {}
    for fam in families:
        t0 = time.perf_counter()
        w = family_matrix(fam, z)
        t_obs = float(_stat_columns(fam, w, est.residuals[:, None])[0])
        stats = _stat_columns(fam, w, resid_cols)
        p = float((1 + np.count_nonzero(stats >= t_obs)) / (cfg.B + 1))
        out[fam] = BootstrapResult(
            family=fam,
            statistic=t_obs,
            p_value=p,
            B=cfg.B,
            elapsed=time.perf_counter() - t0,
        )
    return out


def wild_bootstrap_pvalue(
    data: Dataset, model: ModelSpec, family: str, cfg: BootstrapConfig
) -> BootstrapResult:
    """Wild-bootstrap p-value for one family's specification statistic."""
    start = time.perf_counter()
    result = wild_bootstrap_many(data, model, (family,), cfg)[family]
    result.elapsed = time.perf_counter() - start
    return result


def mi_wild_bootstrap_pvalue(u, z, family: str, cfg: BootstrapConfig) -> BootstrapResult:
    """Multiplier-bootstrap p-value for mean independence (no model).

    The statistic is computed on the mean-centered u; each replicate
    multiplies the centered vector elementwise and recomputes it.
    """
    start = time.perf_counter()
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if u.ndim != 1 or u.shape[0] != z.shape[0]:
        raise ValueError("u must be (n,) and z must be (n, p_z) with matching n")
    if not (np.isfinite(u).all() and np.isfinite(z).all()):
        raise ValueError("inputs contain non-finite values")
    w = family_matrix(family, z)
    centered = u - u.mean()
    t_obs = float(_stat_columns(family, w, centered[:, None])[0])
    mult = _multipliers(cfg, u.shape[0])
    stats = _stat_columns(family, w, centered[:, None] * mult)
    p = float((1 + np.count_nonzero(stats >= t_obs)) / (cfg.B + 1))
    return BootstrapResult(
        family=family,
        statistic=t_obs,
        p_value=p,
        B=cfg.B,
        elapsed=time.perf_counter() - start,
    )

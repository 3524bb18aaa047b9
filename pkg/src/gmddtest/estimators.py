"""Null-model estimation: OLS, just-identified IV, and a Gauss-Newton
adapter for user-supplied nonlinear mean functions.

Besides coefficients and residuals, each fit returns the per-observation
gradient rows r_i = dg/dbeta and the influence weights phi_i of the
estimator's asymptotically linear representation
sqrt(n)(beta_hat - beta) ~ n^(-1/2) sum_i phi_i u_i.  Both feed the
estimation-effect corrections of the specification test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dataio import Dataset

__all__ = ["ModelSpec", "EstimationResult", "NonConvergenceError", "fit"]

_RCOND = 1e-10
_NLS_TOL = 1e-10
_NLS_MAX_ITER = 200


class NonConvergenceError(RuntimeError):
    """Gauss-Newton failed to reach the gradient tolerance."""


@dataclass(frozen=True)
class ModelSpec:
    """Description of the null regression model.

    kind is one of ``ols``, ``iv`` (just-identified, included exogenous
    regressors instrument themselves), or ``nls``.  For ``nls`` the
    caller supplies vectorized ``g(X, beta) -> (n,)`` and
    ``g_grad(X, beta) -> (n, k)`` plus a starting value.  No intercept is
    added unless ``intercept`` is set.
    """

    kind: str
    y_col: str
    x_cols: tuple[str, ...]
    iv_cols: tuple[str, ...] = ()
    intercept: bool = False
    g: Callable | None = None
    g_grad: Callable | None = None
    beta0: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("ols", "iv", "nls"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "x_cols", tuple(self.x_cols))
        object.__setattr__(self, "iv_cols", tuple(self.iv_cols))
        if not self.x_cols:
            raise ValueError("need at least one regressor column")
        if self.kind == "iv":
            if len(self.iv_cols) != len(self.x_cols):
                raise ValueError("iv requires as many instruments as regressors")
        elif self.iv_cols:
            raise ValueError("instrument columns are only meaningful for kind='iv'")
        if self.kind == "nls":
            if self.g is None or self.g_grad is None or self.beta0 is None:
                raise ValueError("nls requires g, g_grad, and beta0")
            if self.intercept:
                raise ValueError("bake the intercept into g for nls models")
            object.__setattr__(self, "beta0", tuple(float(b) for b in self.beta0))


@dataclass
class EstimationResult:
    """Fit output: coefficients, residuals, and sandwich ingredients."""

    beta_hat: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    influence: np.ndarray  # (n, k) rows phi_i
    gradient: np.ndarray  # (n, k) rows r_i
    design: np.ndarray  # (n, k) regressor matrix handed to g
    sigma_hat: float


def _with_intercept(x: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _check_rank(mat: np.ndarray, label: str) -> None:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] <= _RCOND * sv[0]:
        raise ValueError(f"{label} is rank deficient (smallest/largest singular value <= {_RCOND})")


def design_matrices(model: ModelSpec, data: Dataset):
    """Return (y, X, instruments-or-None) with the intercept applied."""
    y = data.col(model.y_col)
    x = data.cols(model.x_cols)
    if model.intercept:
        x = _with_intercept(x)
    zt = None
    if model.kind == "iv":
        zt = data.cols(model.iv_cols)
        if model.intercept:
            zt = _with_intercept(zt)
    return y, x, zt


def fit(model: ModelSpec, data: Dataset) -> EstimationResult:
    """Fit the null model and assemble the influence/gradient rows.

    OLS: beta = (X'X)^{-1} X'y, phi_i = (X'X/n)^{-1} x_i, r_i = x_i.
    IV:  beta = (Zt'X)^{-1} Zt'y, phi_i = (Zt'X/n)^{-1} zt_i, r_i = x_i.
    NLS: Gauss-Newton until ||J'res|| < 1e-10 (at most 200 iterations),
    phi_i = (J'J/n)^{-1} J_i, r_i = J_i evaluated at the estimate.
    """
    y, x, zt = design_matrices(model, data)
    n = x.shape[0]
    k = len(model.beta0) if model.kind == "nls" else x.shape[1]
    if n <= k:
        raise ValueError(f"need more observations than parameters (n={n}, k={k})")

    if model.kind == "ols":
        _check_rank(x, "regressor matrix")
        xtx = x.T @ x
        beta = np.linalg.solve(xtx, x.T @ y)
        fitted = x @ beta
        resid = y - fitted
        influence = np.linalg.solve(xtx / n, x.T).T
        gradient = x
    elif model.kind == "iv":
        _check_rank(x, "regressor matrix")
        _check_rank(zt, "instrument matrix")
        a = zt.T @ x
        _check_rank(a, "instrument-regressor cross-product")
        beta = np.linalg.solve(a, zt.T @ y)
        fitted = x @ beta
        resid = y - fitted
        influence = np.linalg.solve((a / n).T, zt.T).T
        gradient = x
    else:
        beta = np.asarray(model.beta0, dtype=float)
        converged = False
        for _ in range(_NLS_MAX_ITER):
            resid = y - np.asarray(model.g(x, beta), dtype=float)
            jac = np.asarray(model.g_grad(x, beta), dtype=float)
            grad = jac.T @ resid
            if np.linalg.norm(grad) < _NLS_TOL:
                converged = True
                break
            step = np.linalg.solve(jac.T @ jac, grad)
            beta = beta + step
        if not converged:
            raise NonConvergenceError(
                f"Gauss-Newton did not reach ||J'res|| < {_NLS_TOL} in {_NLS_MAX_ITER} iterations"
            )
        fitted = np.asarray(model.g(x, beta), dtype=float)
        resid = y - fitted
        jac = np.asarray(model.g_grad(x, beta), dtype=float)
        _check_rank(jac, "gradient matrix")
        influence = np.linalg.solve(jac.T @ jac / n, jac.T).T
        gradient = jac

    kk = gradient.shape[1]
    sigma = float(np.sqrt(resid @ resid / max(n - kk, 1)))
    return EstimationResult(
        beta_hat=np.asarray(beta, dtype=float),
        residuals=resid,
        fitted=fitted,
        influence=influence,
        gradient=gradient,
        design=x,
        sigma_hat=sigma,
    )

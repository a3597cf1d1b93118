"""Nonlinear least-squares fitting for the model catalog.

Matrix and tensor completion use alternating least squares on the observed
entries; network and demixing models use a trust-region Gauss-Newton solver
driven by their analytic Jacobians (a plain gradient-descent strategy is
also available for the network model).  Every solver is multi-restart with
seeded, reproducible initializations, and every returned fit carries the
first-order certificate ||J(theta)^T e|| / max(1, ||e||), which must be
small before a fit is treated as a stationary point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from . import numerics
from .errors import (
    InvalidInputError,
    InvalidParameterError,
    UnderdeterminedModelError,
)
from .models.demixing import DemixingModel
from .models.lowrank import MatrixCompletionModel, TensorCPModel
from .models.nn import OneLayerNNModel


@dataclass(frozen=True)
class FitOptions:
    """Solver settings shared by all families.

    ``grad_tol`` is the relative rss-change stopping threshold for ALS
    sweeps and the gradient tolerance of the trust-region solver;
    ``ortho_tol`` is the first-order certificate a fit must satisfy to be
    flagged converged.  ``target_rss`` optionally stops the restart loop as
    soon as a restart reaches that value (used by the selection harness,
    where restarts exist only to escape local minima).
    """

    max_iters: int = 500
    grad_tol: float = 1e-11
    num_restarts: int = 5
    ortho_tol: float = 1e-5
    step_policy: str = "trust-region"
    target_rss: float | None = None
    init_scale: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1 or self.num_restarts < 1:
            raise InvalidParameterError("max_iters and num_restarts must be positive")
        if not (self.grad_tol > 0 and self.ortho_tol > 0):
            raise InvalidParameterError("tolerances must be positive")
        if self.step_policy not in ("trust-region", "gd-backtracking"):
            raise InvalidParameterError(f"unknown step policy {self.step_policy!r}")


@dataclass(frozen=True)
class FitResult:
    """Outcome of one least-squares fit."""

    theta: np.ndarray
    fitted: np.ndarray
    residual: np.ndarray
    rss: float
    restarts_used: int
    converged: bool
    orthogonality_score: float

    def __post_init__(self):
        object.__setattr__(self, "rss", float(self.rss))


def _finalize(model, theta, y, restarts_used, ortho_tol):
    fitted = model.evaluate(theta)
    residual = y - fitted
    rss = float(residual @ residual)
    J = model.jacobian(theta)
    score = float(np.linalg.norm(J.T @ residual) / max(1.0, np.linalg.norm(residual)))
    return FitResult(theta=theta, fitted=fitted, residual=residual, rss=rss,
                     restarts_used=restarts_used, converged=bool(score < ortho_tol),
                     orthogonality_score=score)


def _check_observations(model, y):
    y = np.asarray(y, dtype=float).ravel()
    if y.size != model.obs_dim:
        raise InvalidInputError(
            f"observation length {y.size} does not match model obs_dim {model.obs_dim}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("observations contain non-finite values")
    return y


# ---------------------------------------------------------------------------
# alternating least squares: matrix completion
# ---------------------------------------------------------------------------

def _batched_row_solve(A, b):
    # A: (n, r, r) normal matrices, b: (n, r) right-hand sides
    try:
        return np.linalg.solve(A, b[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(b)
        for i in range(A.shape[0]):
            out[i] = np.linalg.lstsq(A[i], b[i], rcond=None)[0]
        return out


def _als_matrix_once(Yc, mask, r, rng, opts, is_complex):
    n1, n2 = Yc.shape
    if is_complex:
        V = rng.standard_normal((n1, r)) + 1j * rng.standard_normal((n1, r))
        W = rng.standard_normal((n2, r)) + 1j * rng.standard_normal((n2, r))
    else:
        V = rng.standard_normal((n1, r))
        W = rng.standard_normal((n2, r))
    MY = mask * Yc
    prev = np.inf
    rss = np.inf
    for _ in range(opts.max_iters):
        P = W[:, :, None] * W.conj()[:, None, :]
        G = np.tensordot(mask, P, axes=(1, 0))
        V = _batched_row_solve(G.transpose(0, 2, 1), MY @ W.conj())
        P = V[:, :, None] * V.conj()[:, None, :]
        G = np.tensordot(mask.T, P, axes=(1, 0))
        W = _batched_row_solve(G.transpose(0, 2, 1), MY.T @ V.conj())
        E = mask * (Yc - V @ W.T)
        rss = float(np.sum((E * E.conj()).real))
        if prev - rss < opts.grad_tol * max(rss, 1e-300):
            break
        prev = rss
    return rss, V, W


def fit_lowrank_matrix(y, model, opts=None, seed=0):
    """Fit a (real or complex) matrix-completion model by alternating least
    squares on the observed entries, best of ``num_restarts`` seeded
    initializations.
    """
    if not isinstance(model, MatrixCompletionModel):
        raise InvalidInputError("fit_lowrank_matrix expects a MatrixCompletionModel")
    opts = opts or FitOptions()
    y = _check_observations(model, y)
    if model.nonlinear_rank > model.obs_dim:
        raise UnderdeterminedModelError(
            f"manifold dimension {model.nonlinear_rank} exceeds the "
            f"{model.obs_dim} observed values; the test would have nonpositive dof")

    nobs = model.num_observed
    is_complex = model.field == "complex"
    mask = np.zeros((model.n1, model.n2))
    mask[model.omega[:, 0], model.omega[:, 1]] = 1.0
    Yc = np.zeros((model.n1, model.n2), dtype=complex if is_complex else float)
    if is_complex:
        Yc[model.omega[:, 0], model.omega[:, 1]] = y[:nobs] + 1j * y[nobs:]
    else:
        Yc[model.omega[:, 0], model.omega[:, 1]] = y

    best = None
    restarts_used = 0
    for i in range(opts.num_restarts):
        rng = numerics.rng_from_seed(seed, task_index=i)
        rss, V, W = _als_matrix_once(Yc, mask, model.rank, rng, opts, is_complex)
        restarts_used += 1
        if best is None or rss < best[0]:
            best = (rss, V, W)
        if opts.target_rss is not None and best[0] <= opts.target_rss:
            break
    _, V, W = best
    if is_complex:
        theta = model.pack(V.real, W.real, V.imag, W.imag)
    else:
        theta = model.pack(V, W)
    return _finalize(model, theta, y, restarts_used, opts.ortho_tol)


# ---------------------------------------------------------------------------
# alternating least squares: CP tensor completion
# ---------------------------------------------------------------------------

def _cp_update_mode(y, idx_mode, other_design, n_rows, r):
    # least-squares update of one factor: for each row value of the mode,
    # regress observed entries on the Khatri-Rao design of the other factors
    G = np.zeros((n_rows, r, r))
    rhs = np.zeros((n_rows, r))
    outer = other_design[:, :, None] * other_design[:, None, :]
    np.add.at(G, idx_mode, outer)
    np.add.at(rhs, idx_mode, other_design * y[:, None])
    return _batched_row_solve(G, rhs)


def fit_tensor_cp(y, model, opts=None, seed=0):
    """Fit a rank-r CP tensor model by cyclic ALS on observed entries."""
    if not isinstance(model, TensorCPModel):
        raise InvalidInputError("fit_tensor_cp expects a TensorCPModel")
    opts = opts or FitOptions()
    y = _check_observations(model, y)
    if model.rank_formula > model.num_observed:
        raise UnderdeterminedModelError(
            f"parameter count bound {model.rank_formula} exceeds the "
            f"{model.num_observed} observed entries")

    i_idx, j_idx, l_idx = model.omega.T
    r = model.rank
    best = None
    restarts_used = 0
    for s in range(opts.num_restarts):
        rng = numerics.rng_from_seed(seed, task_index=s)
        A = rng.standard_normal((model.n1, r))
        B = rng.standard_normal((model.n2, r))
        C = rng.standard_normal((model.n3, r))
        prev = np.inf
        rss = np.inf
        for _ in range(opts.max_iters):
            A = _cp_update_mode(y, i_idx, B[j_idx] * C[l_idx], model.n1, r)
            B = _cp_update_mode(y, j_idx, A[i_idx] * C[l_idx], model.n2, r)
            C = _cp_update_mode(y, l_idx, A[i_idx] * B[j_idx], model.n3, r)
            e = y - np.sum(A[i_idx] * B[j_idx] * C[l_idx], axis=1)
            rss = float(e @ e)
            if prev - rss < opts.grad_tol * max(rss, 1e-300):
                break
            prev = rss
        restarts_used += 1
        if best is None or rss < best[0]:
            best = (rss, A, B, C)
        if opts.target_rss is not None and best[0] <= opts.target_rss:
            break
    _, A, B, C = best
    return _finalize(model, model.pack(A, B, C), y, restarts_used, opts.ortho_tol)


# ---------------------------------------------------------------------------
# trust-region Gauss-Newton (networks, demixing) and gradient descent
# ---------------------------------------------------------------------------

def _trf_minimize(residual_fn, jac_fn, x0, opts, bounds=(-np.inf, np.inf), max_nfev=None):
    res = least_squares(residual_fn, x0, jac=jac_fn, method="trf", bounds=bounds,
                        xtol=1e-12, ftol=1e-12, gtol=max(opts.grad_tol, 1e-14),
                        max_nfev=max_nfev or 4 * opts.max_iters)
    return float(2.0 * res.cost), res.x


def _gd_backtracking(value_grad, x0, opts):
    x = x0
    rss, g = value_grad(x)
    step = 1.0
    for _ in range(opts.max_iters):
        gn2 = float(g @ g)
        if gn2 < (opts.grad_tol * max(rss, 1.0)) ** 2:
            break
        while True:
            x_new = x - step * g
            rss_new, g_new = value_grad(x_new)
            if rss_new <= rss - 0.5 * step * gn2 or step < 1e-20:
                break
            step *= 0.5
        x, rss, g = x_new, rss_new, g_new
        step *= 1.5
    return rss, x


def fit_nn(y, model, opts=None, seed=0):
    """Fit the hidden-layer weights by nonlinear least squares.

    The default strategy is trust-region Gauss-Newton on the analytic
    Jacobian; ``step_policy="gd-backtracking"`` selects plain gradient
    descent with an Armijo line search instead.  Divergent or flat restarts
    are reported through ``converged=False``, never raised.
    """
    if not isinstance(model, OneLayerNNModel):
        raise InvalidInputError("fit_nn expects a OneLayerNNModel")
    opts = opts or FitOptions()
    y = _check_observations(model, y)

    X = model.design

    def value_grad(u):
        q, D = model.values_and_unit_derivatives(u)
        e = y - q
        grad = -2.0 * (X.T @ (e[:, None] * D)).ravel()
        return float(e @ e), grad

    best = None
    restarts_used = 0
    for s in range(opts.num_restarts):
        rng = numerics.rng_from_seed(seed, task_index=s)
        x0 = opts.init_scale * rng.standard_normal(model.param_dim) / np.sqrt(model.d)
        if opts.step_policy == "gd-backtracking":
            rss, x = _gd_backtracking(value_grad, x0, opts)
        else:
            rss, x = _trf_minimize(lambda u: model.evaluate(u) - y,
                                   model.jacobian, x0, opts)
        restarts_used += 1
        if best is None or rss < best[0]:
            best = (rss, x)
        if opts.target_rss is not None and best[0] <= opts.target_rss:
            break
    return _finalize(model, best[1], y, restarts_used, opts.ortho_tol)


def fit_demixing(y, model, opts=None, seed=0):
    """Fit source magnitudes, widths, and delays by trust-region Gauss-Newton.

    Widths stay positive through a log reparameterization (the Jacobian
    column picks up a factor alpha by the chain rule); restarts draw from
    the model's generic parameter distribution.  The best restart is
    polished with tight tolerances before the certificate is evaluated.
    """
    if not isinstance(model, DemixingModel):
        raise InvalidInputError("fit_demixing expects a DemixingModel")
    opts = opts or FitOptions()
    y = _check_observations(model, y)
    K = model.sources

    def to_internal(theta):
        x = theta.copy()
        x[K:2 * K] = np.log(x[K:2 * K])
        return x

    def to_natural(x):
        theta = x.copy()
        theta[K:2 * K] = np.exp(theta[K:2 * K])
        return theta

    def residual_fn(x):
        return model.evaluate(to_natural(x)) - y

    def jac_fn(x):
        theta = to_natural(x)
        J = model.jacobian(theta)
        J[:, K:2 * K] *= theta[K:2 * K][None, :]
        return J

    lo = np.full(model.param_dim, -np.inf)
    hi = np.full(model.param_dim, np.inf)
    lo[K:2 * K], hi[K:2 * K] = -40.0, 40.0  # log-width bounds keep exp finite

    best = None
    restarts_used = 0
    for s in range(opts.num_restarts):
        rng = numerics.rng_from_seed(seed, task_index=s)
        x0 = to_internal(model.sample_param(rng))
        rss, x = _trf_minimize(residual_fn, jac_fn, x0, opts, bounds=(lo, hi),
                               max_nfev=150)
        restarts_used += 1
        if best is None or rss < best[0]:
            best = (rss, x)
        if opts.target_rss is not None and best[0] <= opts.target_rss:
            break
    # polish the winner so the stationarity certificate is tight
    _, x = _trf_minimize(residual_fn, jac_fn, best[1], opts, bounds=(lo, hi),
                         max_nfev=300)
    return _finalize(model, to_natural(x), y, restarts_used, opts.ortho_tol)


# ---------------------------------------------------------------------------
# dispatcher
# ---------------------------------------------------------------------------

def fit(model, y, opts=None, seed=0):
    """Route to the family-specific solver."""
    if isinstance(model, MatrixCompletionModel):
        return fit_lowrank_matrix(y, model, opts, seed)
    if isinstance(model, TensorCPModel):
        return fit_tensor_cp(y, model, opts, seed)
    if isinstance(model, OneLayerNNModel):
        return fit_nn(y, model, opts, seed)
    if isinstance(model, DemixingModel):
        return fit_demixing(y, model, opts, seed)
    raise InvalidInputError(f"no fitting strategy for {type(model).__name__}")

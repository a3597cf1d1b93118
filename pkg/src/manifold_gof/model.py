"""Model abstraction: a smooth map theta -> G(theta) in R^m.

A :class:`ManifoldModel` bundles the map, its Jacobian (analytic when the
subclass provides one, finite differences otherwise), a generic parameter
sampler, and dimension metadata.  :class:`DecomposableModel` adds the
split G(theta) = Gn(xi) + A zeta, a nonlinear part plus a linear null-space
part, which is where well-posedness lives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import InvalidInputError, InvalidModelError, InvalidParameterError, NumericalFailureError


class ManifoldModel:
    """Base class for the model catalog.

    Subclasses set ``param_dim`` and ``obs_dim`` and implement
    ``evaluate(theta)``; ``jacobian`` falls back to central finite
    differences.  ``claimed_char_rank`` holds a formula value for the
    characteristic rank when one is known, else None.  Instances are
    immutable after construction and safe to evaluate concurrently.
    """

    param_dim: int
    obs_dim: int
    claimed_char_rank = None
    # structurally-zero output coordinates (identically zero for every
    # parameter); None means there are none
    structural_zero_mask = None
    # whether rank estimation should row-equilibrate the Jacobian
    equilibrate_rank = False

    def evaluate(self, theta):
        raise NotImplementedError

    def jacobian(self, theta):
        return numerics.fd_jacobian(self.evaluate, theta)

    def sample_param(self, rng):
        """Draw a generic parameter point; default is iid standard normal."""
        return rng.standard_normal(self.param_dim)

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.param_dim:
            raise InvalidInputError(
                f"expected parameter of length {self.param_dim}, got {theta.size}")
        return theta


class CallableModel(ManifoldModel):
    """Wrap plain callables as a model; handy for tests and small studies."""

    def __init__(self, fn, param_dim, obs_dim, jac=None, sampler=None,
                 claimed_char_rank=None):
        self._fn = fn
        self._jac = jac
        self._sampler = sampler
        self.param_dim = int(param_dim)
        self.obs_dim = int(obs_dim)
        self.claimed_char_rank = claimed_char_rank

    def evaluate(self, theta):
        return np.asarray(self._fn(self._check_theta(theta)), dtype=float).ravel()

    def jacobian(self, theta):
        if self._jac is None:
            return super().jacobian(theta)
        return np.asarray(self._jac(self._check_theta(theta)), dtype=float)

    def sample_param(self, rng):
        if self._sampler is None:
            return super().sample_param(rng)
        return np.asarray(self._sampler(rng), dtype=float).ravel()


@dataclass(frozen=True)
class ObservationSet:
    """One observed vector y = x0 + sample_size^{-1/2} drift + noise.

    ``sigma`` is the per-coordinate noise standard deviation at
    sample_size 1, or None when unknown (to be estimated downstream).
    ``sample_size`` is the normalization constant: synthetic noise has
    variance sigma^2 / sample_size per coordinate.
    """

    y: np.ndarray
    sigma: float | None = None
    drift: np.ndarray | None = None
    sample_size: int = 1
    lineage: str | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("observation vector has non-finite entries")
        object.__setattr__(self, "y", y)
        if self.sigma is not None and not self.sigma > 0:
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma}")
        if self.sample_size < 1:
            raise InvalidParameterError("sample_size must be >= 1")
        if self.drift is not None:
            drift = np.asarray(self.drift, dtype=float).ravel()
            if drift.size != y.size:
                raise InvalidInputError("drift length does not match observation")
            object.__setattr__(self, "drift", drift)

    @property
    def fingerprint(self):
        """Stable identity used to validate nested-test pairings.

        Restrictions of the same data set share the parent's fingerprint
        through ``lineage``.
        """
        if self.lineage is not None:
            return self.lineage
        import hashlib
        h = hashlib.sha256(self.y.tobytes())
        h.update(np.float64(self.sigma if self.sigma is not None else np.nan).tobytes())
        return h.hexdigest()[:16]

    def restrict(self, indices):
        """Sub-observation on a coordinate subset, keeping the data lineage."""
        indices = np.asarray(indices, dtype=int)
        return ObservationSet(
            y=self.y[indices], sigma=self.sigma,
            drift=None if self.drift is None else self.drift[indices],
            sample_size=self.sample_size, lineage=self.fingerprint)


def synthesize_observation(model, theta_true, sigma, drift=None, sample_size=1,
                           seed=0, rng=None):
    """Simulate y = G(theta_true) + sample_size^{-1/2} drift + noise.

    Noise is iid normal with variance sigma^2 / sample_size per coordinate;
    the draw is a deterministic function of ``seed``.
    """
    if sigma < 0:
        raise InvalidParameterError("sigma must be >= 0")
    x0 = np.asarray(model.evaluate(theta_true), dtype=float).ravel()
    if not np.all(np.isfinite(x0)):
        raise NumericalFailureError("model evaluation at theta_true is non-finite")
    if rng is None:
        rng = numerics.rng_from_seed(seed)
    y = x0.copy()
    if drift is not None:
        y = y + np.asarray(drift, dtype=float).ravel() / np.sqrt(sample_size)
    if sigma > 0:
        y = y + (sigma / np.sqrt(sample_size)) * rng.standard_normal(x0.size)
    return ObservationSet(y=y, sigma=sigma if sigma > 0 else None,
                          drift=None if drift is None else np.asarray(drift, float),
                          sample_size=sample_size)


@dataclass(frozen=True)
class DecomposableModel:
    """G(theta) = nonlinear(xi) + linear_part @ zeta.

    ``nonlinear`` maps xi in R^{d_xi} to R^m; ``linear_part`` is an m x k
    matrix of full column rank.  The characteristic rank of the combined map
    is at most rho + k, with equality exactly when the model is well-posed.
    """

    nonlinear: ManifoldModel
    linear_part: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.linear_part, dtype=float)
        if A.ndim != 2 or A.shape[0] != self.nonlinear.obs_dim:
            raise InvalidModelError(
                f"linear part must be {self.nonlinear.obs_dim} x k, got {A.shape}")
        object.__setattr__(self, "linear_part", A)

    @property
    def k(self):
        return self.linear_part.shape[1]

    @property
    def param_dim(self):
        return self.nonlinear.param_dim + self.k

    def evaluate(self, theta):
        d = self.nonlinear.param_dim
        theta = np.asarray(theta, dtype=float).ravel()
        return self.nonlinear.evaluate(theta[:d]) + self.linear_part @ theta[d:]

    def jacobian(self, theta):
        d = self.nonlinear.param_dim
        J = self.nonlinear.jacobian(np.asarray(theta, float).ravel()[:d])
        return np.concatenate([J, self.linear_part], axis=1)


@dataclass(frozen=True)
class WellPosednessReport:
    nonlinear_rank: int        # estimated rho
    linear_dim: int            # k
    combined_rank: int         # estimated char rank of [J | A]
    well_posed: bool
    per_sample: tuple = field(repr=False, default=())


def check_well_posedness(dm, num_samples=5, seed=0):
    """Numerically test whether rank[J_nonlinear | A] = rho + k.

    Samples parameter points, takes the max of per-sample ranks for both the
    nonlinear Jacobian and the combined matrix, and compares.  Raises
    InvalidModelError when the linear part itself is rank-deficient.
    """
    if num_samples < 1:
        raise InvalidParameterError("num_samples must be >= 1")
    A = dm.linear_part
    k = dm.k
    if k > 0 and numerics.numerical_rank(A, method="svd") < k:
        raise InvalidModelError("linear part does not have full column rank")
    rho_best, full_best = 0, 0
    evidence = []
    for i in range(num_samples):
        rng = numerics.rng_from_seed(seed, task_index=i)
        xi = dm.nonlinear.sample_param(rng)
        J = dm.nonlinear.jacobian(xi)
        rho_i = numerics.numerical_rank(J)
        full_i = numerics.numerical_rank(np.concatenate([J, A], axis=1))
        evidence.append((rho_i, full_i))
        rho_best = max(rho_best, rho_i)
        full_best = max(full_best, full_i)
    return WellPosednessReport(
        nonlinear_rank=rho_best,
        linear_dim=k,
        combined_rank=full_best,
        well_posed=(full_best == rho_best + k),
        per_sample=tuple(evidence),
    )

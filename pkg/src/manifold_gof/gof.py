"""Goodness-of-fit statistics and noise-variance estimation.

The core statistic is T = sample_size * rss / sigma^2 for a least-squares
fit; under the model it is asymptotically chi-square with dof equal to the
number of observed coordinates minus the characteristic rank, with a
noncentrality induced by any population drift.  Nested model pairs yield a
difference statistic that is asymptotically chi-square with the rank
difference as dof and independent of the larger model's statistic.  When
sigma is unknown, a leave-out refit supplies a consistent estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import (
    InvalidInputError,
    InvalidPairingError,
    InvalidParameterError,
    NonpositiveDofError,
)
from .fitting import fit


@dataclass(frozen=True)
class TestReport:
    """One chi-square goodness-of-fit test."""

    statistic: float
    dof: int
    p_value: float
    sigma2_used: float
    sigma2_source: str          # "known" | "estimated" | "pooled"
    char_rank_used: int
    noncentrality: float | None = None
    obs_fingerprint: str | None = None


@dataclass(frozen=True)
class NestedComparison:
    """Difference statistic for a nested model pair."""

    statistic: float
    dof: int
    p_value: float
    clamped: bool


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2: float
    dof_used: int
    rss_outer: float
    rss_inner: float
    clamped: bool = False


_SIGMA2_FLOOR = 1e-12


def gof_test(obs, fit_result, char_rank, sigma2=None, sigma2_source=None,
             drift_projector_jacobian=None):
    """Chi-square test of a fitted model against its observation.

    Parameters
    ----------
    obs : ObservationSet
    fit_result : FitResult
        Converged least-squares fit of the model on ``obs.y``.
    char_rank : int
        Characteristic rank of the fitted map (formula or measured).
    sigma2 : float, optional
        Noise variance.  Defaults to ``obs.sigma ** 2`` when the observation
        carries a known sigma; there is no silent unit-variance fallback.
    drift_projector_jacobian : ndarray, optional
        Jacobian at the fitted point.  When the observation carries a known
        drift, the noncentrality sigma^-2 || (I - P) drift ||^2 is computed
        by projecting the drift off the tangent space spanned by its
        columns.

    Returns
    -------
    TestReport
    """
    m = obs.y.size
    char_rank = int(char_rank)
    dof = m - char_rank
    if dof < 1:
        raise NonpositiveDofError(
            f"model rank {char_rank} saturates the {m} observations (dof {dof})")
    if sigma2 is None:
        if obs.sigma is None:
            raise InvalidParameterError(
                "sigma2 is unknown: supply it explicitly or estimate it first")
        sigma2 = float(obs.sigma) ** 2
        source = "known"
    else:
        sigma2 = float(sigma2)
        source = sigma2_source or "estimated"
    if sigma2 <= 0:
        raise InvalidParameterError("sigma2 must be positive")

    statistic = obs.sample_size * fit_result.rss / sigma2
    delta = None
    if obs.drift is not None and np.any(obs.drift):
        if drift_projector_jacobian is None:
            raise InvalidParameterError(
                "drift is set: pass the Jacobian at the fit to compute the noncentrality")
        J = np.asarray(drift_projector_jacobian, dtype=float)
        coef, *_ = np.linalg.lstsq(J, obs.drift, rcond=None)
        resid = obs.drift - J @ coef
        delta = float(resid @ resid) / sigma2
    p = numerics.chi2_sf(statistic, dof, 0.0 if delta is None else delta)
    return TestReport(statistic=float(statistic), dof=dof, p_value=p,
                      sigma2_used=sigma2, sigma2_source=source,
                      char_rank_used=char_rank, noncentrality=delta,
                      obs_fingerprint=obs.fingerprint)


def nested_test(report_small, report_big):
    """Difference test for a submanifold pair.

    ``report_small`` belongs to the smaller manifold (fewer free directions,
    larger statistic), ``report_big`` to the enclosing one.  The difference
    of statistics is chi-square with dof equal to the rank difference and
    asymptotically independent of the larger model's statistic.
    """
    if (report_small.obs_fingerprint is not None
            and report_big.obs_fingerprint is not None
            and report_small.obs_fingerprint != report_big.obs_fingerprint):
        raise InvalidPairingError("nested reports come from different observations")
    if report_small.sigma2_used != report_big.sigma2_used:
        raise InvalidPairingError("nested reports use different sigma2 values")
    # the smaller manifold has more residual directions, so the rank gap is
    # its dof surplus; this also covers restriction designs where the two
    # reports live on different observed-coordinate counts
    dof = report_small.dof - report_big.dof
    if dof < 1:
        raise InvalidParameterError(
            f"nested comparison needs a strict rank gap, got dof {dof}")
    diff = report_small.statistic - report_big.statistic
    clamped = diff < 0
    if clamped:
        diff = 0.0
    return NestedComparison(statistic=float(diff), dof=dof,
                            p_value=numerics.chi2_sf(diff, dof), clamped=clamped)


def estimate_sigma2(y_outer, model_outer, y_inner, model_inner, opts=None, seed=0):
    """Leave-out estimate of the noise variance.

    Fits the same family on an outer observation set and on an inner subset,
    and returns (rss_outer - rss_inner) / (n_outer - n_inner).  Both fits
    must use the same data values on the shared coordinates.  A negative
    numerator (possible at finite samples when the inner fit is poor) is
    clamped to a tiny positive floor and flagged.
    """
    y_outer = np.asarray(y_outer, dtype=float).ravel()
    y_inner = np.asarray(y_inner, dtype=float).ravel()
    extra = y_outer.size - y_inner.size
    if extra < 1:
        raise InvalidParameterError(
            "outer set must contain more observations than the inner set")
    fit_outer = fit(model_outer, y_outer, opts, seed)
    fit_inner = fit(model_inner, y_inner, opts, seed)
    num = fit_outer.rss - fit_inner.rss
    clamped = num <= 0
    sigma2 = max(num / extra, _SIGMA2_FLOOR)
    return VarianceEstimate(sigma2=float(sigma2), dof_used=extra,
                            rss_outer=fit_outer.rss, rss_inner=fit_inner.rss,
                            clamped=bool(clamped))

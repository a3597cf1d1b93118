"""Shared numerical kernels.

Chi-square tail probabilities (central and noncentral), numerical matrix
rank with an explicit tolerance policy, central finite-difference
Jacobians, and the seeded random-stream contract used everywhere else in
the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import InvalidInputError, InvalidParameterError, NumericalFailureError

_EPS = np.finfo(float).eps

# Poisson-mixture truncation for the noncentral tail: stop once the
# unaccumulated Poisson mass drops below this.
_POISSON_TAIL = 1e-12


# ---------------------------------------------------------------------------
# seeded randomness
# ---------------------------------------------------------------------------

def rng_from_seed(seed, task_index=None):
    """Create a deterministic generator from a 64-bit seed.

    The stream-splitting rule is ``SeedSequence(seed, spawn_key=(task_index,))``:
    the same (seed, task_index) pair always yields a bit-identical stream, so
    replications can run in any order or in parallel without changing
    results.
    """
    if task_index is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(task_index,)))


# ---------------------------------------------------------------------------
# chi-square survival function
# ---------------------------------------------------------------------------

def chi2_sf(x, dof, noncentrality=0.0):
    """Survival function P(X >= x) for X ~ chi2(dof, noncentrality).

    The central case is the regularized upper incomplete gamma
    Q(dof/2, x/2).  The noncentral case is the Poisson mixture

        P(X >= x) = sum_j  pois(j; delta/2) * Q(dof/2 + j, x/2),

    truncated once the remaining Poisson mass falls below 1e-12.

    Parameters
    ----------
    x : float
        Evaluation point, x >= 0.
    dof : int
        Degrees of freedom, >= 1.
    noncentrality : float, optional
        Noncentrality parameter delta >= 0.

    Returns
    -------
    float in [0, 1]
    """
    if not np.isfinite(x):
        raise InvalidInputError(f"chi2_sf: x must be finite, got {x}")
    if x < 0:
        raise InvalidInputError(f"chi2_sf: x must be nonnegative, got {x}")
    dof = int(dof)
    if dof < 1:
        raise InvalidParameterError(f"chi2_sf: dof must be >= 1, got {dof}")
    if not np.isfinite(noncentrality) or noncentrality < 0:
        raise InvalidParameterError(
            f"chi2_sf: noncentrality must be finite and >= 0, got {noncentrality}")

    if noncentrality == 0.0:
        return float(gammaincc(dof / 2.0, x / 2.0))

    lam = noncentrality / 2.0
    # Forward Poisson recursion; weights peak near j ~ lam.
    log_w = -lam  # log pois(0; lam)
    total = 0.0
    mass = 0.0
    j = 0
    max_terms = int(lam + 60.0 * np.sqrt(lam + 1.0) + 60)
    while j <= max_terms:
        w = np.exp(log_w)
        total += w * gammaincc(dof / 2.0 + j, x / 2.0)
        mass += w
        if 1.0 - mass < _POISSON_TAIL and j >= lam:
            break
        j += 1
        log_w += np.log(lam) - np.log(j)
    # residual Poisson mass multiplies survival values <= 1; adding it keeps
    # the truncation error one-sided and below the tail tolerance
    return float(min(1.0, max(0.0, total + (1.0 - mass))))


# ---------------------------------------------------------------------------
# numerical rank
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankDetail:
    """Evidence accompanying a numerical rank decision."""

    rank: int
    smallest_retained_sv: float
    largest_discarded_sv: float
    tolerance: float


# Above this size the Gram-matrix eigenvalue route is used by ``method="auto"``;
# it is several times faster on tall-and-wide Jacobians but resolves singular
# values only down to ~sqrt(eps) * sigma_max.
_GRAM_CUTOFF = 512


def _singular_values(J, method):
    m, d = J.shape
    if method == "auto":
        method = "gram" if min(m, d) >= _GRAM_CUTOFF else "svd"
    if method == "svd":
        try:
            return np.linalg.svd(J, compute_uv=False), "svd"
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError(
                f"SVD did not converge on a {m}x{d} matrix") from exc
    if method == "gram":
        G = J @ J.T if m <= d else J.T @ J
        try:
            w = np.linalg.eigvalsh(G)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError(
                f"eigvalsh did not converge on the Gram matrix of a {m}x{d} matrix") from exc
        return np.sqrt(np.clip(w[::-1], 0.0, None)), "gram"
    raise InvalidParameterError(f"unknown rank method {method!r}")


def numerical_rank(J, tol=None, rel_tol=None, method="auto", detail=False):
    """Rank of a matrix as the number of singular values above a threshold.

    The default threshold is the scale-invariant convention
    ``max(m, d) * eps * sigma_max``.  Pass ``tol`` for an absolute threshold
    or ``rel_tol`` for a threshold relative to ``sigma_max``.  How small a
    singular value must be to count as zero is a policy, not a fact; callers
    with structured spectra should set it deliberately.

    ``method="gram"`` computes singular values through the eigenvalues of the
    smaller Gram matrix.  It is much faster for large matrices but cannot
    resolve singular values below ~sqrt(eps)*sigma_max, so its default
    threshold is ``sqrt(max(m, d) * eps) * sigma_max``.  ``method="auto"``
    selects gram only when min(m, d) >= 512.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2:
        raise InvalidInputError(f"numerical_rank: expected a matrix, got shape {J.shape}")
    if not np.all(np.isfinite(J)):
        raise InvalidInputError("numerical_rank: matrix has non-finite entries")
    if J.size == 0:
        return RankDetail(0, 0.0, 0.0, 0.0) if detail else 0

    s, used = _singular_values(J, method)
    smax = float(s[0]) if s.size else 0.0
    if tol is not None:
        thresh = float(tol)
    elif rel_tol is not None:
        thresh = float(rel_tol) * smax
    elif used == "gram":
        thresh = np.sqrt(max(J.shape) * _EPS) * smax
    else:
        thresh = max(J.shape) * _EPS * smax
    rank = int(np.sum(s > thresh))
    if not detail:
        return rank
    smallest_retained = float(s[rank - 1]) if rank > 0 else 0.0
    largest_discarded = float(s[rank]) if rank < s.size else 0.0
    return RankDetail(rank, smallest_retained, largest_discarded, thresh)


def equilibrated_rank(J, row_mask=None, method="svd", detail=False):
    """Rank after normalizing each row to unit sup-norm.

    Row scaling preserves rank exactly but collapses the dynamic range
    between rows, which matters for maps whose output coordinates decay over
    many orders of magnitude.  ``row_mask`` drops coordinates known to be
    identically zero for every parameter value (structural zeros); their
    computed entries are pure roundoff and must not be rescaled into fake
    directions.  Rows whose computed entries are all exactly zero are
    likewise dropped.
    """
    J = np.asarray(J, dtype=float)
    if row_mask is not None:
        J = J[np.asarray(row_mask, dtype=bool)]
    norms = np.max(np.abs(J), axis=1)
    keep = norms > 0
    if not np.any(keep):
        return RankDetail(0, 0.0, 0.0, 0.0) if detail else 0
    Jn = J[keep] / norms[keep][:, None]
    return numerical_rank(Jn, method=method, detail=detail)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def fd_jacobian(f, theta, step=None):
    """Central finite-difference Jacobian of ``f`` at ``theta``.

    Column j is ``(f(theta + h e_j) - f(theta - h e_j)) / (2 h)`` with the
    per-coordinate default ``h = cbrt(eps) * max(1, |theta_j|)``.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    d = theta.size
    cols = []
    h0 = _EPS ** (1.0 / 3.0)
    for j in range(d):
        h = step if step is not None else h0 * max(1.0, abs(theta[j]))
        tp = theta.copy(); tp[j] += h
        tm = theta.copy(); tm[j] -= h
        fp = np.asarray(f(tp), dtype=float).ravel()
        fm = np.asarray(f(tm), dtype=float).ravel()
        col = (fp - fm) / (2.0 * h)
        if not np.all(np.isfinite(col)):
            raise NumericalFailureError(
                f"fd_jacobian: non-finite evaluation perturbing coordinate {j}")
        cols.append(col)
    return np.column_stack(cols)

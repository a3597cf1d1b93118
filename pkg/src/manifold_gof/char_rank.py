"""Characteristic-rank estimation by sampling Jacobian ranks.

The characteristic rank of a smooth map is the maximum Jacobian rank over
the parameter set.  For analytic maps that maximum is attained almost
everywhere, so evaluating the rank at a handful of random points recovers
it; disagreement across samples indicates a tolerance problem rather than
genuine rank variation and is surfaced as evidence, not an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InvalidParameterError, NumericalFailureError
from .models.lowrank import TensorCPModel


@dataclass(frozen=True)
class RankEstimate:
    """Max-over-samples rank with per-sample evidence."""

    estimate: int
    per_sample_ranks: tuple
    num_samples: int
    agreement_fraction: float
    smallest_retained_sv: float
    largest_discarded_sv: float

    @property
    def unanimous(self):
        return self.agreement_fraction == 1.0


def _model_rank(model, theta, method="auto", detail=False):
    J = model.jacobian(theta)
    if getattr(model, "equilibrate_rank", False):
        return numerics.equilibrated_rank(
            J, row_mask=None if model.structural_zero_mask is None
            else ~np.asarray(model.structural_zero_mask),
            detail=detail)
    return numerics.numerical_rank(J, method=method, detail=detail)


def estimate_char_rank(model, num_samples=20, seed=0, method="auto"):
    """Estimate the characteristic rank of ``model`` from sampled points.

    Draws ``num_samples`` generic parameters via the model's sampler,
    computes each Jacobian rank, and returns the maximum together with the
    full rank sequence, the fraction of samples agreeing with the maximum,
    and the singular values bracketing the threshold at the modal sample.
    """
    if num_samples < 1:
        raise InvalidParameterError("num_samples must be >= 1")
    ranks = []
    details = []
    for i in range(num_samples):
        rng = numerics.rng_from_seed(seed, task_index=i)
        theta = model.sample_param(rng)
        try:
            det = _model_rank(model, theta, method=method, detail=True)
        except NumericalFailureError as exc:
            raise NumericalFailureError(f"rank evaluation failed at sample {i}: {exc}") from exc
        ranks.append(det.rank)
        details.append(det)
    ranks_arr = np.array(ranks)
    estimate = int(ranks_arr.max())
    values, counts = np.unique(ranks_arr, return_counts=True)
    modal_rank = int(values[np.argmax(counts)])
    modal_detail = details[int(np.argmax(ranks_arr == modal_rank))]
    return RankEstimate(
        estimate=estimate,
        per_sample_ranks=tuple(int(r) for r in ranks),
        num_samples=num_samples,
        agreement_fraction=float(np.mean(ranks_arr == estimate)),
        smallest_retained_sv=modal_detail.smallest_retained_sv,
        largest_discarded_sv=modal_detail.largest_discarded_sv,
    )


@dataclass(frozen=True)
class TensorIdentifiability:
    identifiable: bool
    rank_estimate: int
    formula_value: int
    evidence: RankEstimate


def tensor_local_identifiability(n1, n2, n3, rank, num_samples=20, seed=0):
    """Generic local identifiability check for rank-r CP decompositions.

    The factorization is generically locally identifiable exactly when the
    measured characteristic rank equals r (n1 + n2 + n3 - 2); smaller
    measured rank means the scaling fibers are not the only local
    degeneracy.
    """
    model = TensorCPModel(n1, n2, n3, rank)
    est = estimate_char_rank(model, num_samples=num_samples, seed=seed)
    formula = model.rank_formula
    return TensorIdentifiability(
        identifiable=bool(est.estimate == formula),
        rank_estimate=est.estimate,
        formula_value=formula,
        evidence=est,
    )

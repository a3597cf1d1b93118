"""Sequential model-order selection and the replication harness.

The selection rule scans orders upward and accepts the first one whose
goodness-of-fit p-value exceeds the significance level; a trace records
every tested order.  ``chosen_order = 0`` means every order up to r_max was
rejected, matching the convention used in the replication tables.  The
"false discovery rate" reported by the harness is the fraction of
replications whose selected order differs from the true one, not a
multiple-testing quantity.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from scipy.stats import chi2 as _chi2

from . import numerics
from .char_rank import estimate_char_rank
from .errors import InvalidParameterError, ManifoldGofError, NonpositiveDofError
from .fitting import FitOptions, fit
from .gof import gof_test


@dataclass(frozen=True)
class SelectionEntry:
    order: int
    decision: str              # "accept" | "reject" | "skip"
    report: object = None      # TestReport, or None for skips
    note: str = ""


@dataclass(frozen=True)
class SelectionTrace:
    alpha: float
    entries: tuple
    chosen_order: int          # 0 when every order was rejected
    r_max: int

    @property
    def accepted(self):
        return self.chosen_order > 0


def _test_rank(model, rank_source, rank_samples, seed):
    if rank_source == "measured" or (rank_source == "formula" and _formula_rank(model) is None):
        est = estimate_char_rank(model, num_samples=rank_samples, seed=seed)
        return est.estimate
    return _formula_rank(model)


def _formula_rank(model):
    # rank of the working (observed-coordinate) map entering dof
    rank = getattr(model, "nonlinear_rank", None)
    if rank is None:
        rank = model.claimed_char_rank
    if rank is None and hasattr(model, "dof"):
        rank = model.obs_dim - model.dof
    return rank


def select_order(obs, model_at_order, r_max, alpha=0.05, sigma2=None, opts=None,
                 seed=0, rank_source="formula", rank_samples=20,
                 stop_at_target=True):
    """Scan orders 1..r_max and accept the first with p-value above alpha.

    ``model_at_order`` maps an integer order to a model instance.  The noise
    variance comes from ``sigma2`` or from ``obs.sigma``; there is no silent
    default.  Orders whose rank saturates the observations are recorded as
    skips and treated as rejections.  With ``stop_at_target`` the restart
    loop of each fit stops as soon as a restart already clears the
    acceptance threshold; this cannot change any accept/reject decision,
    only the exact statistic recorded for accepted orders.
    """
    if not 0 < alpha < 1:
        raise InvalidParameterError("alpha must be in (0, 1)")
    if r_max < 1:
        raise InvalidParameterError("r_max must be >= 1")
    if sigma2 is None:
        if obs.sigma is None:
            raise InvalidParameterError(
                "noise variance unknown: pass sigma2 or estimate it first")
        sigma2 = float(obs.sigma) ** 2
        sigma2_source = "known"
    else:
        sigma2_source = "estimated"
    opts = opts or FitOptions()

    entries = []
    chosen = 0
    for order in range(1, r_max + 1):
        model = model_at_order(order)
        try:
            rank = _test_rank(model, rank_source, rank_samples,
                              numerics.rng_from_seed(seed, task_index=10_000 + order)
                              .integers(2 ** 32))
            dof = obs.y.size - rank
            if dof < 1:
                raise NonpositiveDofError(f"dof {dof} at order {order}")
            fit_opts = opts
            if stop_at_target:
                target = sigma2 * _chi2.isf(alpha, dof) / obs.sample_size
                fit_opts = replace(opts, target_rss=target)
            fit_result = fit(model, obs.y, fit_opts,
                             seed=numerics.rng_from_seed(seed, task_index=order)
                             .integers(2 ** 32))
            report = gof_test(obs, fit_result, rank, sigma2=sigma2,
                              sigma2_source=sigma2_source)
        except NonpositiveDofError as exc:
            entries.append(SelectionEntry(order=order, decision="skip", note=str(exc)))
            continue
        if report.p_value > alpha:
            entries.append(SelectionEntry(order=order, decision="accept", report=report))
            chosen = order
            break
        entries.append(SelectionEntry(order=order, decision="reject", report=report))
    return SelectionTrace(alpha=alpha, entries=tuple(entries), chosen_order=chosen,
                          r_max=r_max)


@dataclass(frozen=True)
class ReplicationSummary:
    counts: dict               # chosen order -> count (0 = all rejected)
    num_reps: int
    true_order: int | None
    failures: int = 0
    fdr: float | None = None
    fdr_defined: bool = True

    @property
    def correct(self):
        if self.true_order is None:
            return None
        return self.counts.get(self.true_order, 0)


def _one_replication(args):
    scenario, rep, seed, r_max, alpha, rank_source = args
    try:
        obs, model_at_order = scenario.generate(
            numerics.rng_from_seed(seed, task_index=rep))
        trace = select_order(obs, model_at_order, r_max=r_max, alpha=alpha,
                             opts=scenario.fit_options(),
                             seed=int(numerics.rng_from_seed(seed, task_index=rep)
                                      .integers(2 ** 32)),
                             rank_source=rank_source)
        return trace.chosen_order, None
    except ManifoldGofError as exc:
        return None, str(exc)


def run_replications(scenario, num_reps, r_max, alpha, seed=0, jobs=1,
                     rank_source="formula"):
    """Independent seeded replications of synthesize-then-select.

    Individual replication failures are recorded, never raised.  Results
    are identical for any ``jobs`` value because every replication derives
    its stream from (seed, replication index).
    """
    if num_reps < 0:
        raise InvalidParameterError("num_reps must be >= 0")
    counts = {}
    failures = 0
    if num_reps == 0:
        return ReplicationSummary(counts={}, num_reps=0,
                                  true_order=getattr(scenario, "true_order", None),
                                  fdr=None, fdr_defined=False)
    tasks = [(scenario, rep, seed, r_max, alpha, rank_source)
             for rep in range(num_reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_replication, tasks, chunksize=1))
    else:
        results = [_one_replication(t) for t in tasks]
    for chosen, err in results:
        if err is not None:
            failures += 1
            continue
        counts[chosen] = counts.get(chosen, 0) + 1
    true_order = getattr(scenario, "true_order", None)
    completed = num_reps - failures
    fdr = None
    if true_order is not None and completed > 0:
        wrong = sum(c for order, c in counts.items() if order != true_order)
        fdr = wrong / completed
    return ReplicationSummary(counts=counts, num_reps=num_reps, true_order=true_order,
                              failures=failures, fdr=fdr,
                              fdr_defined=fdr is not None)

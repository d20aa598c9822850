"""K-fold cross-fitting and the debiased estimators of the average association.

Each fold's nuisance triple (including featurization) is fit on the fold's
complement and evaluated on the held-out fold; the point estimate is the
grand mean of the uncentered scores over all records and the variance is
the mean squared deviation of the scores around it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    PROSPECTIVE,
    RETROSPECTIVE,
    Dataset,
    Estimate,
    NuisanceTriple,
)
from .featurize import FeatureSpec
from .nuisance import (
    FoldDegenerate,
    LearnerConfig,
    _fold_ids,
    fit_nuisance_triple,
)

__all__ = [
    "FoldPlan",
    "make_folds",
    "crossfit_triple",
    "dml_estimate",
    "plugin_estimate",
    "subpop_average",
]

SUBPOP_T1 = "T1"
SUBPOP_Y1 = "Y1"


@dataclass(frozen=True)
class FoldPlan:
    """Per-record fold ids forming a balanced partition."""

    assignments: np.ndarray
    K: int
    seed: object = None

    def __post_init__(self):
        ids = np.asarray(self.assignments, dtype=np.int64)
        if ids.ndim != 1 or len(ids) < self.K or self.K < 2:
            raise ValueError("need a 1-d assignment vector with K >= 2 and n >= K")
        sizes = np.bincount(ids, minlength=self.K)
        if len(sizes) != self.K or sizes.min() == 0:
            raise ValueError("fold ids must cover 0..K-1")
        if sizes.max() - sizes.min() > 1:
            raise ValueError("fold sizes must differ by at most 1")
        ids = ids.copy()
        ids.flags.writeable = False
        object.__setattr__(self, "assignments", ids)

    @property
    def n(self) -> int:
        return len(self.assignments)


def make_folds(n: int, K: int, seed) -> FoldPlan:
    """Balanced K-fold partition: seeded shuffle, then contiguous blocks."""
    if K < 2 or K > n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    return FoldPlan(assignments=_fold_ids(n, K, seed), K=K, seed=seed)


def _fold_seed(seed, k: int) -> list:
    if seed is None:
        seed = 0
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return base + [int(k)]


def crossfit_triple(
    data: Dataset,
    spec: FeatureSpec | None,
    config: LearnerConfig,
    folds: FoldPlan,
    form: str,
) -> tuple[NuisanceTriple, tuple[str, ...]]:
    """Held-out nuisance probabilities for every record.

    Fits one nuisance triple per fold on the fold complement and stitches
    the held-out evaluations into full-length arrays, so downstream scores
    never see in-sample predictions.
    """
    n = data.n
    f0 = np.empty(n)
    f1 = np.empty(n)
    w = np.empty(n)
    warnings: list[str] = []
    for k in range(folds.K):
        test = folds.assignments == k
        try:
            nf = fit_nuisance_triple(
                data.take(~test), form, config, spec, seed=_fold_seed(folds.seed, k)
            )
        except FoldDegenerate as exc:
            raise FoldDegenerate(exc.stratum, fold=k) from exc
        trip = nf.triple(data.x[test])
        f0[test], f1[test], w[test] = trip.f0, trip.f1, trip.w
        warnings.extend(f"fold {k}: {msg}" for msg in nf.warnings)
    return NuisanceTriple(form, f0, f1, w, config.epsilon_trim), tuple(warnings)


def dml_estimate(
    data: Dataset,
    spec: FeatureSpec | None,
    config: LearnerConfig,
    K: int = 10,
    seed=0,
    form: str = PROSPECTIVE,
    alpha: float = 0.05,
    folds: FoldPlan | None = None,
) -> Estimate:
    """Cross-fitted debiased estimate with its normal-theory intervals.

    The estimate is the grand mean over all n records of the uncentered
    held-out scores (identical to the mean of per-fold means when fold
    sizes are equal); the variance estimate centers the same scores at the
    point estimate.
    """
    if form not in (PROSPECTIVE, RETROSPECTIVE):
        raise ValueError(f"form must be prospective or retrospective, got {form!r}")
    plan = folds if folds is not None else make_folds(data.n, K, seed)
    triple, _ = crossfit_triple(data, spec, config, plan, form)
    psi = triple.psi(data.y, data.t)
    theta = float(np.mean(psi))
    sigma = float(np.sqrt(np.mean((psi - theta) ** 2)))
    fold_means = [float(np.mean(psi[plan.assignments == k])) for k in range(plan.K)]
    return Estimate.build(theta, sigma, data.n, form, alpha, fold_means)


def plugin_estimate(
    data: Dataset,
    spec: FeatureSpec | None,
    config: LearnerConfig,
    form: str = PROSPECTIVE,
    alpha: float = 0.05,
) -> Estimate:
    """Average fitted log odds ratio from one full-sample nuisance fit.

    No cross-fitting and no score correction; reported without a standard
    error because no inference theory backs this estimator.
    """
    if form not in (PROSPECTIVE, RETROSPECTIVE):
        raise ValueError(f"form must be prospective or retrospective, got {form!r}")
    nf = fit_nuisance_triple(data, form, config, spec)
    log_or = nf.log_or(data.x)
    return Estimate.build(float(np.mean(log_or)), None, data.n, f"{form}_plugin", alpha)


def _subpop_mask(data: Dataset, condition: str) -> np.ndarray:
    cond = condition.replace("=", "").upper()
    if cond == SUBPOP_T1:
        return data.t == 1
    if cond == SUBPOP_Y1:
        return data.y == 1
    raise ValueError(f"condition must be T1 or Y1, got {condition!r}")


def subpop_average(
    data: Dataset,
    spec: FeatureSpec | None,
    config: LearnerConfig,
    K: int = 10,
    seed=0,
    condition: str = SUBPOP_T1,
    form: str = PROSPECTIVE,
    folds: FoldPlan | None = None,
) -> Estimate:
    """Cross-fitted mean log odds ratio over one observed stratum.

    Point estimate only: no efficiency or variance claim is made for these
    subpopulation averages, so the interval fields stay empty.
    """
    mask = _subpop_mask(data, condition)
    if not mask.any():
        raise ValueError(f"empty stratum {condition}")
    plan = folds if folds is not None else make_folds(data.n, K, seed)
    triple, _ = crossfit_triple(data, spec, config, plan, form)
    log_or = triple.log_or()
    theta = float(np.mean(log_or[mask]))
    return Estimate.build(theta, None, int(mask.sum()), f"{form}_subpop_{condition}")

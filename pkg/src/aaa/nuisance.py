"""Probability-model learners for the nuisance functions.

Three interchangeable learners sit behind one predict interface:

* ``l1_logit`` -- lasso-penalized logistic regression fit by coordinate
  descent over a decreasing penalty path, with the penalty chosen by
  K-fold cross-validated deviance (the minimizer, no one-standard-error
  rule).
* ``mle_logit`` -- unpenalized logistic regression by Newton iterations,
  also used as the reference solution for the penalized fit at zero
  penalty.
* ``oracle`` -- truth injection for tests and calibration studies: the
  supplied data-generating object answers with its exact conditionals.

All predicted probabilities are trimmed into [eps, 1-eps] so downstream
scores never divide by vanishing probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._cd import fit_logit_path
from .domain import (
    CATEGORICAL,
    NUMERIC,
    PROSPECTIVE,
    RETROSPECTIVE,
    Dataset,
    NuisanceTriple,
    log_odds,
    logistic,
)
from .featurize import FeatureSpec, FittedDesign, fit_design

__all__ = [
    "ConvergenceError",
    "FoldDegenerate",
    "LogitModel",
    "CvPlan",
    "CvCurve",
    "LearnerConfig",
    "fit_logit_l1",
    "fit_logit_irls",
    "cv_fit_logit_l1",
    "predict_proba",
    "lambda_max",
    "lambda_path",
    "FittedNuisance",
    "fit_nuisance_triple",
]

L1_LOGIT = "l1_logit"
MLE_LOGIT = "mle_logit"
ORACLE = "oracle"

# path interiors are only search points: fit them at a relaxed tolerance and
# truncate the path when a penalty exceeds this sweep budget (the selected
# penalty is always refit at the strict tolerance afterwards)
PATH_TOL = 1e-4
PATH_SWEEP_BUDGET = 150


class ConvergenceError(RuntimeError):
    """Fit did not reach the stationarity tolerance; carries the last iterate."""

    def __init__(self, message: str, model: "LogitModel | None" = None, kkt: float = np.nan):
        super().__init__(message)
        self.model = model
        self.kkt = kkt


class FoldDegenerate(RuntimeError):
    """A conditioning stratum needed by the requested form is empty."""

    def __init__(self, stratum: str, fold: int | None = None):
        self.stratum = stratum
        self.fold = fold
        where = f" in fold {fold}" if fold is not None else ""
        super().__init__(f"no records with {stratum}{where}")


@dataclass(frozen=True)
class CvCurve:
    """Cross-validation record: penalty path and deviance curves."""

    lambdas: tuple[float, ...]
    cv_deviance: tuple[float, ...]
    train_deviance: tuple[float, ...]
    selected: float
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class LogitModel:
    """Fitted logistic model, coefficients reported on the original scale."""

    intercept: float
    coef: np.ndarray
    lam: float
    eps_trim: float
    means: np.ndarray
    scales: np.ndarray
    intercept_std: float
    coef_std: np.ndarray
    converged: bool
    n_cycles: int
    kkt: float
    cv: CvCurve | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.coef)) or not np.isfinite(self.intercept):
            raise ValueError("coefficients must be finite")

    def linear_predictor(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(self.coef):
            raise ValueError("row width does not match the model")
        return self.intercept + rows @ self.coef

    def linear_predictor_std(self, rows: np.ndarray) -> np.ndarray:
        rows = (np.asarray(rows, dtype=np.float64) - self.means) / self.scales
        return self.intercept_std + rows @ self.coef_std


@dataclass(frozen=True)
class CvPlan:
    """Penalty-selection plan: fold count and the path to search."""

    n_folds: int = 5
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4
    lambda_path: tuple[float, ...] | None = None
    selection: str = "min-deviance"

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        if self.selection != "min-deviance":
            raise ValueError("only min-deviance selection is supported")
        if self.lambda_path is not None:
            path = tuple(float(v) for v in self.lambda_path)
            if any(v <= 0 for v in path) or not all(b < a for a, b in zip(path, path[1:])):
                raise ValueError("lambda_path must be strictly decreasing and positive")
            object.__setattr__(self, "lambda_path", path)


@dataclass(frozen=True)
class LearnerConfig:
    """Learner block as it appears in run configuration."""

    learner: str = L1_LOGIT
    epsilon_trim: float = 1e-3
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4
    cv_folds: int = 5
    tol: float = 1e-7
    max_iter: int = 100_000
    seed: int = 0
    truth: object | None = None

    def __post_init__(self):
        if self.learner not in (L1_LOGIT, MLE_LOGIT, ORACLE):
            raise ValueError(f"unknown learner {self.learner!r}")
        if not (0.0 < self.epsilon_trim < 0.5):
            raise ValueError("epsilon_trim must lie in (0, 0.5)")

    def to_config(self) -> dict:
        return {
            "learner": self.learner,
            "epsilon_trim": self.epsilon_trim,
            "n_lambda": self.n_lambda,
            "lambda_min_ratio": self.lambda_min_ratio,
            "cv_folds": self.cv_folds,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "seed": self.seed,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "LearnerConfig":
        keys = {
            "learner",
            "epsilon_trim",
            "n_lambda",
            "lambda_min_ratio",
            "cv_folds",
            "tol",
            "max_iter",
            "seed",
        }
        unknown = set(cfg) - keys
        if unknown:
            raise ValueError(f"unknown learner options: {sorted(unknown)}")
        return cls(**{k: cfg[k] for k in keys & set(cfg)})


# ---------------------------------------------------------------------------
# penalized logistic regression


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales = np.where(scales > 0.0, scales, 1.0)
    return (X - means) / scales, means, scales


def lambda_max(design: np.ndarray, labels: np.ndarray) -> float:
    """Smallest penalty at which every slope is exactly zero.

    Computed on the internally standardized scale as the largest absolute
    gradient coordinate at the intercept-only fit.
    """
    Xs, _, _ = _standardize(np.asarray(design, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64)
    return float(np.abs(Xs.T @ (y - y.mean())).max() / len(y))


def lambda_path(lam_max: float, n_lambda: int, min_ratio: float) -> np.ndarray:
    return lam_max * np.power(min_ratio, np.arange(n_lambda) / max(n_lambda - 1, 1))


def _check_fit_inputs(design: np.ndarray, labels: np.ndarray):
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise ValueError("design must be (n, d) with one label per row")
    if len(y) < 2:
        raise ValueError("need at least two rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    return X, y


def _constant_label_model(ybar: float, d: int, lam: float, eps: float) -> LogitModel:
    b0 = float(log_odds(np.clip(ybar, eps, 1.0 - eps)))
    zeros = np.zeros(d)
    return LogitModel(
        intercept=b0,
        coef=zeros,
        lam=lam,
        eps_trim=eps,
        means=zeros.copy(),
        scales=np.ones(d),
        intercept_std=b0,
        coef_std=zeros.copy(),
        converged=True,
        n_cycles=0,
        kkt=0.0,
    )


def _models_from_path(
    X: np.ndarray,
    y: np.ndarray,
    lambdas: np.ndarray,
    eps: float,
    tol: float,
    max_iter: int,
    early_stop: bool = False,
    init: tuple[float, np.ndarray] | None = None,
):
    """Run the column-sparse path kernel; wrap each solution as a model.

    With ``early_stop`` the kernel may fit only a prefix of the path (it
    stops once the training deviance saturates or a step fails to
    converge); trailing unconverged entries are dropped so every returned
    model meets the stationarity contract.  Also returns the kernel's
    training deviance per returned model.  ``init`` warm-starts the first
    penalty from a standardized-scale (intercept, slopes) iterate.
    """
    from scipy.sparse import csc_array

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    means = X.mean(axis=0)
    scales = X.std(axis=0)  # zero scale freezes the coordinate in the kernel
    sp = csc_array(X)
    indptr = sp.indptr.astype(np.int64)
    indices = sp.indices.astype(np.int64)
    vals = sp.data.astype(np.float64)
    if init is None:
        b0_init, beta_init = float(log_odds(float(y.mean()))), np.zeros(X.shape[1])
    else:
        b0_init, beta_init = float(init[0]), np.asarray(init[1], dtype=np.float64)
    b0s, betas, kkts, cycles, conv, n_fitted, devs = fit_logit_path(
        indptr,
        indices,
        vals,
        X.shape[0],
        y,
        means,
        scales,
        np.asarray(lambdas, dtype=np.float64),
        tol,
        max_iter,
        1 if early_stop else 0,
        b0_init,
        beta_init,
    )
    usable = int(n_fitted)
    if early_stop:
        while usable > 0 and not conv[usable - 1]:
            usable -= 1
    safe_scales = np.where(scales > 0.0, scales, 1.0)
    models = []
    for i in range(usable):
        coef_std = betas[i]
        coef = coef_std / safe_scales
        models.append(
            LogitModel(
                intercept=float(b0s[i] - coef @ means),
                coef=coef,
                lam=float(lambdas[i]),
                eps_trim=eps,
                means=means,
                scales=safe_scales,
                intercept_std=float(b0s[i]),
                coef_std=coef_std,
                converged=bool(conv[i]),
                n_cycles=int(cycles[i]),
                kkt=float(kkts[i]),
            )
        )
    return models, [float(v) for v in devs[:usable]]


def fit_logit_l1(
    design: np.ndarray,
    labels: np.ndarray,
    lam: float,
    *,
    epsilon_trim: float = 1e-3,
    tol: float = 1e-7,
    max_iter: int = 100_000,
    init: tuple[float, np.ndarray] | None = None,
) -> LogitModel:
    """Fit one lasso-penalized logistic regression.

    The objective is the mean negative log-likelihood plus ``lam`` times the
    L1 norm of the slopes; the intercept is never penalized and columns are
    standardized internally.  Raises :class:`ConvergenceError` (carrying the
    last iterate and its stationarity residual) if ``max_iter`` coordinate
    sweeps do not reach ``tol``.
    """
    X, y = _check_fit_inputs(design, labels)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    ybar = float(y.mean())
    if ybar in (0.0, 1.0):
        return _constant_label_model(ybar, X.shape[1], lam, epsilon_trim)
    models, _ = _models_from_path(X, y, np.array([lam]), epsilon_trim, tol, max_iter, init=init)
    model = models[0]
    if not model.converged:
        raise ConvergenceError(
            f"no convergence after {max_iter} sweeps (kkt={model.kkt:.3e})",
            model=model,
            kkt=model.kkt,
        )
    return model


def fit_logit_irls(
    design: np.ndarray,
    labels: np.ndarray,
    *,
    epsilon_trim: float = 1e-3,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> LogitModel:
    """Unpenalized logistic regression by Newton (IRLS) iterations.

    Independent of the coordinate-descent path code; serves both as the
    ``mle_logit`` learner and as the reference for the penalized fit at
    zero penalty.
    """
    X, y = _check_fit_inputs(design, labels)
    ybar = float(y.mean())
    if ybar in (0.0, 1.0):
        return _constant_label_model(ybar, X.shape[1], 0.0, epsilon_trim)
    Xa = np.column_stack([np.ones(len(y)), X])
    beta = np.zeros(Xa.shape[1])
    beta[0] = float(log_odds(ybar))
    n = len(y)
    kkt = np.inf
    for _ in range(max_iter):
        p = logistic(Xa @ beta)
        g = Xa.T @ (y - p) / n
        kkt = float(np.abs(g).max())
        if kkt < tol:
            break
        w = np.clip(p * (1.0 - p), 1e-10, None)
        H = (Xa * w[:, None]).T @ Xa / n
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Hessian: {exc}", kkt=kkt) from exc
        beta = beta + step
    else:
        raise ConvergenceError(f"IRLS: no convergence after {max_iter} iterations", kkt=kkt)
    d = X.shape[1]
    return LogitModel(
        intercept=float(beta[0]),
        coef=beta[1:].copy(),
        lam=0.0,
        eps_trim=epsilon_trim,
        means=np.zeros(d),
        scales=np.ones(d),
        intercept_std=float(beta[0]),
        coef_std=beta[1:].copy(),
        converged=True,
        n_cycles=0,
        kkt=kkt,
    )


def _fold_ids(n: int, k: int, seed) -> np.ndarray:
    """Seeded shuffle, then contiguous blocks whose sizes differ by <= 1."""
    perm = np.random.default_rng(seed).permutation(n)
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    ids = np.empty(n, dtype=np.int64)
    start = 0
    for fold, size in enumerate(sizes):
        ids[perm[start : start + size]] = fold
        start += size
    return ids


def cv_fit_logit_l1(
    design: np.ndarray,
    labels: np.ndarray,
    cv: CvPlan,
    seed,
    *,
    epsilon_trim: float = 1e-3,
    tol: float = 1e-7,
    max_iter: int = 100_000,
) -> LogitModel:
    """Select the penalty by cross-validated deviance and refit on all rows.

    The path is fit once on the full data (recording training deviance),
    then refit per CV fold with the penalty fixed across folds; the chosen
    penalty minimizes the pooled held-out mean negative log-likelihood.
    """
    X, y = _check_fit_inputs(design, labels)
    n = len(y)
    if n < 2 * cv.n_folds:
        raise ValueError("need at least 2 rows per CV fold")
    ybar = float(y.mean())
    if ybar in (0.0, 1.0):
        return _constant_label_model(ybar, X.shape[1], 0.0, epsilon_trim)

    if cv.lambda_path is not None:
        lambdas = np.asarray(cv.lambda_path, dtype=np.float64)
    else:
        lam_max = lambda_max(X, y)
        if lam_max <= 0.0:
            return _constant_label_model(ybar, X.shape[1], 0.0, epsilon_trim)
        lambdas = lambda_path(lam_max, cv.n_lambda, cv.lambda_min_ratio)

    path_tol = max(tol, PATH_TOL)
    budget = min(max_iter, PATH_SWEEP_BUDGET)
    full_models, train_dev = _models_from_path(
        X, y, lambdas, epsilon_trim, path_tol, budget, early_stop=True
    )
    if not full_models:
        # not even the largest penalty is fittable (a handful of events
        # against many columns): the honest answer is the label mean
        mdl = _constant_label_model(ybar, X.shape[1], float(lambdas[0]), epsilon_trim)
        curve = CvCurve(
            lambdas=(float(lambdas[0]),),
            cv_deviance=(),
            train_deviance=(),
            selected=float(lambdas[0]),
            warnings=("degenerate fit: intercept-only fallback",),
        )
        return replace(mdl, cv=curve)
    lambdas = lambdas[: len(full_models)]

    folds = _fold_ids(n, cv.n_folds, seed)
    warnings: list[str] = []
    held_out_nll = np.zeros(len(lambdas))
    usable = len(lambdas)
    for k in range(cv.n_folds):
        test = folds == k
        Xtr, ytr = X[~test], y[~test]
        fold_models: list[LogitModel] = []
        if 0.0 < float(ytr.mean()) < 1.0:
            fold_models, _ = _models_from_path(
                Xtr, ytr, lambdas, epsilon_trim, path_tol, budget, early_stop=True
            )
        if not fold_models:
            warnings.append(f"cv fold {k}: degenerate training labels, intercept-only path")
            mdl = _constant_label_model(float(ytr.mean()), X.shape[1], 0.0, epsilon_trim)
            fold_models = [mdl] * len(lambdas)
        # selection is restricted to penalties every fold managed to fit
        usable = min(usable, len(fold_models))
        for li, m in enumerate(fold_models):
            probs = predict_proba(m, X[test])
            held_out_nll[li] += -np.sum(
                y[test] * np.log(probs) + (1.0 - y[test]) * np.log1p(-probs)
            )
    cv_dev = held_out_nll[:usable] / n
    best = int(np.argmin(cv_dev))
    # strict refit of the selected penalty on all rows, warm-started from the
    # relaxed path solution (same rows, so the standardization agrees)
    selected = fit_logit_l1(
        X,
        y,
        float(lambdas[best]),
        epsilon_trim=epsilon_trim,
        tol=tol,
        max_iter=max_iter,
        init=(full_models[best].intercept_std, full_models[best].coef_std),
    )
    curve = CvCurve(
        lambdas=tuple(float(v) for v in lambdas[:usable]),
        cv_deviance=tuple(float(v) for v in cv_dev),
        train_deviance=tuple(float(v) for v in train_dev[:usable]),
        selected=float(lambdas[best]),
        warnings=tuple(warnings),
    )
    return replace(selected, cv=curve)


def predict_proba(model: LogitModel, rows: np.ndarray) -> np.ndarray:
    """Logistic link of the linear predictor, trimmed into [eps, 1-eps]."""
    p = logistic(model.linear_predictor(rows))
    return np.clip(p, model.eps_trim, 1.0 - model.eps_trim)


# ---------------------------------------------------------------------------
# nuisance triples


@dataclass(frozen=True)
class FittedNuisance:
    """Three predictors evaluable on arbitrary raw covariate rows."""

    kind: str
    eps: float
    design: FittedDesign | None
    model_f0: LogitModel | None
    model_f1: LogitModel | None
    model_w: LogitModel | None
    truth: object | None = None
    warnings: tuple[str, ...] = ()

    def triple(self, x_rows: np.ndarray) -> NuisanceTriple:
        """Evaluate the triple on raw rows, trimming into [eps, 1-eps]."""
        x_rows = np.asarray(x_rows, dtype=np.float64)
        if self.truth is not None:
            if self.kind == PROSPECTIVE:
                f0, f1, w = self.truth.prospective_probs(x_rows)
            else:
                f0, f1, w = self.truth.retrospective_probs(x_rows)
            clip = lambda p: np.clip(np.asarray(p, dtype=np.float64), self.eps, 1.0 - self.eps)
            return NuisanceTriple(self.kind, clip(f0), clip(f1), clip(w), self.eps)
        design, _ = self.design.transform(x_rows)
        return NuisanceTriple(
            self.kind,
            predict_proba(self.model_f0, design),
            predict_proba(self.model_f1, design),
            predict_proba(self.model_w, design),
            self.eps,
        )

    def log_or(self, x_rows: np.ndarray) -> np.ndarray:
        return self.triple(x_rows).log_or()


def _fit_one(design, labels, config: LearnerConfig, seed) -> LogitModel:
    if config.learner == MLE_LOGIT:
        return fit_logit_irls(design, labels, epsilon_trim=config.epsilon_trim)
    n = len(labels)
    if n < 4:
        # too few rows to cross-validate at all: shrink to the label mean
        return _constant_label_model(float(np.mean(labels)), design.shape[1], 0.0,
                                     config.epsilon_trim)
    plan = CvPlan(
        n_folds=min(config.cv_folds, n // 2),  # tiny strata get fewer folds, not a failure
        n_lambda=config.n_lambda,
        lambda_min_ratio=config.lambda_min_ratio,
    )
    return cv_fit_logit_l1(
        design,
        labels,
        plan,
        seed,
        epsilon_trim=config.epsilon_trim,
        tol=config.tol,
        max_iter=config.max_iter,
    )


def fit_nuisance_triple(
    train: Dataset,
    kind: str,
    config: LearnerConfig,
    spec: FeatureSpec | None = None,
    seed: Sequence[int] | None = None,
) -> FittedNuisance:
    """Fit the three probability models for one cross-fitting fold.

    Prospective: outcome models on the exposed and unexposed subsets plus
    the exposure propensity on all rows.  Retrospective: exposure models
    within the outcome strata plus the outcome marginal.  Featurization is
    fit on exactly the rows supplied here.  Small strata degrade rather
    than fail: the cross-validation fold count shrinks with the subset and
    a subset too small or too unbalanced to fit at all falls back to its
    trimmed label mean.
    """
    if kind not in (PROSPECTIVE, RETROSPECTIVE):
        raise ValueError(f"kind must be prospective or retrospective, got {kind!r}")
    if config.learner == ORACLE:
        if config.truth is None:
            raise ValueError("oracle learner requires a truth object in the config")
        return FittedNuisance(
            kind=kind,
            eps=config.epsilon_trim,
            design=None,
            model_f0=None,
            model_f1=None,
            model_w=None,
            truth=config.truth,
        )

    if kind == PROSPECTIVE:
        split, arm_labels, w_labels = train.t, train.y, train.t
        names = ("t=0", "t=1")
    else:
        split, arm_labels, w_labels = train.y, train.t, train.y
        names = ("y=0", "y=1")
    mask1 = split == 1
    if not mask1.any():
        raise FoldDegenerate(names[1])
    if mask1.all():
        raise FoldDegenerate(names[0])

    if seed is None:
        seed = config.seed if isinstance(config.seed, (tuple, list)) else [config.seed]
    base = [int(v) for v in seed]
    fitted = fit_design(spec or FeatureSpec.passthrough(train.x.shape[1]), train.x, train.kinds)
    design, warn = fitted.transform(train.x)
    model_f0 = _fit_one(design[~mask1], arm_labels[~mask1], config, base + [0])
    model_f1 = _fit_one(design[mask1], arm_labels[mask1], config, base + [1])
    model_w = _fit_one(design, w_labels, config, base + [2])
    return FittedNuisance(
        kind=kind,
        eps=config.epsilon_trim,
        design=fitted,
        model_f0=model_f0,
        model_f1=model_f1,
        model_w=model_w,
        warnings=tuple(warn),
    )

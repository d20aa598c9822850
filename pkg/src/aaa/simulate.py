"""Synthetic data generation and the Monte Carlo comparison harness.

The builtin family draws age uniformly, assigns exposure from a logit in
age and age squared, and draws the outcome from a logit in exposure, age
and age squared, so the exposure coefficient IS the average adjusted
association.  An optional categorical column with no effect lets the
estimators fit a deliberately over-specified design.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .crossfit import dml_estimate, plugin_estimate
from .domain import CATEGORICAL, NUMERIC, PROSPECTIVE, RETROSPECTIVE, Dataset, DiscreteDGP
from .featurize import FeatureSpec, OneHot, Spline
from .nuisance import ORACLE, LearnerConfig

__all__ = [
    "LogitDGP",
    "EstimatorSpec",
    "EstimatorSummary",
    "McReport",
    "sample",
    "run_mc",
    "default_estimators",
]

DML = "dml"
PLUGIN = "plugin"


@dataclass(frozen=True)
class LogitDGP:
    """Logit-in-age data generating process with a known association.

    Exposure: P(T=1 | age) = G(a0 + a1*c + a2*c^2) with c the age centered
    at the midpoint of its range.  Outcome: P(Y=1 | T, age) =
    G(b0 + b1*T + b2*c + b3*c^2).  The association is homogeneous, so the
    true average adjusted association equals b1 exactly.
    """

    age_low: float = 25.0
    age_high: float = 65.0
    alpha: tuple[float, float, float] = (-0.4, 0.015, -0.0002)
    beta: tuple[float, float, float, float] = (-3.0, 0.7, 0.04, -0.0004)
    n_categories: int = 20
    category_freqs: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.age_high <= self.age_low:
            raise ValueError("age_high must exceed age_low")
        if len(self.alpha) != 3 or len(self.beta) != 4:
            raise ValueError("alpha must have 3 entries and beta 4")
        if self.n_categories < 0:
            raise ValueError("n_categories must be >= 0")
        if self.category_freqs is not None:
            freqs = tuple(float(f) for f in self.category_freqs)
            if len(freqs) != self.n_categories or any(f <= 0 for f in freqs):
                raise ValueError("category_freqs must be positive, one per category")
            total = sum(freqs)
            object.__setattr__(self, "category_freqs", tuple(f / total for f in freqs))
        grid = np.linspace(self.age_low, self.age_high, 2001)
        probs = np.concatenate(
            [self.p_exposure(grid), self.p_outcome(grid, 0), self.p_outcome(grid, 1)]
        )
        if probs.min() < 1e-4 or probs.max() > 1.0 - 1e-4:
            raise ValueError("implied conditional probabilities leave [1e-4, 1-1e-4]")

    @property
    def theta0(self) -> float:
        """True average adjusted association (the exposure coefficient)."""
        return float(self.beta[1])

    def _centered(self, age):
        return np.asarray(age, dtype=np.float64) - 0.5 * (self.age_low + self.age_high)

    def p_exposure(self, age) -> np.ndarray:
        a0, a1, a2 = self.alpha
        c = self._centered(age)
        z = a0 + a1 * c + a2 * c**2
        return 1.0 / (1.0 + np.exp(-z))

    def p_outcome(self, age, t) -> np.ndarray:
        b0, b1, b2, b3 = self.beta
        c = self._centered(age)
        z = b0 + b1 * np.asarray(t, dtype=np.float64) + b2 * c + b3 * c**2
        return 1.0 / (1.0 + np.exp(-z))

    # truth injection ---------------------------------------------------------

    def prospective_probs(self, x_rows: np.ndarray):
        age = np.asarray(x_rows, dtype=np.float64)[:, 0]
        return self.p_outcome(age, 0), self.p_outcome(age, 1), self.p_exposure(age)

    def retrospective_probs(self, x_rows: np.ndarray):
        age = np.asarray(x_rows, dtype=np.float64)[:, 0]
        f0, f1, w = self.p_outcome(age, 0), self.p_outcome(age, 1), self.p_exposure(age)
        py1 = f1 * w + f0 * (1.0 - w)
        q1 = f1 * w / py1
        q0 = (1.0 - f1) * w / (1.0 - py1)
        return q0, q1, py1

    # derived structures ------------------------------------------------------

    def feature_spec(self) -> FeatureSpec:
        """Deliberately over-specified design: age spline plus null dummies."""
        cols = [Spline(degree=3, n_inner_knots=17, knot_rule="quantile", name="age")]
        if self.n_categories > 0:
            cols.append(OneHot(drop_first=True, name="group"))
        return FeatureSpec(tuple(cols))

    def discretize(self, n_grid: int = 201) -> DiscreteDGP:
        """Finite-support stand-in over an age grid, for exact-oracle checks."""
        edges = np.linspace(self.age_low, self.age_high, n_grid + 1)
        ages = 0.5 * (edges[:-1] + edges[1:])
        w = self.p_exposure(ages)
        f0 = self.p_outcome(ages, 0)
        f1 = self.p_outcome(ages, 1)
        joint = np.empty((n_grid, 2, 2))
        joint[:, 1, 1] = f1 * w
        joint[:, 0, 1] = (1.0 - f1) * w
        joint[:, 1, 0] = f0 * (1.0 - w)
        joint[:, 0, 0] = (1.0 - f0) * (1.0 - w)
        eps = min(0.24, float(joint.min()) * (1.0 - 1e-9))
        return DiscreteDGP(
            support=ages[:, None], px=np.full(n_grid, 1.0 / n_grid), joint=joint, eps=eps
        )

    def to_config(self) -> dict:
        return {
            "age_low": self.age_low,
            "age_high": self.age_high,
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "n_categories": self.n_categories,
            "category_freqs": list(self.category_freqs) if self.category_freqs else None,
            "seed": self.seed,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "LogitDGP":
        kwargs = dict(cfg)
        if "alpha" in kwargs:
            kwargs["alpha"] = tuple(kwargs["alpha"])
        if "beta" in kwargs:
            kwargs["beta"] = tuple(kwargs["beta"])
        if kwargs.get("category_freqs") is not None:
            kwargs["category_freqs"] = tuple(kwargs["category_freqs"])
        return cls(**kwargs)


def sample(dgp: LogitDGP, n: int, seed=None) -> Dataset:
    """Draw n i.i.d. records from the process; deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(dgp.seed if seed is None else seed)
    age = rng.uniform(dgp.age_low, dgp.age_high, size=n)
    t = (rng.random(n) < dgp.p_exposure(age)).astype(np.int64)
    y = (rng.random(n) < dgp.p_outcome(age, t)).astype(np.int64)
    if dgp.n_categories > 0:
        freqs = dgp.category_freqs or (1.0 / dgp.n_categories,) * dgp.n_categories
        group = rng.choice(dgp.n_categories, size=n, p=np.asarray(freqs))
        x = np.column_stack([age, group.astype(np.float64)])
        kinds = (NUMERIC, CATEGORICAL)
    else:
        x = age[:, None]
        kinds = (NUMERIC,)
    return Dataset(y=y, t=t, x=x, kinds=kinds)


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator entry in a Monte Carlo run."""

    name: str
    method: str = DML
    form: str = PROSPECTIVE
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    features: FeatureSpec | None = None

    def __post_init__(self):
        if self.method not in (DML, PLUGIN):
            raise ValueError(f"method must be dml or plugin, got {self.method!r}")
        if self.form not in (PROSPECTIVE, RETROSPECTIVE):
            raise ValueError(f"unknown form {self.form!r}")


def default_estimators(learner: LearnerConfig | None = None) -> tuple[EstimatorSpec, ...]:
    """The four-row comparison: both forms, debiased and plug-in."""
    learner = learner or LearnerConfig()
    return (
        EstimatorSpec("prospective_plugin", PLUGIN, PROSPECTIVE, learner),
        EstimatorSpec("retrospective_plugin", PLUGIN, RETROSPECTIVE, learner),
        EstimatorSpec("prospective_dml", DML, PROSPECTIVE, learner),
        EstimatorSpec("retrospective_dml", DML, RETROSPECTIVE, learner),
    )


@dataclass(frozen=True)
class EstimatorSummary:
    """Aggregates for one estimator across replications."""

    name: str
    reps_ok: int
    failures: int
    mean_theta: float | None
    mean_bias: float | None
    sd: float | None
    se_sd_ratio: float | None
    coverage: float | None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "reps_ok": self.reps_ok,
            "failures": self.failures,
            "mean_theta": self.mean_theta,
            "mean_bias": self.mean_bias,
            "sd": self.sd,
            "se_sd_ratio": self.se_sd_ratio,
            "coverage": self.coverage,
        }


@dataclass(frozen=True)
class McReport:
    """Monte Carlo results with the run's identifying settings."""

    theta0: float
    n: int
    reps: int
    alpha: float
    seed: int
    estimators: tuple[EstimatorSummary, ...]
    valid: bool
    failure_messages: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0,
            "n": self.n,
            "reps": self.reps,
            "alpha": self.alpha,
            "seed": self.seed,
            "valid": self.valid,
            "estimators": [e.to_dict() for e in self.estimators],
            "failure_messages": list(self.failure_messages),
        }

    def to_table(self) -> str:
        """Aligned text table: bias, spread and coverage per estimator."""
        pct = round(100 * (1 - self.alpha))
        headers = ["Estimator", "Mean Bias", "Standard Deviation", f"Coverage ({pct}%)"]
        rows = []
        for e in self.estimators:
            fmt = lambda v: "NA" if v is None else f"{v:.4f}"
            rows.append([e.name, fmt(e.mean_bias), fmt(e.sd), fmt(e.coverage)])
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        lines.append("  ".join("-" * w for w in widths))
        for r in rows:
            lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
        return "\n".join(lines)


def _wire_truth(est: EstimatorSpec, dgp: LogitDGP) -> EstimatorSpec:
    if est.learner.learner == ORACLE and est.learner.truth is None:
        return replace(est, learner=replace(est.learner, truth=dgp))
    return est


def _run_rep(dgp, n, K, alpha, seed, rep, estimators):
    """One replication: fresh sample, every estimator, plain-tuple results."""
    data = sample(dgp, n, seed=[seed, rep])
    out = []
    for ei, est in enumerate(estimators):
        spec = est.features if est.features is not None else dgp.feature_spec()
        if est.learner.learner == ORACLE:
            spec = None
        try:
            if est.method == DML:
                res = dml_estimate(
                    data, spec, est.learner, K=K, seed=[seed, rep, ei], form=est.form, alpha=alpha
                )
                lo, hi = res.ci_two_sided
                covers = bool(lo <= dgp.theta0 <= hi)
                out.append((res.theta_hat, res.sigma_hat, covers, None))
            else:
                cfg = replace(est.learner, seed=(seed, rep, ei))
                res = plugin_estimate(data, spec, cfg, form=est.form, alpha=alpha)
                out.append((res.theta_hat, None, None, None))
        except Exception as exc:  # failure policy: exclude and report
            out.append((None, None, None, f"rep {rep} {est.name}: {exc!r}"))
    return rep, out


def run_mc(
    dgp: LogitDGP,
    n: int,
    reps: int,
    estimators=None,
    K: int = 5,
    alpha: float = 0.10,
    seed: int = 0,
    parallelism: int = 1,
) -> McReport:
    """Replicate sampling and estimation; aggregate bias, spread, coverage.

    Every replication derives its random stream from (seed, rep), so the
    report is identical at any parallelism degree.  Replications where an
    estimator raises are excluded from that estimator's moments and counted
    as failures; more than 10% failures for any estimator marks the whole
    report invalid.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    estimators = tuple(
        _wire_truth(e, dgp) for e in (estimators or default_estimators())
    )
    args = [(dgp, n, K, alpha, seed, rep, estimators) for rep in range(reps)]
    results: list = [None] * reps
    if parallelism == 1:
        for a in args:
            rep, out = _run_rep(*a)
            results[rep] = out
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for rep, out in pool.map(_run_rep_star, args, chunksize=max(1, reps // (4 * parallelism))):
                results[rep] = out

    summaries = []
    messages: list[str] = []
    valid = True
    sqrt_n = float(np.sqrt(n))
    for ei, est in enumerate(estimators):
        rows = [results[r][ei] for r in range(reps)]
        thetas = np.array([r[0] for r in rows if r[0] is not None])
        failures = sum(1 for r in rows if r[0] is None)
        messages.extend(r[3] for r in rows if r[3] is not None)
        reps_ok = reps - failures
        mean_theta = float(thetas.mean()) if reps_ok else None
        mean_bias = None if mean_theta is None else mean_theta - dgp.theta0
        sd = float(thetas.std(ddof=1)) if reps_ok >= 2 else None
        sigmas = np.array([r[1] for r in rows if r[1] is not None])
        se_sd = float(sigmas.mean() / sqrt_n / sd) if sd and len(sigmas) == reps_ok and sd > 0 else None
        covers = [r[2] for r in rows if r[2] is not None]
        coverage = float(np.mean(covers)) if covers else None
        if failures > 0.1 * reps:
            valid = False
        summaries.append(
            EstimatorSummary(
                name=est.name,
                reps_ok=reps_ok,
                failures=failures,
                mean_theta=mean_theta,
                mean_bias=mean_bias,
                sd=sd,
                se_sd_ratio=se_sd,
                coverage=coverage,
            )
        )
    return McReport(
        theta0=dgp.theta0,
        n=n,
        reps=reps,
        alpha=alpha,
        seed=seed,
        estimators=tuple(summaries),
        valid=valid,
        failure_messages=tuple(messages),
    )


def _run_rep_star(a):
    return _run_rep(*a)

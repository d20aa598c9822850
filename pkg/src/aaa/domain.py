"""Core data types and pure score functions for average adjusted association.

Everything here is stateless math on probabilities and binary indicators:
conditional log odds ratios, the influence-function scores built from them,
and the product-form doubly robust moment. No fitting, no I/O.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

__all__ = [
    "Dataset",
    "NuisanceTriple",
    "Estimate",
    "DiscreteDGP",
    "log_or_prospective",
    "log_or_retrospective",
    "psi_prospective",
    "psi_retrospective",
    "dr_moment",
    "dr_efficient_score",
    "logistic",
    "log_odds",
]

PROSPECTIVE = "prospective"
RETROSPECTIVE = "retrospective"


def logistic(z):
    """Stable logistic link, preserving the input float dtype."""
    z = np.asarray(z)
    if not np.issubdtype(z.dtype, np.floating):
        z = z.astype(np.float64)
    pos = z >= 0
    ez = np.exp(np.where(pos, -z, z))
    out = np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return out if out.ndim else out[()]


def log_odds(p):
    """Inverse logistic link: log(p) - log(1-p), dtype-preserving."""
    p = np.asarray(p)
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else out[()]


def _check_open_unit(name: str, value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64) if not isinstance(value, np.ndarray) else value
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return arr


def _check_finite(name: str, value) -> np.ndarray:
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def log_or_prospective(p1, p0):
    """Log odds ratio from outcome probabilities in the two exposure arms.

    Parameters
    ----------
    p1 : probability of the outcome given exposure (per point).
    p0 : probability of the outcome given no exposure (per point).

    Returns
    -------
    log{ p1 (1-p0) / [(1-p1) p0] }, elementwise.
    """
    p1 = _check_open_unit("p1", p1)
    p0 = _check_open_unit("p0", p0)
    return log_odds(p1) - log_odds(p0)


def log_or_retrospective(q1, q0):
    """Log odds ratio from exposure probabilities in the two outcome strata.

    Numerically identical to the prospective form by Bayes' rule when the
    inputs come from a common joint law.
    """
    q1 = _check_open_unit("q1", q1)
    q0 = _check_open_unit("q0", q0)
    return log_odds(q1) - log_odds(q0)


def psi_prospective(y, t, p0, p1, w):
    """Uncentered outcome-model score for one record (or arrays of records).

    log OR plus the exposure-weighted residual corrections:

        logOR(p1, p0) + t (y - p1) / [w p1 (1-p1)]
                      - (1-t) (y - p0) / [(1-w) p0 (1-p0)]

    Centering (subtracting a point estimate or the true association) is the
    caller's job: the same uncentered values feed both the point estimate
    and its variance.
    """
    p0 = _check_open_unit("p0", p0)
    p1 = _check_open_unit("p1", p1)
    w = _check_open_unit("w", w)
    y = np.asarray(y)
    t = np.asarray(t)
    base = log_odds(p1) - log_odds(p0)
    corr1 = t * (y - p1) / (w * p1 * (1.0 - p1))
    corr0 = (1.0 - t) * (y - p0) / ((1.0 - w) * p0 * (1.0 - p0))
    out = base + corr1 - corr0
    return out if isinstance(out, np.ndarray) and out.ndim else np.asarray(out)[()]


def psi_retrospective(t, y, q0, q1, w):
    """Uncentered exposure-model score; mirror of :func:`psi_prospective`.

    Roles of outcome and exposure are swapped: q0, q1 are exposure
    probabilities within the outcome strata and w is the outcome marginal.
    """
    return psi_prospective(t, y, q0, q1, w)


def dr_moment(phi_p, phi_r, theta, y, t):
    """Product-form doubly robust moment at one record.

    ``(y - logistic(phi_p)) * (t - logistic(phi_r)) * exp(-theta * t * y)``

    Its conditional mean is zero whenever either baseline log-odds argument
    is correct and theta equals the conditional log odds ratio.
    """
    phi_p = _check_finite("phi_p", phi_p)
    phi_r = _check_finite("phi_r", phi_r)
    theta = _check_finite("theta", theta)
    y = np.asarray(y)
    t = np.asarray(t)
    out = (y - logistic(phi_p)) * (t - logistic(phi_r)) * np.exp(-theta * t * y)
    return out if isinstance(out, np.ndarray) and out.ndim else np.asarray(out)[()]


def dr_efficient_score(y, t, phi_p0, phi_r0, theta0x, pyt11, theta_bar):
    """Centered efficient score in its doubly robust representation.

        theta0x - theta_bar + m(y, t) / [pyt11 * m(1, 1)]

    with m the doubly robust moment at the truth.  ``pyt11`` is the joint
    probability of outcome and exposure both occurring at this covariate
    point; a vanishing denominator means that joint cell has no mass, which
    the bounded-probability requirement on valid joint laws rules out.
    """
    pyt11 = _check_open_unit("pyt11", pyt11)
    m_yt = dr_moment(phi_p0, phi_r0, theta0x, y, t)
    m_11 = dr_moment(phi_p0, phi_r0, theta0x, 1, 1)
    denom = pyt11 * m_11
    if np.any(np.asarray(denom) == 0.0):
        raise ValueError("degenerate denominator: joint (1,1) cell carries no mass")
    out = np.asarray(theta0x) - np.asarray(theta_bar) + m_yt / denom
    return out if isinstance(out, np.ndarray) and out.ndim else np.asarray(out)[()]


def _as_binary(name: str, values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} entries must be 0 or 1")
    return arr.astype(np.int64)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Dataset:
    """Estimation sample: binary outcome, binary exposure, raw covariates.

    ``x`` holds one row per record; categorical columns are carried as
    integer codes and tagged through ``kinds``.
    """

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    kinds: tuple[str, ...] = ()

    def __post_init__(self):
        y = _as_binary("y", self.y)
        t = _as_binary("t", self.t)
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d matrix")
        if len(y) != len(t) or len(y) != x.shape[0]:
            raise ValueError("y, t and x must have one entry per record")
        if len(y) < 1:
            raise ValueError("need at least one record")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        kinds = tuple(self.kinds) if self.kinds else (NUMERIC,) * x.shape[1]
        if len(kinds) != x.shape[1]:
            raise ValueError("one column kind per covariate column required")
        for k in kinds:
            if k not in (NUMERIC, CATEGORICAL):
                raise ValueError(f"unknown column kind {k!r}")
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "t", _readonly(t))
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "kinds", kinds)

    @property
    def n(self) -> int:
        return len(self.y)

    def take(self, idx) -> "Dataset":
        """Row subset as a new Dataset (same column kinds)."""
        idx = np.asarray(idx)
        return Dataset(self.y[idx], self.t[idx], self.x[idx], self.kinds)


@dataclass(frozen=True)
class NuisanceTriple:
    """The three fitted probabilities evaluated on a set of records.

    Prospective: f0, f1 are outcome probabilities in the unexposed/exposed
    arms and w is the exposure propensity.  Retrospective: f0, f1 are
    exposure probabilities in the outcome strata and w is the outcome
    marginal.  All values must already be trimmed to [eps, 1-eps].
    """

    kind: str
    f0: np.ndarray
    f1: np.ndarray
    w: np.ndarray
    eps: float

    def __post_init__(self):
        if self.kind not in (PROSPECTIVE, RETROSPECTIVE):
            raise ValueError(f"kind must be prospective or retrospective, got {self.kind!r}")
        if not (0.0 < self.eps < 0.5):
            raise ValueError("eps must lie in (0, 0.5)")
        for name in ("f0", "f1", "w"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(arr < self.eps) or np.any(arr > 1.0 - self.eps):
                raise ValueError(f"{name} outside [{self.eps}, {1.0 - self.eps}]")
            object.__setattr__(self, name, _readonly(arr))

    def log_or(self) -> np.ndarray:
        return log_or_prospective(self.f1, self.f0)

    def psi(self, y: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Uncentered scores for records (y, t) under this triple's kind."""
        if self.kind == PROSPECTIVE:
            return psi_prospective(y, t, self.f0, self.f1, self.w)
        return psi_retrospective(t, y, self.f0, self.f1, self.w)


@dataclass(frozen=True)
class Estimate:
    """Point estimate with normal-theory intervals on the log-odds scale.

    ``sigma_hat`` is on the per-observation scale; the standard error of
    ``theta_hat`` is ``sigma_hat / sqrt(n)``.  Interval fields are None for
    estimators without a variance theory (plug-in, subpopulation averages).
    """

    theta_hat: float
    sigma_hat: float | None
    n: int
    form: str
    alpha: float
    ci_two_sided: tuple[float, float] | None
    ci_exp: tuple[float, float] | None
    upper_one_sided: float | None
    fold_means: tuple[float, ...]

    @classmethod
    def build(
        cls,
        theta_hat: float,
        sigma_hat: float | None,
        n: int,
        form: str,
        alpha: float = 0.05,
        fold_means: Sequence[float] = (),
    ) -> "Estimate":
        """Assemble the interval fields from (theta, sigma, n, alpha)."""
        if not (0.0 < alpha < 0.5):
            raise ValueError("alpha must lie in (0, 0.5)")
        if sigma_hat is None:
            ci = ci_exp = upper = None
        else:
            if sigma_hat < 0:
                raise ValueError("sigma_hat must be nonnegative")
            se = sigma_hat / np.sqrt(n)
            z_two = float(ndtri(1.0 - alpha / 2.0))
            z_one = float(ndtri(1.0 - alpha))
            ci = (theta_hat - z_two * se, theta_hat + z_two * se)
            ci_exp = (float(np.exp(ci[0])), float(np.exp(ci[1])))
            upper = theta_hat + z_one * se
        return cls(
            theta_hat=float(theta_hat),
            sigma_hat=None if sigma_hat is None else float(sigma_hat),
            n=int(n),
            form=form,
            alpha=float(alpha),
            ci_two_sided=ci,
            ci_exp=ci_exp,
            upper_one_sided=upper,
            fold_means=tuple(float(v) for v in fold_means),
        )

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "sigma_hat": self.sigma_hat,
            "n": self.n,
            "form": self.form,
            "alpha": self.alpha,
            "ci": list(self.ci_two_sided) if self.ci_two_sided else None,
            "ci_exp": list(self.ci_exp) if self.ci_exp else None,
            "upper_one_sided": self.upper_one_sided,
            "fold_means": list(self.fold_means),
        }


@dataclass(frozen=True)
class DiscreteDGP:
    """Finite-support joint law of (outcome, exposure, covariates).

    ``joint[i, y, t]`` is the conditional cell probability at support point
    i.  Every cell must carry mass at least ``eps`` so that all conditional
    probabilities are interior; this is what makes exact enumeration of the
    scores well defined everywhere.
    """

    support: np.ndarray
    px: np.ndarray
    joint: np.ndarray
    eps: float = 1e-6

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.float64)
        if support.ndim == 1:
            support = support[:, None]
        px = np.asarray(self.px, dtype=np.float64)
        joint = np.asarray(self.joint, dtype=np.float64)
        m = support.shape[0]
        if px.shape != (m,) or joint.shape != (m, 2, 2):
            raise ValueError("px must be (m,) and joint (m, 2, 2)")
        if not (0.0 < self.eps < 0.25):
            raise ValueError("eps must lie in (0, 0.25)")
        if np.any(px <= 0.0):
            raise ValueError("px must be strictly positive")
        if abs(px.sum() - 1.0) > 1e-12:
            raise ValueError("px must sum to 1 within 1e-12")
        if np.any(joint < self.eps) or np.any(joint > 1.0 - self.eps):
            raise ValueError(f"joint cells must lie in [{self.eps}, {1.0 - self.eps}]")
        if np.any(np.abs(joint.sum(axis=(1, 2)) - 1.0) > 1e-12):
            raise ValueError("each joint table must sum to 1 within 1e-12")
        object.__setattr__(self, "support", _readonly(support))
        object.__setattr__(self, "px", _readonly(px))
        object.__setattr__(self, "joint", _readonly(joint))

    @property
    def n_points(self) -> int:
        return self.support.shape[0]

    # conditional probabilities, per support point --------------------------

    def marginal_t(self) -> np.ndarray:
        """P(T=1 | x)."""
        return self.joint[:, 0, 1] + self.joint[:, 1, 1]

    def marginal_y(self) -> np.ndarray:
        """P(Y=1 | x)."""
        return self.joint[:, 1, 0] + self.joint[:, 1, 1]

    def outcome_given_exposure(self) -> tuple[np.ndarray, np.ndarray]:
        """(P(Y=1 | T=0, x), P(Y=1 | T=1, x))."""
        w = self.marginal_t()
        p0 = self.joint[:, 1, 0] / (1.0 - w)
        p1 = self.joint[:, 1, 1] / w
        return p0, p1

    def exposure_given_outcome(self) -> tuple[np.ndarray, np.ndarray]:
        """(P(T=1 | Y=0, x), P(T=1 | Y=1, x))."""
        r = self.marginal_y()
        q0 = self.joint[:, 0, 1] / (1.0 - r)
        q1 = self.joint[:, 1, 1] / r
        return q0, q1

    def log_or(self) -> np.ndarray:
        p0, p1 = self.outcome_given_exposure()
        return log_or_prospective(p1, p0)

    # truth injection and sampling ------------------------------------------

    def support_index(self, x_rows: np.ndarray) -> np.ndarray:
        """Map covariate rows (copied from the support) back to indices."""
        lookup = {row.tobytes(): i for i, row in enumerate(self.support)}
        x_rows = np.ascontiguousarray(np.asarray(x_rows, dtype=np.float64))
        try:
            return np.fromiter(
                (lookup[row.tobytes()] for row in x_rows), dtype=np.int64, count=len(x_rows)
            )
        except KeyError:
            raise ValueError("row not on the support of this law") from None

    def prospective_probs(self, x_rows: np.ndarray):
        idx = self.support_index(x_rows)
        p0, p1 = self.outcome_given_exposure()
        return p0[idx], p1[idx], self.marginal_t()[idx]

    def retrospective_probs(self, x_rows: np.ndarray):
        idx = self.support_index(x_rows)
        q0, q1 = self.exposure_given_outcome()
        return q0[idx], q1[idx], self.marginal_y()[idx]

    def sample(self, n: int, seed) -> Dataset:
        """Draw n i.i.d. records; deterministic given the seed."""
        rng = np.random.default_rng(seed)
        xi = rng.choice(self.n_points, size=n, p=self.px)
        cells = self.joint[xi].reshape(n, 4)
        cdf = np.cumsum(cells, axis=1)
        u = rng.random(n)
        cell = (u[:, None] > cdf).sum(axis=1)  # 0..3 encoding (y, t) as 2y + t
        y = cell // 2
        t = cell % 2
        return Dataset(y=y, t=t, x=self.support[xi], kinds=(NUMERIC,) * self.support.shape[1])

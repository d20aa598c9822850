"""Exact computation over finite-support laws and numerical theorem checks.

Everything here is enumeration: expectations are finite sums over the
support and the four outcome/exposure cells, so the only error left is
floating-point rounding.  Sums are accumulated in extended precision to
keep that rounding far below the check tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    PROSPECTIVE,
    RETROSPECTIVE,
    DiscreteDGP,
    log_odds,
    logistic,
)

__all__ = [
    "TheoremReport",
    "exact_theta0",
    "exact_v_eff",
    "exact_subpop_theta",
    "check_eif_equality",
    "check_orthogonality",
    "check_double_robustness",
    "random_dgp",
    "random_direction",
    "score_table",
]

LD = np.longdouble

# (1, 2, 2) outcome/exposure grids aligned with joint[:, y, t]
_YY = np.arange(2, dtype=LD).reshape(1, 2, 1)
_TT = np.arange(2, dtype=LD).reshape(1, 1, 2)


@dataclass(frozen=True)
class TheoremReport:
    """Result of one numerical check; passes iff the worst violation is in tolerance."""

    name: str
    max_violation: float
    tolerance: float
    passed: bool
    detail: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.max_violation <= self.tolerance))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "detail": list(self.detail),
        }


def _conditionals(dgp: DiscreteDGP, kind: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(f0, f1, w) in extended precision for the requested representation."""
    joint = dgp.joint.astype(LD)
    if kind == PROSPECTIVE:
        w = joint[:, 0, 1] + joint[:, 1, 1]
        return joint[:, 1, 0] / (1 - w), joint[:, 1, 1] / w, w
    r = joint[:, 1, 0] + joint[:, 1, 1]
    return joint[:, 0, 1] / (1 - r), joint[:, 1, 1] / r, r


def _psi_cells(f0: np.ndarray, f1: np.ndarray, w: np.ndarray, kind: str) -> np.ndarray:
    """Uncentered score at every (x, y, t) cell; arrays may be any real dtype."""
    f0 = f0[:, None, None]
    f1 = f1[:, None, None]
    w = w[:, None, None]
    base = (np.log(f1) - np.log1p(-f1)) - (np.log(f0) - np.log1p(-f0))
    if kind == PROSPECTIVE:
        own, other = _TT, _YY
    else:
        own, other = _YY, _TT
    corr1 = own * (other - f1) / (w * f1 * (1 - f1))
    corr0 = (1 - own) * (other - f0) / ((1 - w) * f0 * (1 - f0))
    return base + corr1 - corr0


def score_table(dgp: DiscreteDGP, kind: str = PROSPECTIVE) -> np.ndarray:
    """Truth-plugged uncentered scores, shape (n_points, 2, 2) indexed [x, y, t]."""
    f0, f1, w = _conditionals(dgp, kind)
    return np.asarray(_psi_cells(f0, f1, w, kind), dtype=LD)


def _theta0_ld(dgp: DiscreteDGP) -> LD:
    f0, f1, _ = _conditionals(dgp, PROSPECTIVE)
    logor = (np.log(f1) - np.log1p(-f1)) - (np.log(f0) - np.log1p(-f0))
    return (dgp.px.astype(LD) * logor).sum()


def exact_theta0(dgp: DiscreteDGP) -> float:
    """Population average of the conditional log odds ratio."""
    return float(_theta0_ld(dgp))


def exact_v_eff(dgp: DiscreteDGP, kind: str = PROSPECTIVE) -> float:
    """Second moment of the centered score: the efficiency bound.

    The prospective and retrospective representations give the same number;
    computing both is a useful cross-check.
    """
    theta0 = _theta0_ld(dgp)
    table = score_table(dgp, kind) - theta0
    weights = dgp.px.astype(LD)[:, None, None] * dgp.joint.astype(LD)
    return float((weights * table**2).sum())


def exact_subpop_theta(dgp: DiscreteDGP, condition: str) -> float:
    """Average log odds ratio over one conditioning stratum.

    ``condition`` is one of "T=1", "T=0", "Y=1", "Y=0"; the covariate law is
    reweighted by the stratum probability at each support point.
    """
    cond = condition.replace(" ", "").upper()
    joint = dgp.joint.astype(LD)
    strata = {
        "T=1": joint[:, 0, 1] + joint[:, 1, 1],
        "T=0": joint[:, 0, 0] + joint[:, 1, 0],
        "Y=1": joint[:, 1, 0] + joint[:, 1, 1],
        "Y=0": joint[:, 0, 0] + joint[:, 0, 1],
    }
    if cond not in strata:
        raise ValueError(f"condition must be one of {sorted(strata)}, got {condition!r}")
    weights = dgp.px.astype(LD) * strata[cond]
    f0, f1, _ = _conditionals(dgp, PROSPECTIVE)
    logor = (np.log(f1) - np.log1p(-f1)) - (np.log(f0) - np.log1p(-f0))
    return float((weights * logor).sum() / weights.sum())


# ---------------------------------------------------------------------------
# theorem checks


def check_eif_equality(dgp: DiscreteDGP, tol: float = 1e-10) -> TheoremReport:
    """Pointwise agreement of the two score representations on the support."""
    diff = np.abs(score_table(dgp, PROSPECTIVE) - score_table(dgp, RETROSPECTIVE))
    per_point = diff.max(axis=(1, 2))
    detail = tuple(
        {"point": i, "max_abs_diff": float(v)} for i, v in enumerate(per_point)
    )
    return TheoremReport(
        name="eif_equality",
        max_violation=float(diff.max()),
        tolerance=tol,
        passed=True,
        detail=detail,
    )


def random_direction(rng: np.random.Generator, n_points: int, scale: float = 0.5) -> np.ndarray:
    """Bounded perturbation of the three nuisance components, shape (n_points, 3)."""
    return scale * rng.uniform(-1.0, 1.0, size=(n_points, 3))


def check_orthogonality(
    dgp: DiscreteDGP,
    direction: np.ndarray,
    kind: str = PROSPECTIVE,
    step: float = 1e-5,
    tol: float = 1e-6,
) -> TheoremReport:
    """Vanishing first derivative of the score mean along a nuisance direction.

    Central differences of the exact conditional-on-x score means at the
    truth; the worst per-point |derivative| is the violation.  The detail
    also records the three-point second derivative (generically nonzero,
    confirming the finite differences can see curvature) and the derivative
    of the unconditional mean.
    """
    direction = np.asarray(direction, dtype=LD)
    f0, f1, w = _conditionals(dgp, kind)
    if direction.shape != (len(f0), 3):
        raise ValueError("direction must have shape (n_points, 3)")
    joint = dgp.joint.astype(LD)
    theta0 = _theta0_ld(dgp)

    def cond_means(gamma: float) -> np.ndarray:
        g = LD(gamma)
        probs = (f0 + g * direction[:, 0], f1 + g * direction[:, 1], w + g * direction[:, 2])
        for arr in probs:
            if np.any(arr <= 0) or np.any(arr >= 1):
                raise ValueError("perturbed nuisance probabilities leave (0, 1)")
        cells = _psi_cells(*probs, kind) - theta0
        return (joint * cells).sum(axis=(1, 2))

    g_plus = cond_means(step)
    g_zero = cond_means(0.0)
    g_minus = cond_means(-step)
    deriv = (g_plus - g_minus) / (2 * LD(step))
    second = (g_plus - 2 * g_zero + g_minus) / LD(step) ** 2
    px = dgp.px.astype(LD)
    detail = tuple(
        {"point": i, "derivative": float(deriv[i]), "second_derivative": float(second[i])}
        for i in range(len(deriv))
    ) + ({"unconditional_derivative": float((px * deriv).sum())},)
    return TheoremReport(
        name=f"orthogonality_{kind}",
        max_violation=float(np.abs(deriv).max()),
        tolerance=tol,
        passed=True,
        detail=detail,
    )


def _dr_cond_mean(
    phi_p: np.ndarray, phi_r: np.ndarray, theta: np.ndarray, joint: np.ndarray
) -> np.ndarray:
    """E[m | x] per support point, everything in extended precision."""
    mp = logistic(phi_p)[:, None, None]
    mr = logistic(phi_r)[:, None, None]
    cells = (_YY - mp) * (_TT - mr) * np.exp(-theta[:, None, None] * _TT * _YY)
    return (joint * cells).sum(axis=(1, 2))


def check_double_robustness(
    dgp: DiscreteDGP,
    tol: float = 1e-12,
    tol_power: float = 1e-3,
    tol_coincide: float = 1e-10,
    offset: float = 0.5,
    seed=0,
) -> TheoremReport:
    """Zero-mean, identification power, and coincidence of the product moment.

    Three sub-checks, each per support point: (i) the conditional mean of
    the moment vanishes when either baseline is correct (the other drawn at
    random) and the association argument is true; (ii) offsetting the
    association argument by +/-``offset`` moves every conditional mean away
    from zero by more than ``tol_power``; (iii) the moment-based efficient
    score equals the outcome-representation score pointwise.  Because the
    sub-checks carry different units, the reported violation is the worst
    violation/tolerance ratio and the report tolerance is 1.
    """
    joint = dgp.joint.astype(LD)
    f0p, f1p, _ = _conditionals(dgp, PROSPECTIVE)
    f0r, _, _ = _conditionals(dgp, RETROSPECTIVE)
    phi_p0 = np.log(f0p) - np.log1p(-f0p)
    phi_r0 = np.log(f0r) - np.log1p(-f0r)
    theta0x = (np.log(f1p) - np.log1p(-f1p)) - phi_p0

    rng = np.random.default_rng(seed)
    m = dgp.n_points
    phi_r_rand = rng.uniform(-2.0, 2.0, size=m).astype(LD)
    phi_p_rand = rng.uniform(-2.0, 2.0, size=m).astype(LD)

    zero_p = np.abs(_dr_cond_mean(phi_p0, phi_r_rand, theta0x, joint)).max()
    zero_r = np.abs(_dr_cond_mean(phi_p_rand, phi_r0, theta0x, joint)).max()
    power_hi = np.abs(_dr_cond_mean(phi_p0, phi_r0, theta0x + LD(offset), joint)).min()
    power_lo = np.abs(_dr_cond_mean(phi_p0, phi_r0, theta0x - LD(offset), joint)).min()
    power = min(power_hi, power_lo)

    theta0 = _theta0_ld(dgp)
    mp = logistic(phi_p0)[:, None, None]
    mr = logistic(phi_r0)[:, None, None]
    m_cells = (_YY - mp) * (_TT - mr) * np.exp(-theta0x[:, None, None] * _TT * _YY)
    m_11 = m_cells[:, 1, 1][:, None, None]
    pyt11 = joint[:, 1, 1][:, None, None]
    f_dr = theta0x[:, None, None] - theta0 + m_cells / (pyt11 * m_11)
    f_p = score_table(dgp, PROSPECTIVE) - theta0
    coincide = np.abs(f_dr - f_p).max()

    ratios = {
        "zero_mean_correct_outcome_baseline": float(zero_p) / tol,
        "zero_mean_correct_exposure_baseline": float(zero_r) / tol,
        "power": tol_power / float(power) if power > 0 else np.inf,
        "coincidence": float(coincide) / tol_coincide,
    }
    detail = (
        {"zero_mean_correct_outcome_baseline": float(zero_p), "tolerance": tol},
        {"zero_mean_correct_exposure_baseline": float(zero_r), "tolerance": tol},
        {"min_abs_mean_at_offset": float(power), "required": tol_power, "offset": offset},
        {"coincidence_max_abs_diff": float(coincide), "tolerance": tol_coincide},
    )
    return TheoremReport(
        name="double_robustness",
        max_violation=float(max(ratios.values())),
        tolerance=1.0,
        passed=True,
        detail=detail,
    )


# ---------------------------------------------------------------------------
# random instances


def random_dgp(
    rng: np.random.Generator,
    max_support: int = 8,
    eps: float = 0.05,
) -> DiscreteDGP:
    """Draw a valid finite-support law; rejection-free by construction.

    Cell weights are Dirichlet draws mapped affinely onto [eps, 1-3*eps], so
    every joint cell respects the bounded-probability floor exactly.
    """
    m = int(rng.integers(1, max_support + 1))
    support = rng.standard_normal((m, 1))
    raw = rng.dirichlet(np.ones(m)) if m > 1 else np.ones(1)
    floor = 0.05 / m
    px = raw * (1.0 - m * floor) + floor
    px = px / px.sum()
    cells = rng.dirichlet(np.ones(4), size=m)
    # affine map keeps each cell in [eps, 1-3*eps] and the sum at one exactly
    joint = eps + (1.0 - 4.0 * eps) * cells
    return DiscreteDGP(support=support, px=px, joint=joint.reshape(m, 2, 2), eps=eps)

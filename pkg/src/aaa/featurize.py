"""Design-matrix construction: B-spline expansion and one-hot encoding.

Transforms are fit on training rows (knot placement, category levels) and
then applied to arbitrary rows, so cross-fitting can refit them on each
fold complement without leakage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .domain import CATEGORICAL, NUMERIC

__all__ = [
    "Passthrough",
    "Spline",
    "OneHot",
    "FeatureSpec",
    "FittedDesign",
    "bspline_basis",
    "build_design",
    "fit_design",
]

QUANTILE = "quantile"
UNIFORM = "uniform"
CLAMP = "clamp"
ERROR = "error"


@dataclass(frozen=True)
class Passthrough:
    """Copy the column into the design unchanged."""

    name: str | None = None


@dataclass(frozen=True)
class Spline:
    """Expand a numeric column into a B-spline basis.

    Inner knots are placed at training-data quantiles by default (equally
    spaced probability levels), with boundary knots at the training min and
    max.  Transform-time values outside the boundary are clamped unless
    ``out_of_range`` is "error".
    """

    degree: int = 3
    n_inner_knots: int = 17
    knot_rule: str = QUANTILE
    out_of_range: str = CLAMP
    name: str | None = None

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.n_inner_knots < 0:
            raise ValueError("n_inner_knots must be >= 0")
        if self.knot_rule not in (QUANTILE, UNIFORM):
            raise ValueError(f"unknown knot rule {self.knot_rule!r}")
        if self.out_of_range not in (CLAMP, ERROR):
            raise ValueError(f"unknown out_of_range policy {self.out_of_range!r}")


@dataclass(frozen=True)
class OneHot:
    """Dummy-encode a categorical column, optionally dropping the first level."""

    drop_first: bool = True
    name: str | None = None


ColumnTransform = Union[Passthrough, Spline, OneHot]


@dataclass(frozen=True)
class FeatureSpec:
    """Per-column transform directives, aligned with the covariate columns."""

    columns: tuple[ColumnTransform, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))

    @classmethod
    def passthrough(cls, n_columns: int) -> "FeatureSpec":
        return cls(tuple(Passthrough() for _ in range(n_columns)))

    def to_config(self) -> list[dict]:
        out = []
        for tr in self.columns:
            if isinstance(tr, Passthrough):
                out.append({"transform": "passthrough", "name": tr.name})
            elif isinstance(tr, Spline):
                out.append(
                    {
                        "transform": "spline",
                        "degree": tr.degree,
                        "inner_knots": tr.n_inner_knots,
                        "knot_rule": tr.knot_rule,
                        "out_of_range": tr.out_of_range,
                        "name": tr.name,
                    }
                )
            else:
                out.append({"transform": "onehot", "drop_first": tr.drop_first, "name": tr.name})
        return out

    @classmethod
    def from_config(cls, items: list[dict]) -> "FeatureSpec":
        cols: list[ColumnTransform] = []
        for item in items:
            kind = item.get("transform", "passthrough")
            name = item.get("name")
            if kind == "passthrough":
                cols.append(Passthrough(name=name))
            elif kind == "spline":
                cols.append(
                    Spline(
                        degree=int(item.get("degree", 3)),
                        n_inner_knots=int(item.get("inner_knots", 17)),
                        knot_rule=item.get("knot_rule", QUANTILE),
                        out_of_range=item.get("out_of_range", CLAMP),
                        name=name,
                    )
                )
            elif kind == "onehot":
                cols.append(OneHot(drop_first=bool(item.get("drop_first", True)), name=name))
            else:
                raise ValueError(f"unknown transform {kind!r}")
        return cls(tuple(cols))


def _pad_knots(knots: np.ndarray, degree: int) -> np.ndarray:
    # open-uniform convention: boundary knots replicated degree+1 times total
    return np.concatenate([np.repeat(knots[0], degree), knots, np.repeat(knots[-1], degree)])


def _basis_matrix(xs: np.ndarray, degree: int, padded: np.ndarray) -> np.ndarray:
    """All B-spline basis values at each x, scattered into an (n, nb) matrix."""
    xs = np.asarray(xs, dtype=np.float64)
    nb = len(padded) - degree - 1
    span = np.searchsorted(padded, xs, side="right") - 1
    span = np.clip(span, degree, nb - 1)
    tri = np.zeros((len(xs), degree + 1))
    tri[:, 0] = 1.0
    for j in range(1, degree + 1):
        saved = np.zeros(len(xs))
        for r in range(j):
            tr = padded[span + r + 1]
            tl = padded[span + r + 1 - j]
            term = tri[:, r] / (tr - tl)
            tri[:, r] = saved + (tr - xs) * term
            saved = (xs - tl) * term
        tri[:, j] = saved
    out = np.zeros((len(xs), nb))
    cols = span[:, None] - degree + np.arange(degree + 1)[None, :]
    np.put_along_axis(out, cols, tri, axis=1)
    return out


def bspline_basis(x: float, degree: int, knots, out_of_range: str = CLAMP) -> np.ndarray:
    """Evaluate the full B-spline basis at a single point.

    Parameters
    ----------
    x : evaluation point, inside [knots[0], knots[-1]] (else clamped or
        rejected per ``out_of_range``).
    degree : polynomial degree of the pieces.
    knots : strictly increasing sequence [boundary_lo, inner..., boundary_hi];
        boundary replication is handled here.

    Returns
    -------
    Vector of ``n_inner + degree + 1`` basis values summing to one.
    """
    knots = np.asarray(knots, dtype=np.float64)
    if knots.ndim != 1 or len(knots) < 2:
        raise ValueError("knots must hold at least the two boundary values")
    if np.any(np.diff(knots) <= 0.0):
        raise ValueError("knots must be strictly increasing")
    lo, hi = knots[0], knots[-1]
    if x < lo or x > hi:
        if out_of_range == ERROR:
            raise ValueError(f"x={x} outside boundary knots [{lo}, {hi}]")
        x = min(max(x, lo), hi)
    return _basis_matrix(np.array([x]), degree, _pad_knots(knots, degree))[0]


def _spline_knots(tr: Spline, values: np.ndarray, label: str) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise ValueError(f"column {label}: constant training values, cannot place spline knots")
    if tr.n_inner_knots == 0:
        return np.array([lo, hi])
    if tr.knot_rule == UNIFORM:
        knots = np.linspace(lo, hi, tr.n_inner_knots + 2)
    else:
        levels = np.arange(1, tr.n_inner_knots + 1) / (tr.n_inner_knots + 1)
        inner = np.quantile(values, levels)
        knots = np.concatenate([[lo], inner, [hi]])
    if np.any(np.diff(knots) <= 0.0):
        raise ValueError(
            f"column {label}: tied quantile knots; use the uniform rule or fewer inner knots"
        )
    return knots


@dataclass(frozen=True)
class FittedDesign:
    """A feature spec with its training-derived state (knots, levels)."""

    spec: FeatureSpec
    state: tuple
    manifest: tuple[str, ...]

    @property
    def n_columns(self) -> int:
        return len(self.manifest)

    def transform(self, raw: np.ndarray) -> tuple[np.ndarray, list[str]]:
        """Apply the fitted transforms to rows; returns (matrix, warnings)."""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[1] != len(self.spec.columns):
            raise ValueError("raw rows do not match the fitted spec")
        blocks: list[np.ndarray] = []
        warnings: list[str] = []
        for j, (tr, st) in enumerate(zip(self.spec.columns, self.state)):
            col = raw[:, j]
            label = tr.name or f"c{j}"
            if isinstance(tr, Passthrough):
                blocks.append(col[:, None])
            elif isinstance(tr, Spline):
                knots = st
                lo, hi = knots[0], knots[-1]
                outside = (col < lo) | (col > hi)
                if outside.any():
                    if tr.out_of_range == ERROR:
                        raise ValueError(
                            f"column {label}: {int(outside.sum())} values outside [{lo}, {hi}]"
                        )
                    warnings.append(
                        f"column {label}: clamped {int(outside.sum())} values to [{lo}, {hi}]"
                    )
                    col = np.clip(col, lo, hi)
                blocks.append(_basis_matrix(col, tr.degree, _pad_knots(knots, tr.degree)))
            else:
                levels, keep = st
                codes = np.searchsorted(levels, col)
                codes = np.clip(codes, 0, len(levels) - 1)
                seen = levels[codes] == col
                if not seen.all():
                    unseen = sorted(set(col[~seen]))
                    warnings.append(
                        f"column {label}: {int((~seen).sum())} rows with unseen level(s) {unseen}"
                    )
                block = np.zeros((len(col), len(levels)))
                block[np.flatnonzero(seen), codes[seen]] = 1.0
                blocks.append(block[:, keep])
        return np.hstack(blocks), warnings


def fit_design(spec: FeatureSpec, raw: np.ndarray, kinds: tuple[str, ...] = ()) -> FittedDesign:
    """Derive knots and category levels from training rows.

    Quantile knots and dummy levels come from exactly the rows supplied, so
    callers control leakage by choosing what to pass.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ValueError("raw must be a 2-d matrix")
    if len(spec.columns) != raw.shape[1]:
        raise ValueError("spec columns must align with raw columns")
    if kinds and len(kinds) != raw.shape[1]:
        raise ValueError("one kind per column required")
    state = []
    manifest: list[str] = []
    for j, tr in enumerate(spec.columns):
        col = raw[:, j]
        label = tr.name or f"c{j}"
        kind = kinds[j] if kinds else None
        if isinstance(tr, Passthrough):
            state.append(None)
            manifest.append(f"{label}:passthrough")
        elif isinstance(tr, Spline):
            if kind == CATEGORICAL:
                raise ValueError(f"column {label}: spline requires a numeric column")
            knots = _spline_knots(tr, col, label)
            state.append(knots)
            manifest.extend(
                f"{label}:spline[{i}]" for i in range(tr.n_inner_knots + tr.degree + 1)
            )
        else:
            if kind == NUMERIC:
                raise ValueError(f"column {label}: onehot requires a categorical column")
            levels = np.unique(col)
            keep = np.arange(1 if tr.drop_first and len(levels) > 1 else 0, len(levels))
            state.append((levels, keep))
            manifest.extend(f"{label}:onehot[{levels[i]:g}]" for i in keep)
    return FittedDesign(spec=spec, state=tuple(state), manifest=tuple(manifest))


def build_design(
    spec: FeatureSpec, raw: np.ndarray, kinds: tuple[str, ...] = ()
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Fit the feature spec on the given rows and transform those same rows.

    No intercept column is added; learners handle the intercept themselves.
    """
    fitted = fit_design(spec, raw, kinds)
    matrix, _ = fitted.transform(raw)
    return matrix, fitted.manifest

"""Command-line front end: estimate on a CSV, simulate, and check.

Configuration comes from a JSON file merged over defaults, with
``--set key.path=value`` overrides.  All reports are written as JSON with
a fixed field order and floats rounded to 12 significant digits, so a
given (config, input) pair always produces byte-identical output.

Exit codes: 0 success, 2 config or parse error, 3 estimation failure,
4 failed theorem check.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .crossfit import dml_estimate, plugin_estimate, subpop_average
from .domain import CATEGORICAL, NUMERIC, PROSPECTIVE, RETROSPECTIVE, Dataset
from .featurize import FeatureSpec
from .nuisance import ConvergenceError, FoldDegenerate, LearnerConfig
from .oracle import (
    check_double_robustness,
    check_eif_equality,
    check_orthogonality,
    random_dgp,
    random_direction,
)
from .simulate import EstimatorSpec, LogitDGP, default_estimators, run_mc

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ESTIMATION = 3
EXIT_CHECK = 4


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "data": {"path": None, "outcome": "y", "exposure": "t", "covariates": []},
    "features": {},
    "learner": LearnerConfig().to_config(),
    "crossfit": {
        "K": 10,
        "seed": 0,
        "form": "both",
        "alpha": 0.05,
        "subpop": "none",
        "plugin": False,
    },
    "simulate": {
        "n": 5000,
        "reps": 500,
        "K": 5,
        "alpha": 0.10,
        "seed": 0,
        "parallelism": None,
        "dgp": {},
        "estimators": None,
    },
    "check": {
        "suite": "all",
        "n_random_dgps": 200,
        "orthogonality_dgps": 20,
        "directions": 20,
        "seed": 0,
        "max_support": 8,
        "cell_floor": 0.05,
        "step": 1e-5,
        "tolerances": {
            "eif": 1e-10,
            "orthogonality": 1e-6,
            "dr_zero": 1e-12,
            "dr_power": 1e-3,
            "dr_coincide": 1e-10,
        },
    },
    "output": {"path": None},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _apply_set(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key.path=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    keys = path.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {path!r} crosses a non-object value")
    node[keys[-1]] = value


def load_config(path: str | None, sets: list[str]) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                config = _deep_merge(config, json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    for assignment in sets:
        _apply_set(config, assignment)
    return config


# ---------------------------------------------------------------------------
# deterministic JSON output


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, ".12g"))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def write_report(payload: dict, path: str | None, default_name: str) -> str:
    target = path or default_name
    text = json.dumps(_round_floats(payload), indent=2) + "\n"
    with open(target, "w", encoding="utf-8") as fh:
        fh.write(text)
    return target


# ---------------------------------------------------------------------------
# CSV ingestion


_TRUTHY = {"1": 1, "0": 0, "true": 1, "false": 0}


def _parse_binary(value: str, column: str, row: int) -> int:
    key = value.strip().lower()
    if key not in _TRUTHY:
        raise ConfigError(f"row {row}: column {column!r} must be 0/1/true/false, got {value!r}")
    return _TRUTHY[key]


def load_dataset(data_cfg: dict) -> Dataset:
    """Read the CSV named in the config into a Dataset.

    Categorical columns may hold arbitrary strings; they are mapped to
    integer codes by sorted order.  Missing values are a hard error.
    """
    path = data_cfg.get("path")
    if not path:
        raise ConfigError("data.path is required")
    covariates = data_cfg.get("covariates") or []
    if not covariates:
        raise ConfigError("data.covariates must name at least one column")
    for col in covariates:
        if col.get("kind", NUMERIC) not in (NUMERIC, CATEGORICAL):
            raise ConfigError(f"covariate {col.get('name')!r}: unknown kind {col.get('kind')!r}")
    outcome = data_cfg.get("outcome", "y")
    exposure = data_cfg.get("exposure", "t")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ConfigError(f"{path}: empty file") from None
            rows = list(reader)
    except OSError as exc:
        raise ConfigError(f"cannot read data: {exc}") from exc
    index = {name: i for i, name in enumerate(header)}
    needed = [outcome, exposure] + [c["name"] for c in covariates]
    missing = [name for name in needed if name not in index]
    if missing:
        raise ConfigError(f"{path}: missing column(s) {missing}")

    n = len(rows)
    if n == 0:
        raise ConfigError(f"{path}: no data rows")
    y = np.empty(n, dtype=np.int64)
    t = np.empty(n, dtype=np.int64)
    x = np.empty((n, len(covariates)))
    raw_cats: dict[int, list[str]] = {j: [] for j, c in enumerate(covariates) if c.get("kind") == CATEGORICAL}
    for r, row in enumerate(rows, start=2):  # header is line 1
        if len(row) != len(header):
            raise ConfigError(f"row {r}: expected {len(header)} fields, got {len(row)}")
        y[r - 2] = _parse_binary(row[index[outcome]], outcome, r)
        t[r - 2] = _parse_binary(row[index[exposure]], exposure, r)
        for j, col in enumerate(covariates):
            cell = row[index[col["name"]]].strip()
            if cell == "":
                raise ConfigError(f"row {r}: missing value in column {col['name']!r}")
            if j in raw_cats:
                raw_cats[j].append(cell)
            else:
                try:
                    x[r - 2, j] = float(cell)
                except ValueError:
                    raise ConfigError(
                        f"row {r}: column {col['name']!r} is not numeric: {cell!r}"
                    ) from None
    for j, values in raw_cats.items():
        codes = {level: code for code, level in enumerate(sorted(set(values)))}
        x[:, j] = [codes[v] for v in values]
    kinds = tuple(c.get("kind", NUMERIC) for c in covariates)
    return Dataset(y=y, t=t, x=x, kinds=kinds)


def feature_spec_from_config(features_cfg: dict, covariates: list[dict]) -> FeatureSpec:
    items = []
    for col in covariates:
        name = col["name"]
        entry = dict(features_cfg.get(name) or {"transform": "passthrough"})
        entry.setdefault("name", name)
        items.append(entry)
    return FeatureSpec.from_config(items)


# ---------------------------------------------------------------------------
# estimate


def _summary_table(estimates: list, alpha: float) -> str:
    pct = round(100 * (1 - alpha))
    names = [e.form for e in estimates]
    widths = [max(len(n), 16) for n in names]
    head = "  ".join(n.rjust(w) for n, w in zip(names, widths))
    lines = ["Panel A: average adjusted association (log odds ratio)"]
    lines.append(" " * 22 + head)
    lines.append(
        "  Estimate            "
        + "  ".join(f"{e.theta_hat:.4f}".rjust(w) for e, w in zip(estimates, widths))
    )
    lines.append(
        "  Standard Error      "
        + "  ".join(
            ("NA" if e.sigma_hat is None else f"({e.sigma_hat / np.sqrt(e.n):.4f})").rjust(w)
            for e, w in zip(estimates, widths)
        )
    )
    lines.append("Panel B: odds-ratio scale, exp(association)")
    lines.append(" " * 22 + head)
    lines.append(
        "  Estimate            "
        + "  ".join(f"{np.exp(e.theta_hat):.4f}".rjust(w) for e, w in zip(estimates, widths))
    )
    lines.append(
        f"  {pct}% Conf. Interval "
        + "  ".join(
            (
                "NA"
                if e.ci_exp is None
                else f"[{e.ci_exp[0]:.2f}, {e.ci_exp[1]:.2f}]"
            ).rjust(w)
            for e, w in zip(estimates, widths)
        )
    )
    return "\n".join(lines)


def cmd_estimate(config: dict, threads: int) -> int:
    data = load_dataset(config["data"])
    spec = feature_spec_from_config(config["features"], config["data"]["covariates"])
    learner = LearnerConfig.from_config(config["learner"])
    cf = config["crossfit"]
    form = cf.get("form", "both")
    if form not in (PROSPECTIVE, RETROSPECTIVE, "both"):
        raise ConfigError(f"crossfit.form must be prospective, retrospective or both, got {form!r}")
    forms = [PROSPECTIVE, RETROSPECTIVE] if form == "both" else [form]
    alpha = float(cf.get("alpha", 0.05))
    if not 0.0 < alpha < 0.5:
        raise ConfigError("crossfit.alpha must lie in (0, 0.5)")
    K = int(cf.get("K", 10))
    if K < 2:
        raise ConfigError("crossfit.K must be >= 2")
    seed = cf.get("seed", 0)

    estimates = []
    try:
        for f in forms:
            estimates.append(dml_estimate(data, spec, learner, K=K, seed=seed, form=f, alpha=alpha))
        if cf.get("plugin"):
            for f in forms:
                estimates.append(plugin_estimate(data, spec, learner, form=f, alpha=alpha))
        if cf.get("subpop", "none") != "none":
            for f in forms:
                estimates.append(
                    subpop_average(
                        data, spec, learner, K=K, seed=seed, condition=cf["subpop"], form=f
                    )
                )
    except FoldDegenerate as exc:
        print(f"estimation failed: {exc} (try a smaller K)", file=sys.stderr)
        return EXIT_ESTIMATION
    except (ConvergenceError, ValueError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION

    print(_summary_table(estimates, alpha))
    payload = {
        "command": "estimate",
        "n": data.n,
        "alpha": alpha,
        "K": K,
        "estimates": [e.to_dict() for e in estimates],
    }
    target = write_report(payload, config["output"].get("path"), "estimate_report.json")
    print(f"report written to {target}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(config: dict, threads: int) -> int:
    sim = config["simulate"]
    reps = int(sim.get("reps", 0))
    if reps < 1:
        raise ConfigError("simulate.reps must be >= 1")
    n = int(sim.get("n", 0))
    if n < 1:
        raise ConfigError("simulate.n must be >= 1")
    dgp = LogitDGP.from_config(sim.get("dgp") or {})
    base_learner = LearnerConfig.from_config(config["learner"])
    est_cfg = sim.get("estimators")
    if est_cfg is None:
        estimators = default_estimators(base_learner)
    else:
        estimators = tuple(
            EstimatorSpec(
                name=e.get("name", f"{e.get('form', PROSPECTIVE)}_{e.get('method', 'dml')}"),
                method=e.get("method", "dml"),
                form=e.get("form", PROSPECTIVE),
                learner=(
                    LearnerConfig.from_config(e["learner"]) if "learner" in e else base_learner
                ),
            )
            for e in est_cfg
        )
    parallelism = sim.get("parallelism")
    if parallelism is None:
        parallelism = threads
    report = run_mc(
        dgp,
        n,
        reps,
        estimators=estimators,
        K=int(sim.get("K", 5)),
        alpha=float(sim.get("alpha", 0.10)),
        seed=int(sim.get("seed", 0)),
        parallelism=int(parallelism),
    )
    print(report.to_table())
    if not report.valid:
        print("warning: more than 10% of replications failed; report flagged invalid")
    payload = {"command": "simulate", **report.to_dict()}
    target = write_report(payload, config["output"].get("path"), "simulate_report.json")
    print(f"report written to {target}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check


def cmd_check(config: dict, threads: int) -> int:
    ck = config["check"]
    suite = ck.get("suite", "all")
    if suite not in ("all", "eif", "orthogonality", "dr"):
        raise ConfigError(f"check.suite must be all, eif, orthogonality or dr, got {suite!r}")
    tol = ck.get("tolerances", {})
    rng = np.random.default_rng(int(ck.get("seed", 0)))
    max_support = int(ck.get("max_support", 8))
    floor = float(ck.get("cell_floor", 0.05))
    reports = []

    if suite in ("all", "eif"):
        for _ in range(int(ck.get("n_random_dgps", 200))):
            dgp = random_dgp(rng, max_support=max_support, eps=floor)
            reports.append(check_eif_equality(dgp, tol=float(tol.get("eif", 1e-10))))
    if suite in ("all", "orthogonality"):
        for _ in range(int(ck.get("orthogonality_dgps", 20))):
            dgp = random_dgp(rng, max_support=max_support, eps=floor)
            for _ in range(int(ck.get("directions", 20))):
                direction = random_direction(rng, dgp.n_points)
                for kind in (PROSPECTIVE, RETROSPECTIVE):
                    reports.append(
                        check_orthogonality(
                            dgp,
                            direction,
                            kind=kind,
                            step=float(ck.get("step", 1e-5)),
                            tol=float(tol.get("orthogonality", 1e-6)),
                        )
                    )
    if suite in ("all", "dr"):
        for i in range(int(ck.get("n_random_dgps", 200))):
            dgp = random_dgp(rng, max_support=max_support, eps=floor)
            reports.append(
                check_double_robustness(
                    dgp,
                    tol=float(tol.get("dr_zero", 1e-12)),
                    tol_power=float(tol.get("dr_power", 1e-3)),
                    tol_coincide=float(tol.get("dr_coincide", 1e-10)),
                    seed=i,
                )
            )

    n_passed = sum(r.passed for r in reports)
    failed = [r for r in reports if not r.passed]
    worst = max(reports, key=lambda r: r.max_violation / r.tolerance)
    summary = {
        "command": "check",
        "suite": suite,
        "n_checks": len(reports),
        "n_passed": n_passed,
        "all_passed": not failed,
        "worst": {
            "name": worst.name,
            "max_violation": worst.max_violation,
            "tolerance": worst.tolerance,
        },
        "failures": [r.to_dict() for r in failed],
    }
    target = write_report(summary, config["output"].get("path"), "check_report.json")
    print(f"{n_passed}/{len(reports)} checks passed; report written to {target}")
    if failed:
        print(
            f"worst violation: {worst.name} {worst.max_violation:.3e} > {worst.tolerance:.3e}",
            file=sys.stderr,
        )
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aaa",
        description="Estimate the average adjusted association between a binary "
        "outcome and a binary exposure; validate the method's identities; "
        "compare estimators by simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("estimate", "cross-fitted estimation on a CSV dataset"),
        ("simulate", "Monte Carlo comparison of estimators"),
        ("check", "numerical verification of the method's identities"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry, e.g. --set crossfit.K=5",
        )
        p.add_argument("--threads", type=int, default=None, help="worker processes")
        p.add_argument("--output", help="report path (overrides output.path)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.set)
        if args.output:
            config["output"]["path"] = args.output
        threads = args.threads
        if threads is None:
            threads = int(os.environ.get("AAA_THREADS", "1"))
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        handler = {"estimate": cmd_estimate, "simulate": cmd_simulate, "check": cmd_check}
        return handler[args.command](config, threads)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Settings come from flags, optionally backed by a TOML or JSON file passed to
the top-level ``--config`` option.  The file holds one table per subcommand
(``[fit]``, ``[bench]``, ...) whose keys are option names with dashes or
underscores; an explicit flag always wins over the file.

Exit codes: 0 success, 2 bad configuration, 3 unusable data, 4 solver failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import DataError, Dataset, apply_standardization, load_csv, save_csv, split, standardize
from .metrics import DescriptorReport, confusion_report, descriptor_pvalues, write_descriptor_report
from .penalties import Penalty, PenaltySpec
from .sim import (
    METHODS,
    RECORD_FIELDS,
    SUMMARY_FIELDS,
    BenchSettings,
    SimConfig,
    aggregate,
    default_jobs,
    generate,
    run_replicated,
    write_records,
)
from .solver import FitOptions, ModelFit, SolverError, cross_validate, fit, predict_proba
from .spl import SplConfig, spl_fit, write_history

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

DEFAULT_GRID = [(n, rho, sigma) for n in (200, 300) for rho in (0.2, 0.6) for sigma in (0.3, 0.9)]
METRIC_FIELDS = ("split", "n", "auc", "accuracy", "sensitivity", "specificity", "threshold",
                 "tp", "tn", "fp", "fn")


class CliFailure(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _load_config(path: str) -> dict:
    p = Path(path)
    try:
        if p.suffix == ".json":
            raw = json.loads(p.read_text(encoding="utf-8"))
        else:
            with open(p, "rb") as fh:
                raw = tomllib.load(fh)
    except (OSError, ValueError) as exc:
        raise CliFailure(f"cannot read config {p}: {exc}", EXIT_CONFIG) from None
    if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
        raise CliFailure(f"config {p} must map subcommand names to tables", EXIT_CONFIG)
    return raw


def _default_map(group: click.Group, raw: dict) -> dict:
    """Translate file keys (flag names, dashes or underscores) to parameter names."""
    out = {}
    for cmd_name, section in raw.items():
        cmd = group.commands.get(cmd_name)
        if cmd is None:
            raise CliFailure(f"config names unknown command {cmd_name!r}", EXIT_CONFIG)
        by_flag = {}
        for param in cmd.params:
            by_flag[param.name] = param.name
            for opt in getattr(param, "opts", []):
                by_flag[opt.lstrip("-").replace("-", "_")] = param.name
        table = {}
        for key, value in section.items():
            name = by_flag.get(key.replace("-", "_"))
            if name is None:
                raise CliFailure(f"config [{cmd_name}] has unknown key {key!r}", EXIT_CONFIG)
            table[name] = value
        out[cmd_name] = table
    return out


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _say(ctx_quiet: bool, msg: str) -> None:
    if not ctx_quiet:
        click.echo(msg)


def common_options(f):
    f = click.option("--quiet", is_flag=True, help="Suppress progress and summary output.")(f)
    f = click.option("--label", default="label", show_default=True, help="Name of the label column.")(f)
    f = click.option("--output-dir", type=click.Path(file_okay=False), default=".",
                     show_default=True, help="Directory receiving every output file.")(f)
    f = click.option("--jobs", type=click.IntRange(min=1), default=None,
                     help="Worker processes (default: number of processors).")(f)
    f = click.option("--seed", type=int, default=0, show_default=True, help="Master random seed.")(f)
    return f


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(input_path: str, label: str, positive_label: str | None) -> Dataset:
    try:
        return load_csv(input_path, label, positive_label)
    except DataError as exc:
        raise CliFailure(str(exc), EXIT_DATA) from None


def _fit_options(tol, max_outer, max_inner) -> FitOptions:
    return FitOptions(tol=tol, max_outer=max_outer, max_inner=max_inner)


def model_to_dict(model: ModelFit, train: Dataset, method: str) -> dict:
    """Model description with coefficients on both the standardized and raw scale."""
    coefs = []
    raw_intercept = model.intercept
    for j, name in enumerate(train.names):
        b = float(model.beta[j])
        mean = float(train.col_means[j])
        std = float(train.col_stds[j])
        raw = b / std
        raw_intercept -= raw * mean
        coefs.append({"name": name, "value": b, "raw_value": raw, "mean": mean, "std": std})
    return {
        "penalty": method,
        "lambda": model.spec.lam,
        "epsilon": model.spec.epsilon,
        "intercept": model.intercept,
        "raw_intercept": raw_intercept,
        "converged": model.converged,
        "n_outer_iters": model.n_outer_iters,
        "support": [train.names[j] for j in model.support],
        "coefficients": coefs,
        "dropped": list(train.dropped),
    }


def _metric_row(split_name: str, scores, labels) -> dict:
    r = confusion_report(scores, labels)
    return {"split": split_name, "n": len(labels), "auc": r.auc, "accuracy": r.accuracy,
            "sensitivity": r.sensitivity, "specificity": r.specificity, "threshold": r.threshold,
            "tp": r.tp, "tn": r.tn, "fp": r.fp, "fn": r.fn}


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="TOML or JSON file with one table per subcommand; flags override it.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None):
    """Sparse logistic regression with L1, L1/2 and log-sum penalties and self-paced training."""
    if config_path is not None:
        ctx.default_map = _default_map(main, _load_config(config_path))


# ---------------------------------------------------------------------------
# fit / cv / eval
# ---------------------------------------------------------------------------


@main.command("fit")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--positive-label", default=None, help="Label value mapped to class 1.")
@click.option("--penalty", type=click.Choice(METHODS), default="logsum", show_default=True)
@click.option("--lambda", "lam", type=float, default=None, help="Penalty strength; skips CV.")
@click.option("--cv", "cv_folds", type=click.IntRange(min=2), default=10, show_default=True,
              help="Folds used to choose lambda when --lambda is absent.")
@click.option("--grid-size", type=click.IntRange(min=1), default=30, show_default=True)
@click.option("--epsilon", type=float, default=None, help="Log-sum epsilon (default 0.01*sqrt(lambda)).")
@click.option("--gamma0", default="auto", show_default=True, help="Initial age, or 'auto'.")
@click.option("--mu", type=float, default=0.05, show_default=True, help="Age step.")
@click.option("--max-ages", type=click.IntRange(min=1), default=600, show_default=True)
@click.option("--test-fraction", type=float, default=0.0, show_default=True,
              help="Hold out this stratified fraction for test metrics (0 disables).")
@click.option("--tol", type=float, default=1e-4, show_default=True)
@click.option("--max-outer", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--max-inner", type=click.IntRange(min=1), default=100, show_default=True)
@common_options
def fit_cmd(input_path, positive_label, penalty, lam, cv_folds, grid_size, epsilon, gamma0, mu,
            max_ages, test_fraction, tol, max_outer, max_inner, seed, jobs, output_dir, label, quiet):
    """Fit one model and write model.json, metrics.csv and descriptors.csv."""
    if not 0 <= test_fraction < 1:
        raise CliFailure("--test-fraction must lie in [0, 1)", EXIT_CONFIG)
    if gamma0 != "auto":
        try:
            gamma0 = float(gamma0)
        except ValueError:
            raise CliFailure(f"--gamma0 must be a number or 'auto', got {gamma0!r}", EXIT_CONFIG) from None
    out = _outdir(output_dir)
    data = _load(input_path, label, positive_label)
    opts = _fit_options(tol, max_outer, max_inner)
    kind = Penalty.LOGSUM if penalty == "spl-logsum" else Penalty(penalty)
    try:
        if test_fraction > 0:
            parts = split(data, 1.0 - test_fraction, seed)
            train = standardize(parts.train)
            test = apply_standardization(parts.test, train)
        else:
            train, test = standardize(data), None
        if lam is None:
            cv = cross_validate(train, kind, cv_folds, grid_size, seed=seed, opts=opts,
                                epsilon=epsilon)
            _write_json(cv.to_dict(), out / "cv.json")
            lam = cv.chosen_lambda
            _say(quiet, f"cross-validated lambda: {lam!r}")
        spec = PenaltySpec(kind, lam, epsilon)
        if penalty == "spl-logsum":
            cfg = SplConfig(spec=spec, gamma0=gamma0, mu=mu, max_ages=max_ages, inner_opts=opts)
            model, state = spl_fit(train, cfg)
            write_history(state, out / "spl_history.csv", row_ids=train.row_ids)
        else:
            model = fit(train, spec, opts)
    except DataError as exc:
        raise CliFailure(str(exc), EXIT_DATA) from None
    except SolverError as exc:
        raise CliFailure(str(exc), EXIT_SOLVER) from None
    except ValueError as exc:
        raise CliFailure(str(exc), EXIT_CONFIG) from None

    _write_json(model_to_dict(model, train, penalty), out / "model.json")
    _write_json({"dropped": list(train.dropped)}, out / "drop_report.json")
    rows = [_metric_row("train", predict_proba(model, train.x), train.y)]
    if test is not None:
        rows.append(_metric_row("test", predict_proba(model, test.x), test.y))
    write_records(rows, METRIC_FIELDS, out / "metrics.csv")
    report = (descriptor_pvalues(train, model.support, model.beta) if model.support.size
              else DescriptorReport(()))
    write_descriptor_report(report, out / "descriptors.csv")
    _say(quiet, f"{penalty}: {model.support.size} descriptors selected, "
                f"train AUC {rows[0]['auc']:.4f}" +
                (f", test AUC {rows[1]['auc']:.4f}" if test is not None else ""))


@main.command("cv")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--positive-label", default=None)
@click.option("--penalty", type=click.Choice([p.value for p in Penalty]), default="logsum",
              show_default=True)
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--grid-size", type=click.IntRange(min=1), default=30, show_default=True)
@click.option("--epsilon", type=float, default=None)
@common_options
def cv_cmd(input_path, positive_label, penalty, folds, grid_size, epsilon, seed, jobs, output_dir,
           label, quiet):
    """Cross-validate lambda and write cv.json."""
    out = _outdir(output_dir)
    data = _load(input_path, label, positive_label)
    try:
        cv = cross_validate(standardize(data), penalty, folds, grid_size, seed=seed, epsilon=epsilon)
    except DataError as exc:
        raise CliFailure(str(exc), EXIT_DATA) from None
    except SolverError as exc:
        raise CliFailure(str(exc), EXIT_SOLVER) from None
    except ValueError as exc:
        raise CliFailure(str(exc), EXIT_CONFIG) from None
    _write_json(cv.to_dict(), out / "cv.json")
    _say(quiet, f"chosen lambda: {cv.chosen_lambda!r}")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--positive-label", default=None)
@common_options
def eval_cmd(model_path, input_path, positive_label, seed, jobs, output_dir, label, quiet):
    """Score a saved model.json on a CSV and write eval_metrics.csv."""
    out = _outdir(output_dir)
    try:
        model = json.loads(Path(model_path).read_text(encoding="utf-8"))
        names = [c["name"] for c in model["coefficients"]]
        raw = np.array([c["raw_value"] for c in model["coefficients"]], dtype=float)
        b0 = float(model["raw_intercept"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliFailure(f"cannot read model {model_path}: {exc}", EXIT_CONFIG) from None
    data = _load(input_path, label, positive_label)
    index = {nm: j for j, nm in enumerate(data.names)}
    missing = [nm for nm in names if nm not in index]
    if missing:
        raise CliFailure(f"input lacks descriptors {missing[:5]}", EXIT_DATA)
    x = data.x[:, [index[nm] for nm in names]]
    scores = 1.0 / (1.0 + np.exp(-(b0 + x @ raw)))
    try:
        row = _metric_row("eval", scores, data.y)
    except ValueError as exc:
        raise CliFailure(str(exc), EXIT_DATA) from None
    write_records([row], METRIC_FIELDS, out / "eval_metrics.csv")
    _say(quiet, f"AUC {row['auc']:.4f}  accuracy {row['accuracy']:.4f}")


# ---------------------------------------------------------------------------
# simulate / bench
# ---------------------------------------------------------------------------


@main.command("simulate")
@click.option("--n", type=int, default=200, show_default=True)
@click.option("--p", type=int, default=1000, show_default=True)
@click.option("--rho", type=float, default=0.2, show_default=True)
@click.option("--sigma", type=float, default=0.3, show_default=True)
@click.option("--label-noise", type=float, default=0.0, show_default=True,
              help="Fraction of labels flipped after sampling.")
@click.option("--output", default="simulated.csv", show_default=True,
              help="Dataset file name inside --output-dir (.gz compresses).")
@common_options
def simulate_cmd(n, p, rho, sigma, label_noise, output, seed, jobs, output_dir, label, quiet):
    """Draw a synthetic dataset and write it with a truth.json record."""
    try:
        cfg = SimConfig(n=n, p=p, rho=rho, sigma=sigma, seed=seed, label_noise_fraction=label_noise)
    except ValueError as exc:
        raise CliFailure(str(exc), EXIT_CONFIG) from None
    out = _outdir(output_dir)
    data, truth = generate(cfg)
    save_csv(data, out / output, label_column=label)
    _write_json({
        "seed": seed, "n": n, "p": p, "rho": rho, "sigma": sigma,
        "label_noise_fraction": label_noise,
        "beta_true": truth.beta_true.tolist(),
        "support": [int(j) + 1 for j in truth.support_true],
        "intercept": truth.intercept,
        "flipped": list(truth.flipped),
    }, out / "truth.json")
    _say(quiet, f"wrote {n} x {p} dataset to {out / output}")


def _parse_cell(text: str) -> tuple[int, float, float]:
    try:
        n, rho, sigma = text.split(",")
        return int(n), float(rho), float(sigma)
    except ValueError:
        raise CliFailure(f"bad --cell {text!r}; expected n,rho,sigma", EXIT_CONFIG) from None


def _summary_table(rows: list[dict]) -> str:
    head = f"{'n':>5} {'rho':>5} {'sigma':>6} {'method':<11} {'auc':>7} {'sens':>7} {'spec':>7} " \
           f"{'acc':>7} {'b_sens':>7} {'b_spec':>7} {'n_sel':>7} {'err':>4}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r['n']:>5} {r['rho']:>5} {r['sigma']:>6} {r['method']:<11} {r['auc']:>7.4f} "
            f"{r['sens']:>7.4f} {r['spec']:>7.4f} {r['acc']:>7.4f} {r['beta_sens']:>7.4f} "
            f"{r['beta_spec']:>7.4f} {r['n_selected']:>7.1f} {r['errors']:>4}"
        )
    return "\n".join(lines)


@main.command("bench")
@click.option("--cell", "cells", multiple=True,
              help="Grid cell as n,rho,sigma; repeatable (default: the 2x2x2 grid).")
@click.option("--methods", default=",".join(METHODS), show_default=True,
              help="Comma-separated subset of methods.")
@click.option("--replications", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--grid-size", type=click.IntRange(min=1), default=30, show_default=True)
@click.option("--p", type=click.IntRange(min=10), default=1000, show_default=True)
@click.option("--mu", type=float, default=0.05, show_default=True)
@click.option("--max-ages", type=click.IntRange(min=1), default=600, show_default=True)
@common_options
def bench_cmd(cells, methods, replications, folds, grid_size, p, mu, max_ages, seed, jobs,
              output_dir, label, quiet):
    """Run the replicated method comparison and write the summary tables.

    Replicate r of every cell uses data seed ``seed + r`` (r = 1..replications).
    """
    grid = [_parse_cell(c) for c in cells] if cells else DEFAULT_GRID
    try:
        settings = BenchSettings(methods=tuple(m.strip() for m in methods.split(",") if m.strip()),
                                 replications=replications, seed_base=seed, folds=folds,
                                 grid_size=grid_size, p=p, mu=mu, max_ages=max_ages)
        for n, rho, sigma in grid:
            SimConfig(n=n, p=p, rho=rho, sigma=sigma)
    except ValueError as exc:
        raise CliFailure(str(exc), EXIT_CONFIG) from None
    out = _outdir(output_dir)
    records = run_replicated(grid, settings, jobs=jobs or default_jobs())
    summary = aggregate(records, seed)
    write_records(records, RECORD_FIELDS, out / "bench_records.csv")
    write_records(summary, SUMMARY_FIELDS, out / "bench_summary.csv")
    counts = [{k: r[k] for k in ("n", "rho", "sigma", "method", "n_selected", "replications")}
              for r in summary]
    write_records(counts, ("n", "rho", "sigma", "method", "n_selected", "replications"),
                  out / "descriptor_counts.csv")
    _say(quiet, _summary_table(summary))
    if records and all(r["error"] for r in records):
        raise CliFailure("every benchmark cell failed", EXIT_SOLVER)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

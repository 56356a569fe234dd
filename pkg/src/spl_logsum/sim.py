"""Synthetic sparse logistic data and the replicated method comparison.

Data follow the simulation design used to benchmark the penalties: i.i.d.
standard normal descriptors, descriptors 2-5 mixed row-wise with descriptor 1
(``x_ij <- rho * x_i1 + (1 - rho) * x_ij``), ten nonzero coefficients
``(1, -1, -1.5, -3, 2, 2, 2, 2, 2, 2)`` and labels drawn from a logistic model
whose linear score carries extra Gaussian noise of scale ``sigma``.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Dataset, apply_standardization, split, standardize
from .metrics import confusion_report
from .penalties import Penalty, PenaltySpec
from .solver import FitOptions, cross_validate, fit, predict_proba
from .spl import SplConfig, spl_fit

__all__ = [
    "TRUE_COEFFICIENTS",
    "METHODS",
    "SimConfig",
    "TrueModel",
    "SupportMetrics",
    "BenchSettings",
    "derive_seed",
    "generate",
    "support_metrics",
    "run_replicate",
    "run_replicated",
    "aggregate",
]

TRUE_COEFFICIENTS = (1.0, -1.0, -1.5, -3.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0)
METHODS = ("l1", "half", "logsum", "spl-logsum")
NONZERO_TOL = 1e-8


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit child seed of ``seed`` addressed by ``keys``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int = 1000
    rho: float = 0.2
    sigma: float = 0.3
    seed: int = 0
    label_noise_fraction: float = 0.0

    def __post_init__(self):
        if self.n < 20:
            raise ValueError(f"n must be >= 20, got {self.n}")
        if self.p < 10:
            raise ValueError(f"p must be >= 10, got {self.p}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if not 0 <= self.label_noise_fraction < 0.5:
            raise ValueError("label_noise_fraction must lie in [0, 0.5)")


@dataclass(frozen=True)
class TrueModel:
    beta_true: np.ndarray
    intercept: float = 0.0
    flipped: tuple[int, ...] = ()

    @property
    def support_true(self) -> np.ndarray:
        return np.flatnonzero(self.beta_true)


def generate(cfg: SimConfig) -> tuple[Dataset, TrueModel]:
    """Draw one dataset; identical ``cfg`` gives bit-identical output.

    Draw order is fixed (descriptors, score noise, label uniforms, then label
    flips), so configs differing only in ``sigma`` share every random draw.
    """
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((cfg.n, cfg.p))
    noise = rng.standard_normal(cfg.n)
    u = rng.random(cfg.n)
    x[:, 1:5] = cfg.rho * x[:, [0]] + (1.0 - cfg.rho) * x[:, 1:5]
    beta = np.zeros(cfg.p)
    beta[:10] = TRUE_COEFFICIENTS
    eta = x @ beta + cfg.sigma * noise
    y = (u < expit(eta)).astype(np.int8)
    flipped: tuple[int, ...] = ()
    k = int(round(cfg.label_noise_fraction * cfg.n))
    if k:
        idx = np.sort(rng.choice(cfg.n, size=k, replace=False))
        y[idx] = 1 - y[idx]
        flipped = tuple(idx.tolist())
    names = tuple(f"X{j + 1}" for j in range(cfg.p))
    return Dataset(x=x, y=y, names=names), TrueModel(beta_true=beta, flipped=flipped)


@dataclass(frozen=True)
class SupportMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp)


def support_metrics(beta_hat, truth: TrueModel | np.ndarray) -> SupportMetrics:
    """Compare nonzero patterns position by position (nonzero means ``|b| > 1e-8``)."""
    true = truth.beta_true if isinstance(truth, TrueModel) else np.asarray(truth, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != true.shape:
        raise ValueError(f"length mismatch: {beta_hat.shape} vs {true.shape}")
    t = np.abs(true) > NONZERO_TOL
    h = np.abs(beta_hat) > NONZERO_TOL
    return SupportMetrics(
        tp=int(np.sum(t & h)),
        fp=int(np.sum(~t & h)),
        tn=int(np.sum(~t & ~h)),
        fn=int(np.sum(t & ~h)),
    )


# ---------------------------------------------------------------------------
# replicated benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchSettings:
    methods: tuple[str, ...] = METHODS
    replications: int = 10
    seed_base: int = 0
    folds: int = 10
    grid_size: int = 30
    train_fraction: float = 0.7
    p: int = 1000
    mu: float = 0.05
    max_ages: int = 600
    gamma0: float | str = "auto"
    opts: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


RECORD_FIELDS = ("n", "rho", "sigma", "method", "replicate", "seed", "lambda", "auc", "sens",
                 "spec", "acc", "beta_sens", "beta_spec", "n_selected", "error")


def _expand_beta(beta_std, kept_names, all_names) -> np.ndarray:
    full = np.zeros(len(all_names))
    pos = {nm: j for j, nm in enumerate(all_names)}
    for nm, b in zip(kept_names, beta_std):
        full[pos[nm]] = b
    return full


def run_replicate(cell: tuple[int, float, float], replicate: int, settings: BenchSettings) -> list[dict]:
    """Generate, split, tune and score every method on one replicate of one cell.

    The data seed is ``seed_base + replicate``; split and fold seeds are
    derived from it, so every method sees the same folds.  ``spl-logsum``
    reuses the cross-validated logsum ``lam``.
    """
    n, rho, sigma = cell
    seed = settings.seed_base + replicate
    data, truth = generate(SimConfig(n=n, p=settings.p, rho=rho, sigma=sigma, seed=seed))
    parts = split(data, settings.train_fraction, derive_seed(seed, 1))
    train = standardize(parts.train)
    test = apply_standardization(parts.test, train)
    cv_seed = derive_seed(seed, 2)

    lams: dict[str, float] = {}

    def tuned(kind: str) -> float:
        if kind not in lams:
            lams[kind] = cross_validate(train, kind, settings.folds, settings.grid_size,
                                        seed=cv_seed, opts=settings.opts).chosen_lambda
        return lams[kind]

    records = []
    for method in settings.methods:
        rec = dict(n=n, rho=rho, sigma=sigma, method=method, replicate=replicate, seed=seed,
                   error="")
        try:
            if method == "spl-logsum":
                lam = tuned("logsum")
                cfg = SplConfig(spec=PenaltySpec(Penalty.LOGSUM, lam), gamma0=settings.gamma0,
                                mu=settings.mu, max_ages=settings.max_ages,
                                inner_opts=settings.opts)
                model, _ = spl_fit(train, cfg)
            else:
                lam = tuned(method)
                model = fit(train, PenaltySpec(method, lam), settings.opts)
            report = confusion_report(predict_proba(model, test.x), test.y)
            sm = support_metrics(_expand_beta(model.beta, train.names, data.names), truth)
            rec.update({"lambda": lam, "auc": report.auc, "sens": report.sensitivity,
                        "spec": report.specificity, "acc": report.accuracy,
                        "beta_sens": sm.sensitivity, "beta_spec": sm.specificity,
                        "n_selected": int(model.support.size)})
        except Exception as exc:  # recorded per cell, never fatal
            rec["error"] = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def _task(args):
    return run_replicate(*args)


def run_replicated(cells, settings: BenchSettings, jobs: int = 1) -> list[dict]:
    """Run every ``(n, rho, sigma)`` cell for ``settings.replications`` replicates.

    Returns one record per (cell, replicate, method) in grid order, whatever
    the number of worker processes.
    """
    tasks = [(tuple(c), r, settings) for c in cells for r in range(1, settings.replications + 1)]
    if jobs <= 1 or len(tasks) == 1:
        chunks = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            chunks = list(pool.map(_task, tasks))
    return [rec for chunk in chunks for rec in chunk]


SUMMARY_FIELDS = ("n", "rho", "sigma", "method", "auc", "sens", "spec", "acc", "beta_sens",
                  "beta_spec", "n_selected", "replications", "seed_base", "errors")


def aggregate(records: list[dict], seed_base: int) -> list[dict]:
    """Mean of every score per (cell, method) over the successful replicates."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        groups.setdefault((rec["n"], rec["rho"], rec["sigma"], rec["method"]), []).append(rec)
    rows = []
    for (n, rho, sigma, method), recs in groups.items():
        ok = [r for r in recs if not r["error"]]
        row = {"n": n, "rho": rho, "sigma": sigma, "method": method}
        for key in ("auc", "sens", "spec", "acc", "beta_sens", "beta_spec", "n_selected"):
            row[key] = float(np.mean([r[key] for r in ok])) if ok else math.nan
        row["replications"] = len(recs)
        row["seed_base"] = seed_base
        row["errors"] = len(recs) - len(ok)
        rows.append(row)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_records(rows: list[dict], fields, path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f, "")) for f in fields])


def default_jobs() -> int:
    return os.cpu_count() or 1

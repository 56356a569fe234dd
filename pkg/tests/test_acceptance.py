"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from spl_logsum.cli import main
from spl_logsum.data import Dataset, standardize
from spl_logsum.penalties import Penalty, PenaltySpec, oracle_threshold, threshold
from spl_logsum.sim import BenchSettings, aggregate, run_replicated
from spl_logsum.solver import fit, lambda_max, neg_log_likelihood, nll_gradient
from spl_logsum.spl import SplConfig, spl_fit, update_weights

sys.path.insert(0, str(Path(__file__).parent))
from oracles import grid_minimize_2d  # noqa: E402

pytestmark = pytest.mark.acceptance

MAIN_CELL = (300, 0.2, 0.3)
NOISY_CELL = (300, 0.2, 0.9)
SMALL_CELL = (200, 0.2, 0.3)


# --- 1: thresholding operators against the brute-force grid -----------------


def test_criterion_01_threshold_oracle(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = {}
    for kind in Penalty:
        err = 0.0
        for _ in range(1000):
            lam = rng.uniform(0.01, 2.0)
            eps = rng.uniform(0.001, 0.999) * math.sqrt(lam) if kind is Penalty.LOGSUM else None
            spec = PenaltySpec(kind, lam, eps)
            w = rng.uniform(-5.0, 5.0)
            err = max(err, abs(threshold(spec, w) - oracle_threshold(spec, w, step=1e-5)))
        worst[kind.value] = err
    elapsed = time.perf_counter() - start
    ok = all(e <= 1e-3 for e in worst.values()) and elapsed < 30
    detail = ", ".join(f"{k} max err {e:.2e}" for k, e in worst.items())
    verdict(1, ok, f"{detail}; {elapsed:.1f} s for 3000 cases")


# --- 2: gradient against central differences ---------------------------------


def test_criterion_02_gradient_check(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    h = 1e-5
    for _ in range(10):
        x = rng.standard_normal((50, 20))
        y = rng.integers(0, 2, 50)
        beta, b0 = 0.3 * rng.standard_normal(20), rng.normal(0, 0.3)
        g0, g = nll_gradient(beta, b0, x, y)
        fd = np.empty(21)
        fd[0] = (neg_log_likelihood(beta, b0 + h, x, y)
                 - neg_log_likelihood(beta, b0 - h, x, y)) / (2 * h)
        for j in range(20):
            e = np.zeros(20)
            e[j] = h
            fd[j + 1] = (neg_log_likelihood(beta + e, b0, x, y)
                         - neg_log_likelihood(beta - e, b0, x, y)) / (2 * h)
        rel = np.abs(np.r_[g0, g] - fd) / np.maximum(np.abs(fd), 1e-8)
        worst = max(worst, float(rel.max()))
    verdict(2, worst <= 1e-5, f"max relative error {worst:.2e} over 10 instances")


# --- 3: sample selection on the fourteen-sample example ----------------------


def test_criterion_03_selection_example(verdict):
    names = "ABCDEFGHIJKLMN"
    losses = [0.05, 0.12, 0.12, 0.12, 0.15, 0.4, 0.2, 0.18, 0.35, 0.15, 0.16, 0.2, 0.5, 0.3]
    chosen = {names[i] for i in np.flatnonzero(update_weights(losses, 0.15))}
    verdict(3, chosen == set("ABCD"), f"gamma 0.15 selects {sorted(chosen)}")


# --- 4: self-paced training reduces to a plain fit ---------------------------


def test_criterion_04_spl_reduction(verdict):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((150, 30))
    beta = np.r_[1.5, -1.0, 2.0, np.zeros(27)]
    y = (rng.random(150) < 1 / (1 + np.exp(-(x @ beta)))).astype(int)
    d = standardize(Dataset(x=x, y=y, names=tuple(f"d{j}" for j in range(30))))
    spec = PenaltySpec("logsum", 0.1 * lambda_max(d, "logsum"))
    plain = fit(d, spec)
    model, state = spl_fit(d, SplConfig(spec=spec, gamma0=1e3, mu=0.37))
    gap = float(np.max(np.abs(np.r_[model.beta - plain.beta, model.intercept - plain.intercept])))
    verdict(4, gap <= 1e-6 and state.v.all(), f"max coefficient difference {gap:.1e}")


# --- 5-8: replicated simulation benchmark ------------------------------------


@pytest.fixture(scope="module")
def bench():
    """10 replications (data seeds 1..10, ten-fold CV) of the three cells, run once."""
    settings = BenchSettings(replications=10, seed_base=0, folds=10)
    rows, seconds = {}, {}
    for cell in (MAIN_CELL, NOISY_CELL, SMALL_CELL):
        start = time.perf_counter()
        records = run_replicated([cell], settings)
        seconds[cell] = time.perf_counter() - start
        for row in aggregate(records, settings.seed_base):
            rows[(cell, row["method"])] = row
    return rows, seconds


def test_criterion_05_support_recovery(bench, verdict):
    rows, seconds = bench
    r = rows[(MAIN_CELL, "spl-logsum")]
    minutes = seconds[MAIN_CELL] / 60
    ok = r["beta_sens"] >= 0.9 and r["beta_spec"] >= 0.98 and minutes < 10 and r["errors"] == 0
    verdict(5, ok, f"spl-logsum beta sensitivity {r['beta_sens']:.3f} (need >= 0.9), "
                   f"specificity {r['beta_spec']:.4f} (need >= 0.98), cell time {minutes:.1f} min")


def test_criterion_06_method_ordering(bench, verdict):
    rows, _ = bench
    spl, logsum, l1 = (rows[(MAIN_CELL, m)] for m in ("spl-logsum", "logsum", "l1"))
    ok = spl["auc"] >= logsum["auc"] - 0.02 and logsum["beta_spec"] >= l1["beta_spec"]
    verdict(6, ok, f"AUC spl-logsum {spl['auc']:.4f} vs logsum {logsum['auc']:.4f}; "
                   f"beta specificity logsum {logsum['beta_spec']:.4f} vs l1 {l1['beta_spec']:.4f}")


def test_criterion_07_noise_lowers_auc(bench, verdict):
    rows, _ = bench
    pairs = {m: (rows[(MAIN_CELL, m)]["auc"], rows[(NOISY_CELL, m)]["auc"])
             for m in ("l1", "half", "logsum", "spl-logsum")}
    ok = all(noisy <= clean for clean, noisy in pairs.values())
    detail = ", ".join(f"{m} {c:.4f}->{n:.4f}" for m, (c, n) in pairs.items())
    verdict(7, ok, f"AUC sigma 0.3->0.9: {detail}")


def test_criterion_08_sparsity_ordering(bench, verdict):
    rows, _ = bench
    spl, logsum, l1 = (rows[(SMALL_CELL, m)]["n_selected"] for m in ("spl-logsum", "logsum", "l1"))
    verdict(8, spl <= logsum <= l1,
            f"mean selected: spl-logsum {spl:.1f}, logsum {logsum:.1f}, l1 {l1:.1f}")


# --- 9: two-descriptor fits against exhaustive grid search -------------------


def test_criterion_09_two_descriptor_oracle(verdict):
    failures, worst = [], 0.0
    for i in range(20):
        rng = np.random.default_rng(9000 + i)
        x = rng.standard_normal((60, 2))
        beta = rng.uniform(-1.5, 1.5, 2)
        if rng.random() < 0.5:
            beta[rng.integers(2)] = 0.0
        y = (rng.random(60) < 1 / (1 + np.exp(-(x @ beta)))).astype(int)
        d = standardize(Dataset(x=x, y=y, names=("a", "b")))
        ratio = rng.uniform(0.05, 0.6)
        for kind in ("l1", "half", "logsum"):
            spec = PenaltySpec(kind, ratio * lambda_max(d, kind))
            model = fit(d, spec)
            ref, _ = grid_minimize_2d(d, spec)
            diff = float(np.max(np.abs(model.beta - ref)))
            worst = max(worst, diff)
            if not (np.array_equal(model.beta != 0, ref != 0) and diff <= 1e-2):
                failures.append((i, kind))
    verdict(9, not failures, f"{60 - len(failures)}/60 fits match (20 instances x 3 penalties), "
                             f"max |dbeta| {worst:.1e}")


# --- 10: every command is byte-for-byte reproducible -------------------------


def _invoke(*args):
    result = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def _run_all_commands(root: Path, data: Path) -> None:
    _invoke("simulate", "--n", 120, "--p", 40, "--label-noise", 0.05, "--seed", 11,
            "--output-dir", root / "simulate", "--quiet")
    for penalty in ("l1", "half", "logsum", "spl-logsum"):
        _invoke("fit", "--input", data, "--penalty", penalty, "--cv", 4, "--grid-size", 6,
                "--test-fraction", 0.3, "--seed", 11, "--output-dir", root / f"fit-{penalty}",
                "--quiet")
    _invoke("cv", "--input", data, "--folds", 4, "--grid-size", 6, "--seed", 11,
            "--output-dir", root / "cv", "--quiet")
    _invoke("eval", "--model", root / "fit-logsum" / "model.json", "--input", data,
            "--output-dir", root / "eval", "--quiet")
    _invoke("bench", "--cell", "100,0.2,0.3", "--cell", "100,0.2,0.9", "--replications", 2,
            "--p", 30, "--folds", 3, "--grid-size", 5, "--seed", 11, "--jobs", 2,
            "--output-dir", root / "bench", "--quiet")


def test_criterion_10_cli_determinism(tmp_path, verdict):
    _invoke("simulate", "--n", 150, "--p", 40, "--seed", 5, "--output-dir", tmp_path / "input",
            "--quiet")
    data = tmp_path / "input" / "simulated.csv"
    _run_all_commands(tmp_path / "first", data)
    _run_all_commands(tmp_path / "second", data)
    files = sorted(p.relative_to(tmp_path / "first")
                   for p in (tmp_path / "first").rglob("*") if p.is_file())
    second = sorted(p.relative_to(tmp_path / "second")
                    for p in (tmp_path / "second").rglob("*") if p.is_file())
    differing = [str(f) for f in files
                 if (tmp_path / "first" / f).read_bytes() != (tmp_path / "second" / f).read_bytes()]
    ok = files == second and not differing and len(files) > 0
    verdict(10, ok, f"{len(files)} output files from 5 commands, {len(differing)} differ")

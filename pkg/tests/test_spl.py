import csv
import itertools

import numpy as np
import pytest

from spl_logsum.data import Dataset, standardize
from spl_logsum.penalties import PenaltySpec
from spl_logsum.sim import SimConfig, generate
from spl_logsum.solver import FitOptions, fit, lambda_max
from spl_logsum.spl import (
    SplConfig,
    confidence_bands,
    spl_fit,
    spl_objective,
    update_weights,
    write_history,
)

# fourteen samples A..N with their current losses
LOSSES = {"A": 0.05, "B": 0.12, "C": 0.12, "D": 0.12, "E": 0.15, "F": 0.4, "G": 0.2,
          "H": 0.18, "I": 0.35, "J": 0.15, "K": 0.16, "L": 0.2, "M": 0.5, "N": 0.3}
NAMES = list(LOSSES)
VALUES = np.array(list(LOSSES.values()))


def _chosen(gamma):
    return {NAMES[i] for i in np.flatnonzero(update_weights(VALUES, gamma))}


def test_fourteen_sample_selection():
    assert _chosen(0.15) == {"A", "B", "C", "D"}
    assert _chosen(0.30) == {"A", "B", "C", "D", "E", "G", "H", "J", "K", "L"}
    np.testing.assert_array_equal(update_weights(VALUES, 0.51), np.ones(14))
    np.testing.assert_array_equal(update_weights(VALUES, 0.0), np.zeros(14))


def test_weight_rule_minimizes_the_selection_objective():
    rng = np.random.default_rng(0)
    for n in (1, 5, 9, 12):
        losses = rng.uniform(0, 1, n)
        gamma = rng.uniform(0, 1)
        best = min(itertools.product((0, 1), repeat=n),
                   key=lambda v: float(np.dot(v, losses) - gamma * sum(v)))
        np.testing.assert_array_equal(update_weights(losses, gamma), best)


def test_weights_reject_nonfinite_losses():
    with pytest.raises(ValueError):
        update_weights([0.1, np.nan], 0.5)


def test_selection_grows_with_gamma():
    rng = np.random.default_rng(1)
    losses = rng.exponential(size=50)
    counts = [int(update_weights(losses, g).sum()) for g in np.arange(0.0, 6.0, 0.05)]
    assert np.all(np.diff(counts) >= 0)


def test_confidence_band_counts():
    assert confidence_bands(VALUES, (0.15, 0.3)) == (4, 6, 4)
    assert confidence_bands(np.full(7, 0.01), (0.15, 0.3)) == (7, 0, 0)
    u = np.linspace(0.0, 1.0, 99)
    assert confidence_bands(u, tuple(np.quantile(u, [1 / 3, 2 / 3]))) == (33, 33, 33)
    with pytest.raises(ValueError):
        confidence_bands(VALUES, (0.3, 0.3))


def _problem(n=120, p=12, seed=0, flip=0.0):
    data, truth = generate(SimConfig(n=n, p=p, rho=0.2, sigma=0.3, seed=seed,
                                     label_noise_fraction=flip))
    return standardize(data), truth


def test_large_initial_age_reduces_to_plain_fit():
    d, _ = _problem(seed=2)
    spec = PenaltySpec("logsum", 0.2 * lambda_max(d, "logsum"))
    plain = fit(d, spec)
    model, state = spl_fit(d, SplConfig(spec=spec, gamma0=1e6))
    assert state.v.all()
    assert state.age_index == 1
    np.testing.assert_allclose(model.beta, plain.beta, atol=1e-6)
    assert model.intercept == pytest.approx(plain.intercept, abs=1e-6)


@pytest.mark.parametrize("warm", [False, True])
def test_objective_never_rises_within_an_age(warm):
    d, _ = _problem(seed=3)
    spec = PenaltySpec("logsum", 0.1 * lambda_max(d, "logsum"))
    _, state = spl_fit(d, SplConfig(spec=spec, mu=0.1, warm_start=warm))
    assert len(state.history) > 2
    for rec in state.history:
        assert rec.objective_after <= rec.objective_before + 1e-8


@pytest.mark.parametrize("seed", [9, 10, 11])
def test_completed_run_is_no_worse_than_the_plain_fit(seed):
    # the last age refits on every sample from zero, or keeps a better continuation
    d, _ = _problem(seed=seed)
    spec = PenaltySpec("logsum", 0.1 * lambda_max(d, "logsum"))
    model, state = spl_fit(d, SplConfig(spec=spec, mu=0.1))
    plain = fit(d, spec)
    assert state.v.all()
    assert spl_objective(model, d, state.v, 0.0) <= spl_objective(plain, d, state.v, 0.0) + 1e-8


def test_history_is_consistent():
    d, _ = _problem(seed=4)
    spec = PenaltySpec("logsum", 0.15 * lambda_max(d, "logsum"))
    model, state = spl_fit(d, SplConfig(spec=spec, mu=0.1))
    gammas = [r.gamma for r in state.history]
    assert np.all(np.diff(gammas) > 0)
    for rec in state.history:
        assert rec.selected_count == len(rec.selected)
        chosen = d.y[list(rec.selected)]
        assert chosen.min() == 0 and chosen.max() == 1
    # the loop stops only once everything is in and the last fit converged
    assert state.v.all() and model.converged
    assert state.history[-1].selected_count == d.n
    last = state.history[-1]
    assert last.objective_after == pytest.approx(spl_objective(model, d, state.v, last.gamma))


def test_class_coverage_guard():
    d, _ = _problem(seed=5)
    spec = PenaltySpec("logsum", 0.2 * lambda_max(d, "logsum"))
    # so small an age would otherwise admit nothing at all
    _, state = spl_fit(d, SplConfig(spec=spec, gamma0=1e-9, max_ages=3))
    first = d.y[list(state.history[0].selected)]
    assert set(first.tolist()) == {0, 1}


def test_deterministic():
    d, _ = _problem(seed=6)
    cfg = SplConfig(spec=PenaltySpec("logsum", 0.2 * lambda_max(d, "logsum")), mu=0.1)
    m1, s1 = spl_fit(d, cfg)
    m2, s2 = spl_fit(d, cfg)
    np.testing.assert_array_equal(m1.beta, m2.beta)
    assert s1.history == s2.history


def test_flipped_labels_enter_late():
    d, truth = _problem(n=200, p=20, seed=7, flip=0.1)
    spec = PenaltySpec("logsum", 0.1 * lambda_max(d, "logsum"))
    _, state = spl_fit(d, SplConfig(spec=spec, mu=0.05))
    ages = state.entry_ages()
    flipped = np.zeros(d.n, dtype=bool)
    flipped[list(truth.flipped)] = True
    assert ages[flipped].mean() > ages[~flipped].mean()


def test_config_validation():
    spec = PenaltySpec("logsum", 0.1)
    with pytest.raises(ValueError):
        SplConfig(spec=spec, mu=0.0)
    with pytest.raises(ValueError):
        SplConfig(spec=spec, max_ages=0)
    with pytest.raises(ValueError):
        SplConfig(spec=spec, gamma0=-1.0)


def test_history_csv(tmp_path):
    d, _ = _problem(seed=8)
    spec = PenaltySpec("logsum", 0.2 * lambda_max(d, "logsum"))
    _, state = spl_fit(d, SplConfig(spec=spec, mu=0.2))
    path = tmp_path / "hist.csv"
    write_history(state, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["age_index", "gamma", "selected_count", "newly_added_indices"]
    assert len(rows) == len(state.history) + 1
    added = [int(i) for r in rows[1:] for i in r[3].split(";") if i]
    assert sorted(added) == list(range(d.n))


def test_tiny_problem_with_inner_options():
    x = np.array([[-2.0], [-1.0], [-0.5], [0.4], [1.0], [2.5], [0.1], [-0.2]])
    y = [0, 0, 1, 1, 1, 1, 0, 0]
    d = standardize(Dataset(x=x, y=y, names=("a",)))
    cfg = SplConfig(spec=PenaltySpec("l1", 0.01), inner_opts=FitOptions(tol=1e-9))
    model, state = spl_fit(d, cfg)
    assert state.v.all()
    assert model.beta[0] > 0

"""Self-paced training: admit samples from easy to hard as the age grows.

At each age the binary weights are the closed-form minimizer of
``sum_i v_i * loss_i - gamma * sum_i v_i`` (select exactly the samples whose
loss is strictly below ``gamma``), the model is refit on the selection and the
age advances by ``mu``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .penalties import Penalty, PenaltySpec
from .solver import FitOptions, ModelFit, fit, penalized_objective, per_sample_losses

__all__ = [
    "SplConfig",
    "AgeRecord",
    "SplState",
    "update_weights",
    "spl_objective",
    "spl_fit",
    "confidence_bands",
    "write_history",
]


@dataclass(frozen=True)
class SplConfig:
    """Self-paced training settings.

    Sample losses never exceed ``-log(1e-12)`` (about 27.6), so the default
    600 ages at ``mu = 0.05`` are enough for every sample to be admitted.
    Each age refits from ``beta = 0`` unless ``warm_start`` is set, in which
    case it starts from the previous age's model.
    """

    spec: PenaltySpec
    gamma0: float | str = "auto"
    mu: float = 0.05
    max_ages: int = 600
    inner_opts: FitOptions = field(default_factory=FitOptions)
    warm_start: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.max_ages < 1:
            raise ValueError(f"max_ages must be >= 1, got {self.max_ages}")
        if self.gamma0 != "auto" and not float(self.gamma0) > 0:
            raise ValueError(f"gamma0 must be positive or 'auto', got {self.gamma0!r}")


@dataclass(frozen=True)
class AgeRecord:
    age_index: int
    gamma: float
    selected_count: int
    selected: tuple[int, ...]
    newly_added: tuple[int, ...]
    objective_before: float = math.nan
    objective_after: float = math.nan


@dataclass
class SplState:
    v: np.ndarray
    gamma: float
    losses: np.ndarray
    age_index: int
    history: list[AgeRecord] = field(default_factory=list)

    def entry_ages(self) -> np.ndarray:
        """Age at which each sample was first selected (``len(history) + 1`` if never)."""
        out = np.full(self.v.shape[0], len(self.history) + 1, dtype=np.int64)
        for rec in reversed(self.history):
            out[list(rec.selected)] = rec.age_index
        return out


def update_weights(losses, gamma: float) -> np.ndarray:
    """``v_i = 1`` exactly when ``losses_i < gamma``."""
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise ValueError("losses must be finite")
    return (losses < gamma).astype(np.int8)


def spl_objective(model: ModelFit, d: Dataset, v, gamma: float) -> float:
    """Mean self-paced objective ``(1/n)(sum v_i l_i - gamma sum v_i) + penalty``."""
    v = np.asarray(v, dtype=float)
    return penalized_objective(model.beta, model.intercept, d, model.spec, v) - gamma * v.sum() / d.n


def _auto_gamma(losses) -> float:
    # smallest age that strictly admits at least half of the samples
    s = np.sort(losses)
    return float(np.nextafter(s[math.ceil(len(s) / 2) - 1], np.inf))


def _cover_both_classes(losses, y, gamma) -> float:
    need = max(float(losses[y == c].min()) for c in (0, 1))
    return max(gamma, float(np.nextafter(need, np.inf)))


def spl_fit(d: Dataset, cfg: SplConfig) -> tuple[ModelFit, SplState]:
    """Alternate sample selection and penalized refits over increasing ages.

    The first fit uses every sample.  Each age then selects samples with loss
    below ``gamma`` (widening ``gamma`` just enough to keep both classes if
    needed), refits on the selection, recomputes all losses
    and raises ``gamma`` by ``mu``.  If the zero start ends with a higher
    self-paced objective than the current model, the refit is instead started
    from the current model, so the objective never rises within an age.  A
    refit is skipped when the selection equals the one the current model was
    fit on.  The loop ends once
    every sample is selected under a converged fit, or after ``max_ages``.
    """
    spec = cfg.spec
    opts = cfg.inner_opts
    model = fit(d, spec, opts)
    fitted_on = np.ones(d.n, dtype=np.int8)
    losses = per_sample_losses(model.beta, model.intercept, d.x, d.y)
    if not np.all(np.isfinite(losses)):
        raise ValueError("non-finite sample loss")
    gamma = _auto_gamma(losses) if cfg.gamma0 == "auto" else float(cfg.gamma0)

    history: list[AgeRecord] = []
    previous = np.zeros(d.n, dtype=np.int8)
    v = previous
    for age in range(1, cfg.max_ages + 1):
        v = update_weights(losses, gamma)
        chosen = d.y[v == 1]
        if chosen.size == 0 or chosen.min() == chosen.max():
            gamma = _cover_both_classes(losses, d.y, gamma)
            v = update_weights(losses, gamma)
        before = spl_objective(model, d, v, gamma)
        if not np.array_equal(v, fitted_on):
            start = (model.beta, model.intercept) if cfg.warm_start else None
            fresh = fit(d, spec, opts, sample_weights=v, init=start)
            if spl_objective(fresh, d, v, gamma) <= before:
                model = fresh
            else:
                # the zero start found a worse basin; descend from the current model instead
                model = fit(d, spec, opts, sample_weights=v, init=(model.beta, model.intercept))
            fitted_on = v
        losses = per_sample_losses(model.beta, model.intercept, d.x, d.y)
        if not np.all(np.isfinite(losses)):
            raise ValueError(f"non-finite sample loss at age {age}")
        sel = np.flatnonzero(v)
        history.append(AgeRecord(
            age_index=age,
            gamma=gamma,
            selected_count=int(sel.size),
            selected=tuple(sel.tolist()),
            newly_added=tuple(np.flatnonzero((v == 1) & (previous == 0)).tolist()),
            objective_before=before,
            objective_after=spl_objective(model, d, v, gamma),
        ))
        previous = v
        if v.all() and model.converged:
            break
        gamma += cfg.mu
    state = SplState(v=v, gamma=gamma, losses=losses, age_index=len(history), history=history)
    return model, state


def confidence_bands(losses, edges: tuple[float, float]) -> tuple[int, int, int]:
    """Counts of (high, medium, low)-confidence samples.

    High confidence is ``loss < low``, medium ``low <= loss < high`` and low
    confidence ``loss >= high``.
    """
    lo, hi = edges
    if not lo < hi:
        raise ValueError("edges must satisfy low < high")
    losses = np.asarray(losses, dtype=float)
    high = int(np.sum(losses < lo))
    low = int(np.sum(losses >= hi))
    return high, losses.size - high - low, low


def write_history(state: SplState, path, row_ids=None) -> None:
    """Write the age trajectory as CSV; added samples are ``;``-joined row ids."""
    ids = np.arange(len(state.v)) if row_ids is None else np.asarray(row_ids)
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["age_index", "gamma", "selected_count", "newly_added_indices"])
        for rec in state.history:
            added = ";".join(str(int(ids[i])) for i in rec.newly_added)
            w.writerow([rec.age_index, repr(rec.gamma), rec.selected_count, added])


def default_spl_config(lam: float, epsilon: float | None = None, **kw) -> SplConfig:
    return SplConfig(spec=PenaltySpec(Penalty.LOGSUM, lam, epsilon), **kw)

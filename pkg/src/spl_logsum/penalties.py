"""Sparsity penalties and their univariate thresholding operators.

Three penalty families are supported:

* ``l1``     -- ``lam * sum |b_j|``
* ``half``   -- ``lam * sum |b_j|**0.5``
* ``logsum`` -- ``lam * sum log(|b_j| + eps)``

For each family, :func:`threshold` returns the exact global minimizer of the
scalar problem ``0.5 * (b - w)**2 + pen(b)``.  The two nonconvex operators
compare the stationary root against ``b = 0`` explicitly, so the result is the
global minimizer even where a spurious local minimum exists.

:func:`oracle_threshold` solves the same scalar problem by exhaustive grid
search and exists only to certify the closed forms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

__all__ = [
    "Penalty",
    "PenaltySpec",
    "penalty_value",
    "threshold",
    "oracle_threshold",
    "univariate_objective",
]

# integer codes shared with the compiled kernels in ``solver``
L1_CODE = 0
HALF_CODE = 1
LOGSUM_CODE = 2


class Penalty(str, enum.Enum):
    L1 = "l1"
    HALF = "half"
    LOGSUM = "logsum"

    @property
    def code(self) -> int:
        return {"l1": L1_CODE, "half": HALF_CODE, "logsum": LOGSUM_CODE}[self.value]


def default_epsilon(lam: float) -> float:
    """Logsum offset used when none is given; always inside ``(0, sqrt(lam))``."""
    return 0.01 * math.sqrt(lam)


@dataclass(frozen=True)
class PenaltySpec:
    """A penalty family together with its hyperparameters.

    ``epsilon`` is only meaningful for ``logsum``; when omitted it defaults to
    ``0.01 * sqrt(lam)``.  For the other families it is stored as ``0.0``.
    """

    kind: Penalty
    lam: float
    epsilon: float | None = None

    def __post_init__(self):
        kind = Penalty(self.kind)
        object.__setattr__(self, "kind", kind)
        lam = float(self.lam)
        if not (lam > 0 and math.isfinite(lam)):
            raise ValueError(f"lambda must be a positive finite number, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)
        if kind is Penalty.LOGSUM:
            eps = default_epsilon(lam) if self.epsilon is None else float(self.epsilon)
            if not 0 < eps < math.sqrt(lam):
                raise ValueError(
                    f"logsum epsilon must satisfy 0 < epsilon < sqrt(lambda) = "
                    f"{math.sqrt(lam):.6g}, got {eps!r}"
                )
            object.__setattr__(self, "epsilon", eps)
        else:
            object.__setattr__(self, "epsilon", 0.0)

    def with_lambda(self, lam: float, keep_epsilon: bool = False) -> "PenaltySpec":
        """Copy with a new ``lam``; the logsum offset is re-defaulted unless kept."""
        eps = self.epsilon if (keep_epsilon and self.kind is Penalty.LOGSUM) else None
        return PenaltySpec(self.kind, lam, eps)


# ---------------------------------------------------------------------------
# compiled scalar kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _pen1(kind, b, eps):
    a = abs(b)
    if kind == L1_CODE:
        return a
    if kind == HALF_CODE:
        return math.sqrt(a)
    return math.log(a + eps)


@numba.njit(cache=True)
def _scalar_objective(kind, lam, eps, w, b):
    d = b - w
    return 0.5 * d * d + lam * _pen1(kind, b, eps)


@numba.njit(cache=True)
def _threshold(kind, lam, eps, w):
    if w == 0.0:
        return 0.0
    a = abs(w)
    s = 1.0 if w > 0 else -1.0
    if kind == L1_CODE:
        return s * max(a - lam, 0.0)

    if kind == HALF_CODE:
        # half-thresholding; below this cut the minimizer is 0
        if a <= 1.5 * lam ** (2.0 / 3.0):
            return 0.0
        arg = (lam / 4.0) * (a / 3.0) ** -1.5
        if arg > 1.0:
            arg = 1.0
        phi = math.acos(arg)
        root = (2.0 / 3.0) * a * (1.0 + math.cos(2.0 * math.pi / 3.0 - 2.0 * phi / 3.0))
    else:
        c1 = a - eps
        c2 = c1 * c1 - 4.0 * (lam - a * eps)
        if c2 <= 0.0:
            return 0.0
        root = 0.5 * (c1 + math.sqrt(c2))
        if root <= 0.0:
            return 0.0

    if root > a:
        root = a
    # the stationary root can be a local minimum only; keep it only if it beats 0
    if _scalar_objective(kind, lam, eps, a, root) < _scalar_objective(kind, lam, eps, a, 0.0):
        return s * root
    return 0.0


@numba.njit(cache=True)
def _grid_minimizer(kind, lam, eps, w, halfwidth, step):
    k = int(math.floor(halfwidth / step))
    best_b = 0.0
    best_f = _scalar_objective(kind, lam, eps, w, 0.0)
    for i in range(1, k + 1):
        for sgn in (1.0, -1.0):
            b = sgn * i * step
            f = _scalar_objective(kind, lam, eps, w, b)
            # scanning outward from 0 keeps ties at the smaller |b|
            if f < best_f:
                best_f = f
                best_b = b
    return best_b


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------


def penalty_value(spec: PenaltySpec, beta) -> float:
    """Penalty ``lam * sum_j pen(beta_j)``; the intercept must not be passed in.

    The logsum value can be negative; only differences between values matter.
    """
    a = np.abs(np.asarray(beta, dtype=float))
    if spec.kind is Penalty.L1:
        return spec.lam * float(a.sum())
    if spec.kind is Penalty.HALF:
        return spec.lam * float(np.sqrt(a).sum())
    return spec.lam * float(np.log(a + spec.epsilon).sum())


def univariate_objective(spec: PenaltySpec, w: float, b: float) -> float:
    return float(_scalar_objective(spec.kind.code, spec.lam, spec.epsilon, float(w), float(b)))


def threshold(spec: PenaltySpec, w: float) -> float:
    """Global minimizer of ``0.5 * (b - w)**2 + pen(b)`` over scalar ``b``.

    >>> threshold(PenaltySpec("l1", 0.5), 2.0)
    1.5
    """
    w = float(w)
    if not math.isfinite(w):
        raise ValueError(f"threshold input must be finite, got {w!r}")
    return float(_threshold(spec.kind.code, spec.lam, spec.epsilon, w))


def oracle_threshold(spec: PenaltySpec, w: float, halfwidth: float | None = None,
                     step: float = 1e-5) -> float:
    """Brute-force minimizer over the grid ``{k * step : |k * step| <= halfwidth}``.

    The grid always contains 0 and ties resolve toward 0.  ``halfwidth``
    defaults to ``|w|``, which brackets every minimizer since thresholding
    never expands its input.
    """
    w = float(w)
    if step <= 0:
        raise ValueError("step must be positive")
    if halfwidth is None:
        halfwidth = abs(w) + step
    if halfwidth < abs(w):
        raise ValueError("halfwidth must be at least |w|")
    return float(_grid_minimizer(spec.kind.code, spec.lam, spec.epsilon, w, float(halfwidth), float(step)))

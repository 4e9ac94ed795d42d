"""Tree-structured Parzen Estimator sampling over a small box search space.

Factorized per-dimension model: the history is split into a "good" group
(size max(1, ceil(gamma * n))) and the rest, each dimension gets a 1-D
Parzen estimate for both groups (l = good, g = bad), candidates are drawn
from l and the one maximizing sum_j [log l_j(x) - log g_j(x)] wins.

Each group density is a Gaussian mixture over the group members plus one
uniform-over-bounds component with the same mixture weight — the usual
prior regularization: it keeps a floor of probability everywhere, so the
sampler never stops exploring and the good/bad ratio saturates far from
all observations instead of rewarding a run to the boundary.  Bandwidths
follow Scott's rule with two floors: range/(1 + group size), which keeps
kernels wide while the group is small and tightens as evidence accrues,
and ``bandwidth_floor`` of the bound range as the absolute lower bound.
Integer dimensions are sampled on the unit grid.  How histories are
ordered into good/bad (constraint handling, non-domination ranks) is the
caller's concern — this module only sees value matrices.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

__all__ = ["ParamSpec", "SearchSpace", "TpeConfig", "good_group_size",
           "suggest", "uniform_sample"]


@dataclasses.dataclass(frozen=True)
class ParamSpec:
    """One box-bounded dimension; ``integer`` snaps values to the unit grid."""

    name: str
    low: float
    high: float
    integer: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ValueError(f"{self.name}: bounds must be finite")
        if self.low > self.high:
            raise ValueError(f"{self.name}: low {self.low} > high {self.high}")
        if self.integer and (self.low != int(self.low) or self.high != int(self.high)):
            raise ValueError(f"{self.name}: integer bounds must be integral")


@dataclasses.dataclass(frozen=True)
class SearchSpace:
    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        if not self.params:
            raise ValueError("search space must have at least one dimension")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def clip(self, vec: np.ndarray) -> np.ndarray:
        out = np.asarray(vec, dtype=np.float64).copy()
        for j, p in enumerate(self.params):
            if p.integer:
                out[j] = np.rint(out[j])
            out[j] = min(max(out[j], p.low), p.high)
        return out


@dataclasses.dataclass(frozen=True)
class TpeConfig:
    gamma: float = 0.25
    startup_trials: int = 10
    n_candidates: int = 24
    bandwidth_floor: float = 0.01


def good_group_size(n_history: int, gamma: float) -> int:
    """max(1, ceil(gamma * n)) — the quantile split of the history."""
    return max(1, math.ceil(gamma * n_history))


def uniform_sample(space: SearchSpace, rng: np.random.Generator) -> np.ndarray:
    """In-bounds uniform draw (startup phase)."""
    out = np.empty(len(space.params))
    for j, p in enumerate(space.params):
        if p.integer:
            out[j] = rng.integers(int(p.low), int(p.high) + 1)
        else:
            out[j] = rng.uniform(p.low, p.high)
    return out


def _bandwidth(centers: np.ndarray, spec: ParamSpec, floor_frac: float) -> float:
    span = spec.high - spec.low
    scott = float(centers.std()) * len(centers) ** (-0.2)
    return max(scott, span / (1 + len(centers)), floor_frac * span, 1e-12)


def _log_parzen(x: np.ndarray, centers: np.ndarray, h: float,
                spec: ParamSpec) -> np.ndarray:
    """log density of the group model at points ``x``: an equal-weight
    mixture of one Gaussian per center (bandwidth ``h``) and one uniform
    component over the bounds.  Works for empty ``centers`` (pure uniform)."""
    log_u = -math.log(max(spec.high - spec.low, 1e-12))
    e = np.full((len(x), len(centers) + 1), log_u)
    if len(centers):
        z = (x[:, None] - centers[None, :]) / h
        e[:, :-1] = -0.5 * z * z - math.log(h * math.sqrt(2.0 * math.pi))
    m = e.max(axis=1)
    s = np.exp(e - m[:, None]).sum(axis=1)
    return m + np.log(s) - math.log(len(centers) + 1)


def suggest(space: SearchSpace, good: np.ndarray, bad: np.ndarray,
            config: TpeConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n_candidates`` from the good-group model, return the candidate
    maximizing the good/bad density ratio (ties: first drawn).

    ``good`` must have at least one row; ``bad`` may be empty, in which
    case its density is the bare uniform component.
    """
    good = np.asarray(good, dtype=np.float64)
    bad = np.asarray(bad, dtype=np.float64)
    if good.ndim != 2 or good.shape[1] != len(space.params) or not len(good):
        raise ValueError("good must be a non-empty (g, dims) matrix")
    if bad.size == 0:
        bad = bad.reshape(0, len(space.params))
    ncand = config.n_candidates
    cands = np.empty((ncand, len(space.params)))
    score = np.zeros(ncand)
    for j, p in enumerate(space.params):
        centers = good[:, j]
        h = _bandwidth(centers, p, config.bandwidth_floor)
        # Index len(centers) selects the uniform prior component.
        picks = rng.integers(0, len(centers) + 1, size=ncand)
        gauss = centers[np.minimum(picks, len(centers) - 1)] \
            + h * rng.standard_normal(ncand)
        x = np.where(picks == len(centers), rng.uniform(p.low, p.high, ncand),
                     gauss)
        if p.integer:
            x = np.rint(x)
        x = np.clip(x, p.low, p.high)
        cands[:, j] = x
        score += _log_parzen(x, centers, h, p)
        hb = _bandwidth(bad[:, j], p, config.bandwidth_floor) if len(bad) else 1.0
        score -= _log_parzen(x, bad[:, j], hb, p)
    return cands[int(np.argmax(score))].copy()

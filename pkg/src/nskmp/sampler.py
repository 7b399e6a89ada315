"""Black-box samplers for the replanning searches.

Both samplers implement an ask/tell protocol over a box-bounded parameter
space: ``ask(rng)`` proposes a candidate, ``tell(candidate, cost)`` records
its cost.  ``RandomSampler`` draws uniformly.  ``TpeSampler`` splits the
history at a cost quantile, fits per-dimension kernel density estimates to
the good and bad sets, and proposes the candidate (out of a small batch drawn
from the good density) that maximizes the good/bad density ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ParamSpace:
    """Axis-aligned box; integer dimensions are rounded after sampling."""

    lows: np.ndarray
    highs: np.ndarray
    integer: np.ndarray  # bool mask

    @classmethod
    def from_bounds(cls, bounds, integer=None) -> "ParamSpace":
        lows = np.asarray([b[0] for b in bounds], dtype=float)
        highs = np.asarray([b[1] for b in bounds], dtype=float)
        if np.any(highs <= lows):
            raise ValueError("each bound must satisfy low < high")
        mask = np.zeros(len(bounds), dtype=bool) if integer is None else np.asarray(integer, bool)
        return cls(lows, highs, mask)

    @property
    def dim(self) -> int:
        return len(self.lows)

    def round(self, x: np.ndarray) -> np.ndarray:
        if self.integer.any():
            x = x.copy()
            x[self.integer] = np.rint(x[self.integer])
        return x

    def uniform(self, rng: np.random.Generator) -> np.ndarray:
        return self.round(rng.uniform(self.lows, self.highs))


class RandomSampler:
    def __init__(self, space: ParamSpace):
        self.space = space

    def ask(self, rng: np.random.Generator) -> np.ndarray:
        return self.space.uniform(rng)

    def tell(self, candidate: np.ndarray, cost: float) -> None:
        pass


@dataclass
class TpeSampler:
    """Tree-structured Parzen estimator over independent dimensions.

    Both density models are Parzen mixtures with one extra uniform component
    over the box (the prior), which keeps unexplored regions attractive: their
    bad-model density stays low, so the good/bad ratio favors them.
    """

    space: ParamSpace
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    explore: float = 0.2  # fraction of pure uniform draws; bounds worst-case search time
    _xs: list = field(default_factory=list)
    _costs: list = field(default_factory=list)

    def tell(self, candidate: np.ndarray, cost: float) -> None:
        self._xs.append(np.asarray(candidate, dtype=float))
        self._costs.append(float(cost))

    def _log_mix(self, points: np.ndarray, bw: np.ndarray, queries: np.ndarray) -> np.ndarray:
        """Log density of the Parzen-plus-uniform mixture, summed over dims."""
        z = (queries[:, None, :] - points[None, :, :]) / bw  # (K, n, dim)
        kern = np.einsum("knd->kd", np.exp(-0.5 * z * z)) / (bw * np.sqrt(2.0 * np.pi))
        prior = 1.0 / (self.space.highs - self.space.lows)
        dens = (kern + prior) / (len(points) + 1)
        return np.log(dens + 1e-300).sum(axis=1)

    def _bandwidth(self, points: np.ndarray) -> np.ndarray:
        span = self.space.highs - self.space.lows
        return np.maximum(points.std(axis=0) * len(points) ** -0.2, 0.05 * span)

    def ask(self, rng: np.random.Generator) -> np.ndarray:
        n = len(self._xs)
        if n < self.n_startup:
            return self.space.uniform(rng)
        # On plateaued costs (ties everywhere) the density ratio can steer away
        # from thin zero-cost shells; keep a bounded share of uniform draws.
        if self.explore > 0 and rng.uniform() < self.explore:
            return self.space.uniform(rng)
        xs = np.stack(self._xs)
        costs = np.asarray(self._costs)
        n_good = max(1, int(np.ceil(self.gamma * n)))
        order = np.argsort(costs, kind="stable")
        good = xs[order[:n_good]]
        bad = xs[order[n_good:]]
        if len(bad) == 0:
            return self.space.uniform(rng)

        # Candidates are drawn from the good model (including its uniform
        # component); the density ratio picks the most promising one.
        bw_good = self._bandwidth(good)
        idx = rng.integers(-1, len(good), size=self.n_candidates)
        cands = np.where(
            (idx >= 0)[:, None],
            good[idx] + rng.normal(size=(self.n_candidates, self.space.dim)) * bw_good,
            rng.uniform(self.space.lows, self.space.highs, size=(self.n_candidates, self.space.dim)),
        )
        cands = np.clip(cands, self.space.lows, self.space.highs)
        score = self._log_mix(good, bw_good, cands) - self._log_mix(
            bad, self._bandwidth(bad), cands
        )
        return self.space.round(cands[int(np.argmax(score))])


def make_sampler(kind: str, space: ParamSpace, **kwargs):
    if kind == "random":
        return RandomSampler(space)
    if kind == "tpe":
        return TpeSampler(space, **kwargs)
    raise ValueError(f"unknown sampler kind: {kind!r}")

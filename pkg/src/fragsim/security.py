"""Fundamental value process for the single traded security."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def round_half_away(x: float) -> int:
    """Round to the nearest integer, halves away from zero.

    ``x - floor(x)`` is exact in binary floating point, so this avoids the
    ``floor(x + 0.5)`` failure at 0.49999999999999994.
    """
    if x >= 0.0:
        f = math.floor(x)
        return int(f + 1) if x - f >= 0.5 else int(f)
    f = math.floor(-x)
    return -int(f + 1) if -x - f >= 0.5 else -int(f)


@dataclass(frozen=True)
class FundamentalParams:
    mean: float = 100_000.0
    kappa: float = 0.05
    shock_var: float = 5_000_000.0
    horizon: int = 15_000

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.shock_var < 0:
            raise ValueError(f"shock_var must be non-negative, got {self.shock_var}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")


@lru_cache(maxsize=16)
def decay_table(kappa: float, horizon: int) -> np.ndarray:
    """``(1 - kappa) ** k`` for k = 0..horizon, indexed by steps-to-go."""
    base = 1.0 - kappa
    return np.array([base**k for k in range(horizon + 1)], dtype=np.float64)


class FundamentalSeries:
    """Precomputed mean-reverting series r_0..r_T, shared read-only by a run."""

    def __init__(self, params: FundamentalParams, values: np.ndarray):
        if len(values) != params.horizon + 1:
            raise ValueError("series length must be horizon + 1")
        self.params = params
        self.values = values
        self.values.flags.writeable = False
        self._decay = decay_table(params.kappa, params.horizon)

    def __len__(self):
        return len(self.values)

    def raw(self, t: int) -> float:
        return float(self.values[t])

    def at(self, t: int) -> int:
        """Fundamental value at ``t`` rounded to an integer price."""
        if not 1 <= t <= self.params.horizon:
            raise IndexError(f"t={t} outside 1..{self.params.horizon}")
        return round_half_away(float(self.values[t]))

    def estimate_terminal(self, t: int) -> int:
        """Expected r_T given r_t, rounded once at the end."""
        if not 1 <= t <= self.params.horizon:
            raise IndexError(f"t={t} outside 1..{self.params.horizon}")
        d = self._decay[self.params.horizon - t]
        return round_half_away((1.0 - d) * self.params.mean + d * float(self.values[t]))

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,r_t\n")
            for t, r in enumerate(self.values):
                fh.write(f"{t},{float(r)!r}\n")


def fundamental_recurrence(shocks: np.ndarray, mean: float, kappa: float) -> np.ndarray:
    """r_t = max(0, kappa*mean + (1-kappa)*r_{t-1} + u_t) with r_0 = mean."""
    out = np.empty(len(shocks) + 1, dtype=np.float64)
    r = float(mean)
    out[0] = r
    pull = kappa * mean
    keep = 1.0 - kappa
    for i in range(len(shocks)):
        r = pull + keep * r + shocks[i]
        if r < 0.0:
            r = 0.0
        out[i + 1] = r
    return out


_recurrence_jit = None


def _fast_recurrence(shocks: np.ndarray, mean: float, kappa: float) -> np.ndarray:
    global _recurrence_jit
    if _recurrence_jit is None:
        import numba

        _recurrence_jit = numba.njit(cache=True)(fundamental_recurrence)
    return _recurrence_jit(shocks, float(mean), float(kappa))


def generate_fundamental(params: FundamentalParams, rng: np.random.Generator) -> FundamentalSeries:
    """Draw exactly ``horizon`` Gaussian shocks and build the series."""
    shocks = rng.normal(0.0, math.sqrt(params.shock_var), size=params.horizon)
    values = _fast_recurrence(shocks, params.mean, params.kappa)
    return FundamentalSeries(params, values)


def estimate_terminal(series: FundamentalSeries, t: int) -> int:
    return series.estimate_terminal(t)


def fundamental_at(series: FundamentalSeries, t: int) -> int:
    return series.at(t)

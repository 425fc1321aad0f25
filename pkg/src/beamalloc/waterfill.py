"""Water-filling: maximize sum_k B*log2(1 + p_k/c_k) s.t. sum(p) <= P, p >= 0.

All semi-closed-form power steps in the allocators reduce to this problem.
The solver is the exact active-set-by-sorting method: the KKT point has
p_k = max(0, w - c_k) with a water level w such that the budget is tight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WaterfillProblem:
    inverse_gains: np.ndarray  # c_k > 0, same power units as the budget
    budget: float  # P >= 0

    def __post_init__(self):
        c = np.asarray(self.inverse_gains, dtype=float)
        if c.size == 0:
            raise ValueError("water-filling needs at least one channel")
        if np.any(c <= 0) or not np.all(np.isfinite(c)):
            raise ValueError("inverse gains must be finite and strictly positive")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        object.__setattr__(self, "inverse_gains", c)


def solve(problem: WaterfillProblem) -> np.ndarray:
    """Unique KKT point; the budget is used exactly when it is positive."""
    c = problem.inverse_gains
    P = float(problem.budget)
    if P == 0.0:
        return np.zeros_like(c)
    order = np.argsort(c, kind="stable")
    cs = c[order]
    csum = np.cumsum(cs)
    # water level if exactly the m cheapest channels are active
    m_range = np.arange(1, c.size + 1)
    levels = (P + csum) / m_range
    # the active set is the largest m with level_m > c_m (all m channels above water)
    active = levels > cs
    m = int(np.nonzero(active)[0][-1]) + 1
    w = levels[m - 1]
    p = np.maximum(0.0, w - c)
    # strip float residue so the budget is tight to ~1e-16 relative
    scale = P / p.sum()
    return p * scale


def waterfill(inverse_gains: np.ndarray, budget: float) -> np.ndarray:
    """Convenience wrapper around :func:`solve`."""
    return solve(WaterfillProblem(np.asarray(inverse_gains, dtype=float), budget))

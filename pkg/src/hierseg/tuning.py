"""Supervised choice of the scale parameter alpha.

Minimizes the squared difference between the region counts selected by
the pipeline and the (mean) region counts of the human ground truths.
The objective is a step function of alpha, so the search is a coarse
log-spaced grid scan followed by golden-section refinement inside the
best bracket, bounded by an evaluation budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TuneResult:
    alpha_star: float
    objective: float
    trace: tuple[tuple[float, float], ...]


def tune_alpha(entries, alpha_range, budget, count_fn) -> TuneResult:
    """Fit alpha so that selected region counts match the ground truth.

    entries is a sequence of (name, gt label map list); count_fn(name,
    alpha) must return the number of regions the pipeline selects at that
    scale. The target per image is the mean region count over its ground
    truths. budget caps the number of objective evaluations.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("empty dataset")
    amin, amax = float(alpha_range[0]), float(alpha_range[1])
    if not (0 < amin < amax):
        raise ValueError("need 0 < alpha_min < alpha_max")
    if budget < 1:
        raise ValueError("budget must be >= 1")

    targets = [(name, float(np.mean([len(np.unique(g)) for g in gts])))
               for name, gts in entries]

    trace: list[tuple[float, float]] = []

    def objective(alpha: float) -> float:
        e = sum((target - count_fn(name, alpha)) ** 2 for name, target in targets)
        trace.append((alpha, float(e)))
        return float(e)

    grid_n = min(budget, 10)
    grid = np.geomspace(amin, amax, grid_n)
    values = [objective(a) for a in grid]
    best_i = int(np.argmin(values))

    # golden-section refinement between the neighbors of the grid optimum
    lo = grid[max(best_i - 1, 0)]
    hi = grid[min(best_i + 1, grid_n - 1)]
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1 = objective(x1) if len(trace) < budget else None
    f2 = objective(x2) if len(trace) < budget else None
    while f1 is not None and f2 is not None and len(trace) < budget:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = objective(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = objective(x2)

    alpha_star, best = min(trace, key=lambda t: (t[1], t[0]))
    return TuneResult(alpha_star=alpha_star, objective=best, trace=tuple(trace))

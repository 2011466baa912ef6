"""Background model of pixel errors and NFA building blocks.

The background model is the empirical distribution of the per-pixel fit
error e_R(x) = ||I(x) - mean_R||^2, sampled over every (pixel, containing
region) pair of a hierarchy. Probabilities of region error sums are then
normal approximations by the central limit theorem, handled entirely in
log space so that values like exp(-47374) stay representable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

LOG_PROB_MIN = float("-inf")  # sentinel for impossible events under a degenerate model


@dataclass(frozen=True)
class ErrorModel:
    """Moments and histogram of the pixel-wise error over a hierarchy.

    Moments come from the raw samples; the histogram (uniform bins on
    [0, e_max]) is kept for diagnostics only.
    """

    mean_error: float
    var_error: float
    histogram: np.ndarray = field(repr=False)  # counts, len nbins
    e_max: float
    sample_count: int

    def density(self) -> tuple[np.ndarray, np.ndarray]:
        """(bin centers, normalized density) with integral 1."""
        nbins = len(self.histogram)
        width = self.e_max / nbins
        centers = (np.arange(nbins) + 0.5) * width
        total = self.histogram.sum()
        if total == 0:
            return centers, np.zeros(nbins)
        return centers, self.histogram / (total * width)


class TestCountMode(enum.Enum):
    LINEAR = "linear"
    TRIANGULAR = "triangular"


@dataclass(frozen=True)
class TestCountConfig:
    """Scale parameter and growth law for the number of tested partitions."""

    alpha: float = 6.0
    mode: TestCountMode = TestCountMode.LINEAR

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def estimate_error_model(h, img, nbins: int = 1024) -> ErrorModel:
    """Empirical pixel-error model over all regions of a hierarchy.

    Every pixel contributes one sample per region of h containing it.
    e_max is d*255^2 for GRAY/SRGB input and the observed maximum for
    CIELAB (floored at 1 so the histogram range stays valid on constant
    images).
    """
    from hierseg.imagecore import Colorspace

    values = img.values()[h.pix_perm]
    means = h.means
    samples = []
    for i in range(h.node_count):
        v = values[h.pix_start[i]:h.pix_end[i]]
        diff = v - means[i]
        samples.append(np.einsum("ij,ij->i", diff, diff))
    all_e = np.concatenate(samples)

    if img.colorspace is Colorspace.CIELAB:
        e_max = max(float(all_e.max()), 1.0)
    else:
        e_max = img.channels * 255.0**2
    hist, _ = np.histogram(all_e, bins=nbins, range=(0.0, e_max))
    return ErrorModel(
        mean_error=float(all_e.mean()),
        var_error=float(all_e.var()),
        histogram=hist,
        e_max=e_max,
        sample_count=int(all_e.size),
    )


def log_prob_error_sum(model: ErrorModel, n: int, observed: float) -> float:
    """log P(E < observed) for E a sum of n background error samples.

    E is approximated as Normal(n*mean, n*var) and evaluated through a
    numerically stable normal log-CDF, so extremely small probabilities
    come back as finite negative logs. A degenerate model (zero variance)
    yields 0 when observed >= n*mean and -inf otherwise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if observed < 0:
        raise ValueError("observed error must be >= 0")
    if model.var_error <= 0.0:
        return 0.0 if observed >= n * model.mean_error else LOG_PROB_MIN
    z = (observed - n * model.mean_error) / math.sqrt(n * model.var_error)
    return float(log_ndtr(z))


def log_prob_error_sum_vec(model: ErrorModel, n: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Vectorized log_prob_error_sum over matching arrays."""
    n = np.asarray(n, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if model.var_error <= 0.0:
        return np.where(observed >= n * model.mean_error, 0.0, LOG_PROB_MIN)
    z = (observed - n * model.mean_error) / np.sqrt(n * model.var_error)
    return log_ndtr(z)


def lnfa_region(model: ErrorModel, region, n_tests: float) -> float:
    """Log NFA of a single region: log(tests) + log P(E < observed error)."""
    if region.area < 1:
        raise ValueError("region must contain at least one pixel")
    return math.log(n_tests) + log_prob_error_sum(model, region.area, region.ms_error)


def merging_score(model: ErrorModel, r1, r2, boundary_log_probs=None) -> float:
    """Score of merging two sibling regions; the merge is accepted when the
    score stays below the scale parameter alpha.

    Compares the log-probability of the union, fitted by a single mean,
    against the two regions fitted separately; the separate hypothesis
    pools the two error sums into one CLT sum because errors are additive.
    When (log P boundary of union, log P boundary separate) is given, the
    factorized boundary probabilities are added to each side.
    """
    a_union = r1.area + r2.area
    sums_u = r1.sum_values + r2.sum_values
    sumsq_u = r1.sum_squares + r2.sum_squares
    err_union = max(sumsq_u - float(sums_u @ sums_u) / a_union, 0.0)
    lp_union = log_prob_error_sum(model, a_union, err_union)
    lp_sep = log_prob_error_sum(model, a_union, r1.ms_error + r2.ms_error)
    score = lp_union - lp_sep
    if boundary_log_probs is not None:
        b_union, b_sep = boundary_log_probs
        score += b_union - b_sep
    return score


def log_test_count(cfg: TestCountConfig, n: int, k: int) -> float:
    """Log of the assumed number of k-region partitions of an n-pixel image.

    LINEAR mode grows like n^(alpha*(k-2)); TRIANGULAR mode like
    n^(alpha*k*(k-1)/2). A single-region partition is never penalized.
    """
    if k < 1 or k > n:
        raise ValueError(f"order k={k} outside [1, {n}]")
    if cfg.mode is TestCountMode.LINEAR:
        return cfg.alpha * max(k - 2, 0) * math.log(n)
    return cfg.alpha * (k * (k - 1) / 2.0) * math.log(n)


def log_test_count_vec(cfg: TestCountConfig, n: int, k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if cfg.mode is TestCountMode.LINEAR:
        return cfg.alpha * np.maximum(k - 2, 0) * math.log(n)
    return cfg.alpha * (k * (k - 1) / 2.0) * math.log(n)

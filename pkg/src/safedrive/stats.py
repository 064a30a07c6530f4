"""Paired Wilcoxon signed-rank testing with effect sizes.

Zeros are discarded before ranking (standard convention), ties get average
ranks, and the two-sided p-value comes from exact sign enumeration for up to
12 effective pairs and from a tie-corrected, continuity-corrected normal
approximation otherwise. The standardized statistic z is always computed,
so effect sizes r = |z| / sqrt(n) are available on both paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXACT_MAX_N = 12
ALPHA = 0.05

MAGNITUDE_THRESHOLDS = ((0.5, "large"), (0.3, "medium"), (0.1, "small"))


def effect_magnitude(r: float) -> str:
    for threshold, name in MAGNITUDE_THRESHOLDS:
        if abs(r) >= threshold:
            return name
    return "negligible"


@dataclass(frozen=True)
class TestResult:
    """Outcome of one paired signed-rank comparison."""

    n_pairs: int
    n_effective: int
    statistic_w: float  # min(W+, W-)
    w_plus: float
    z: float
    p_two_sided: float
    effect_size_r: float  # |z| / sqrt(n_pairs)
    effect_size_r_nonzero: float  # |z| / sqrt(n_effective)
    magnitude: str
    significant: bool
    degenerate: bool
    exact: bool

    def as_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "n_effective": self.n_effective,
            "W": self.statistic_w,
            "W_plus": self.w_plus,
            "z": self.z,
            "p_two_sided": self.p_two_sided,
            "effect_size_r": self.effect_size_r,
            "effect_size_r_nonzero": self.effect_size_r_nonzero,
            "magnitude": self.magnitude,
            "significant": self.significant,
            "degenerate": self.degenerate,
            "exact": self.exact,
        }


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Enumerate all sign assignments of the observed ranks.

    The null distribution of W+ is symmetric around mu, so the two-sided
    p-value is P(|W+ - mu| >= |observed - mu|).
    """
    n = len(ranks)
    mu = ranks.sum() / 2.0
    obs_dev = abs(w_plus - mu)
    totals = np.zeros(1)
    for r in ranks:
        totals = np.concatenate([totals, totals + r])
    count = int(np.sum(np.abs(totals - mu) >= obs_dev - 1e-12))
    return count / float(2**n)


def wilcoxon_signed_rank(diffs: np.ndarray) -> TestResult:
    """Two-sided paired signed-rank test on a vector of differences."""
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.ndim != 1 or diffs.size == 0:
        raise ValueError("need a nonempty 1-D vector of paired differences")
    n_pairs = diffs.size
    nz = diffs[diffs != 0.0]
    n_eff = nz.size

    if n_eff == 0:
        return TestResult(
            n_pairs=n_pairs, n_effective=0, statistic_w=0.0, w_plus=0.0, z=0.0,
            p_two_sided=1.0, effect_size_r=0.0, effect_size_r_nonzero=0.0,
            magnitude="negligible", significant=False, degenerate=True, exact=True,
        )

    ranks = _average_ranks(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    w_minus = float(ranks[nz < 0].sum())
    w = min(w_plus, w_minus)

    mu = n_eff * (n_eff + 1) / 4.0
    tie_sizes = np.unique(np.abs(nz), return_counts=True)[1]
    tie_corr = float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    var = n_eff * (n_eff + 1) * (2 * n_eff + 1) / 24.0 - tie_corr

    dev = w_plus - mu
    if var <= 0.0:
        z = 0.0
    else:
        # continuity correction shrinks the deviation toward the mean
        z = (dev - 0.5 * np.sign(dev)) / math.sqrt(var) if dev != 0.0 else 0.0

    exact = n_eff <= EXACT_MAX_N
    if exact:
        p = _exact_two_sided_p(ranks, w_plus)
    else:
        p = min(1.0, 2.0 * _normal_sf(abs(z)))

    r = abs(z) / math.sqrt(n_pairs)
    r_nz = abs(z) / math.sqrt(n_eff)
    return TestResult(
        n_pairs=n_pairs,
        n_effective=n_eff,
        statistic_w=w,
        w_plus=w_plus,
        z=float(z),
        p_two_sided=float(p),
        effect_size_r=float(r),
        effect_size_r_nonzero=float(r_nz),
        magnitude=effect_magnitude(r),
        significant=bool(p < ALPHA),
        degenerate=False,
        exact=exact,
    )


def effect_size_from_z(z: float, n: int) -> float:
    """r = |z| / sqrt(n) for a given standardized statistic and sample size."""
    if n <= 0:
        raise ValueError("n must be positive")
    return abs(z) / math.sqrt(n)

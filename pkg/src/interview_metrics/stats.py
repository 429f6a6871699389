"""Two-group comparison: descriptives, Welch t, Mann-Whitney U, Cohen's d."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, special
from scipy import stats as sps

EXACT_U_MAX_PRODUCT = 400
BOOTSTRAP_CHUNK = 500


class StatsError(ValueError):
    pass


class EffectLabel(str, enum.Enum):
    SMALL = "Small"
    MEDIUM = "Medium"
    LARGE = "Large"
    VERY_LARGE = "VeryLarge"


def _array(values, name: str = "values", min_n: int = 1) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size < min_n:
        raise StatsError(f"{name} needs at least {min_n} observation(s), got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise StatsError(f"{name} contains non-finite values")
    return arr


def describe(values) -> dict:
    x = _array(values)
    return {
        "n": int(x.size),
        "mean": float(x.mean()),
        "sd": float(x.std(ddof=1)) if x.size > 1 else None,
        "min": float(x.min()),
        "max": float(x.max()),
        "median": float(np.median(x)),
    }


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def welch_t(a, b) -> WelchResult:
    a, b = _array(a, "a", 2), _array(b, "b", 2)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0:
        raise StatsError("Welch t undefined: both groups have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = float(min(1.0, 2.0 * sps.t.sf(abs(t), df)))
    return WelchResult(float(t), float(df), p)


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p: float
    method: str
    rank_biserial: float


def _midranks(x: np.ndarray) -> np.ndarray:
    return sps.rankdata(x, method="average")


def _exact_u_pvalue(doubled_ranks: np.ndarray, n_a: int, observed: int) -> float:
    """Two-sided exact p for the rank sum of group a.

    Counts every way of drawing ``n_a`` of the (doubled, hence integral)
    mid-ranks. The null distribution is symmetric, so the two-sided p is the
    mass at least as far from the mean as the observation.
    """
    total = int(doubled_ranks.sum())
    n = doubled_ranks.size
    # ways[k, s]: subsets of size k with doubled rank sum s
    ways = np.zeros((n_a + 1, total + 1), dtype=np.float64)
    ways[0, 0] = 1.0
    for i, r in enumerate(doubled_ranks.astype(int)):
        for k in range(min(i + 1, n_a), 0, -1):
            ways[k, r:] += ways[k - 1, :-r] if r else ways[k - 1]
    dist = ways[n_a]
    sums = np.arange(total + 1)
    # sums are doubled, so their mean n_a (n+1) / 2 doubles to an integer
    centre = n_a * (n + 1)
    mask = np.abs(sums - centre) >= abs(observed - centre)
    return float(min(1.0, dist[mask].sum() / dist.sum()))


def mann_whitney_u(a, b, method: str = "auto") -> MannWhitneyResult:
    """U statistic of the first group and a two-sided p value.

    ``method="auto"`` enumerates the exact permutation distribution (mid-ranks
    for ties) when ``n_a * n_b <= 400`` and otherwise uses the normal
    approximation with tie-corrected variance and continuity correction.
    """
    a, b = _array(a, "a"), _array(b, "b")
    na, nb = a.size, b.size
    ranks = _midranks(np.concatenate([a, b]))
    u = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    r_biserial = 1.0 - 2.0 * u / (na * nb)
    if method == "auto":
        method = "exact" if na * nb <= EXACT_U_MAX_PRODUCT else "asymptotic"
    if method == "exact":
        doubled = np.rint(ranks * 2).astype(np.int64)
        p = _exact_u_pvalue(doubled, na, int(doubled[:na].sum()))
    elif method == "asymptotic":
        n = na + nb
        _, counts = np.unique(ranks, return_counts=True)
        tie_term = float(((counts ** 3) - counts).sum())
        var = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
        if var <= 0:
            p = 1.0
        else:
            z = (abs(u - na * nb / 2.0) - 0.5) / math.sqrt(var)
            p = float(min(1.0, 2.0 * sps.norm.sf(max(z, 0.0))))
    else:
        raise ValueError(f"unknown method {method!r}")
    return MannWhitneyResult(u, p, method, r_biserial)


def pooled_sd(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = a.size, b.size
    return math.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))


@dataclass(frozen=True)
class CohensD:
    d: float
    ci_95: tuple[float, float]
    method: str


def _bootstrap_d(a: np.ndarray, b: np.ndarray, n_boot: int, seed) -> np.ndarray:
    # one child seed per fixed-size chunk: results do not depend on how chunks are scheduled
    n_chunks = -(-n_boot // BOOTSTRAP_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    out = np.empty(n_boot)
    for c, ss in enumerate(children):
        lo = c * BOOTSTRAP_CHUNK
        m = min(BOOTSTRAP_CHUNK, n_boot - lo)
        rng = np.random.default_rng(ss)
        ra = a[rng.integers(0, a.size, size=(m, a.size))]
        rb = b[rng.integers(0, b.size, size=(m, b.size))]
        num = ((a.size - 1) * ra.var(axis=1, ddof=1) + (b.size - 1) * rb.var(axis=1, ddof=1))
        sd = np.sqrt(num / (a.size + b.size - 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            out[lo:lo + m] = np.where(sd > 0, (ra.mean(axis=1) - rb.mean(axis=1)) / sd, np.nan)
    return out


def _noncentral_t_ci(d: float, na: int, nb: int, level: float = 0.95) -> tuple[float, float]:
    scale = math.sqrt(na * nb / (na + nb))
    df = na + nb - 2
    t_obs = d * scale
    alpha = 1 - level

    def solve(target):
        f = lambda nc: sps.nct.cdf(t_obs, df, nc) - target
        lo, hi = t_obs - 10, t_obs + 10
        while f(lo) < 0:
            lo -= 10
        while f(hi) > 0:
            hi += 10
        return optimize.brentq(f, lo, hi, xtol=1e-12)

    return solve(1 - alpha / 2) / scale, solve(alpha / 2) / scale


def cohens_d(a, b, *, n_boot: int = 10_000, seed: int | Sequence[int] = 0, ci_method: str = "bootstrap") -> CohensD:
    """Pooled-sd Cohen's d with a 95% interval.

    ``ci_method`` is ``"bootstrap"`` (percentile interval over ``n_boot``
    resamples of both groups, seeded) or ``"noncentral_t"``. ``seed`` may be an
    int or a sequence of ints (numpy ``SeedSequence`` entropy).
    """
    a, b = _array(a, "a", 2), _array(b, "b", 2)
    sd = pooled_sd(a, b)
    if sd == 0:
        raise StatsError("Cohen's d undefined: pooled standard deviation is zero")
    d = float((a.mean() - b.mean()) / sd)
    if ci_method == "bootstrap":
        reps = _bootstrap_d(a, b, n_boot, seed)
        lo, hi = np.nanpercentile(reps, [2.5, 97.5])
        ci = (float(lo), float(hi))
    elif ci_method == "noncentral_t":
        ci = _noncentral_t_ci(d, a.size, b.size)
    else:
        raise ValueError(f"unknown ci_method {ci_method!r}")
    return CohensD(d, ci, ci_method)


def effect_label(d: float) -> EffectLabel:
    m = abs(d)
    if m < 0.2:
        return EffectLabel.SMALL
    if m < 0.5:
        return EffectLabel.MEDIUM
    if m < 0.8:
        return EffectLabel.LARGE
    return EffectLabel.VERY_LARGE


def diff_and_improvement(ai_mean: float, human_mean: float) -> tuple[float, float | None]:
    diff = ai_mean - human_mean
    impr = 100.0 * diff / human_mean if human_mean != 0 else None
    return diff, impr


@dataclass
class GroupComparison:
    metric_name: str
    n_ai: int
    n_human: int
    ai_mean: float
    ai_sd: float | None
    human_mean: float
    human_sd: float | None
    diff: float
    impr_pct: float | None
    welch: WelchResult
    mwu: MannWhitneyResult
    cohens_d: float
    d_ci_95: tuple[float, float]
    effect_label: EffectLabel

    def to_dict(self) -> dict:
        out = asdict(self)
        out["effect_label"] = self.effect_label.value
        out["d_ci_95"] = list(self.d_ci_95)
        return out


def compare_groups(metric_name: str, ai_values, human_values, *, n_boot: int = 10_000,
                   seed: int | Sequence[int] = 0, ci_method: str = "bootstrap") -> GroupComparison:
    ai, hu = _array(ai_values, "AI", 2), _array(human_values, "Human", 2)
    da, dh = describe(ai), describe(hu)
    diff, impr = diff_and_improvement(da["mean"], dh["mean"])
    cd = cohens_d(ai, hu, n_boot=n_boot, seed=seed, ci_method=ci_method)
    return GroupComparison(
        metric_name, int(ai.size), int(hu.size), da["mean"], da["sd"], dh["mean"], dh["sd"],
        diff, impr, welch_t(ai, hu), mann_whitney_u(ai, hu), cd.d, cd.ci_95, effect_label(cd.d))


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def normal_two_sided_p(z: float) -> float:
    return float(special.erfc(abs(z) / math.sqrt(2.0)))

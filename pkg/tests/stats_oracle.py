"""Independent reference computations for the two-group tests."""

import itertools
import math
import statistics

from scipy import stats as sps


def welch_reference(a, b):
    ma, mb = statistics.fmean(a), statistics.fmean(b)
    va, vb = statistics.variance(a) / len(a), statistics.variance(b) / len(b)
    t = (ma - mb) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    ref = sps.ttest_ind(a, b, equal_var=False)
    return t, df, float(ref.pvalue)


def cohens_d_reference(a, b):
    na, nb = len(a), len(b)
    s = math.sqrt(((na - 1) * statistics.variance(a) + (nb - 1) * statistics.variance(b)) / (na + nb - 2))
    return (statistics.fmean(a) - statistics.fmean(b)) / s


def _midranks(values):
    order = sorted(values)
    ranks = {}
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and order[j + 1] == order[i]:
            j += 1
        ranks[order[i]] = (i + j + 2) / 2.0
        i = j + 1
    return [ranks[v] for v in values]


def u_statistic(a, b):
    """Count of pairs with a > b, ties counted one half."""
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def exact_u_p_enumeration(a, b):
    """Two-sided p by enumerating every assignment of the pooled ranks to group a."""
    pooled = list(a) + list(b)
    ranks = _midranks(pooled)
    na = len(a)
    mean = na * (len(pooled) + 1) / 2.0
    observed = abs(sum(ranks[:na]) - mean)
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), na):
        total += 1
        if abs(sum(ranks[i] for i in idx) - mean) >= observed - 1e-9:
            hits += 1
    return hits / total


def asymptotic_u_p_reference(a, b):
    return float(sps.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic",
                                  use_continuity=True).pvalue)

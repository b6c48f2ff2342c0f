"""Independent reference computations used by the tests.

Pure Python, no numpy, exact rational arithmetic where inputs allow.
Nothing in here shares code with the package.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from math import comb


def sse(points, groups) -> Fraction | float:
    """Within-group sum of squared distances to group centroids."""
    total = 0
    for group in groups:
        m = len(group)
        dim = len(points[group[0]])
        for d in range(dim):
            col = [points[i][d] for i in group]
            mean = sum(col) / m
            total += sum((v - mean) ** 2 for v in col)
    return total


def greedy_ward_by_sse(points):
    """Ward merge order by brute force: try every pair, keep the one whose
    merge raises total SSE least (ties: smallest id pair).

    Returns [(left_id, right_id, sse_increase)].  Use Fractions for exact
    answers.
    """
    n = len(points)
    clusters = {i: [i] for i in range(n)}
    current = sse(points, list(clusters.values()))
    out = []
    for t in range(n - 1):
        best = None
        for a, b in combinations(sorted(clusters), 2):
            groups = [g for c, g in clusters.items() if c not in (a, b)] + [clusters[a] + clusters[b]]
            key = (sse(points, groups) - current, a, b)
            if best is None or key < best:
                best = key
        inc, a, b = best
        clusters[n + t] = clusters.pop(a) + clusters.pop(b)
        current += inc
        out.append((a, b, inc))
    return out


def ari_by_pairs(a, b) -> float:
    """Adjusted Rand index by explicitly classifying all n(n-1)/2 pairs."""
    n = len(a)
    same_both = same_a = same_b = 0
    for i, j in combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        same_both += sa and sb
        same_a += sa
        same_b += sb
    total = comb(n, 2)
    expected = Fraction(same_a * same_b, total)
    maximum = Fraction(same_a + same_b, 2)
    if maximum == expected:
        return 1.0
    return float((same_both - expected) / (maximum - expected))


def delta(age: int, bins: int = 100):
    v = [Fraction(0)] * bins
    v[age] = Fraction(1)
    return v


def same_partition(labels_a, labels_b) -> bool:
    """True when two label lists induce the same set partition."""
    def blocks(labels):
        groups = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, set()).add(i)
        return {frozenset(g) for g in groups.values()}
    return blocks(labels_a) == blocks(labels_b)

"""Ward minimum-variance agglomerative clustering.

Merge heights are the increase in total within-cluster sum of squared
Euclidean distances caused by the merge,

    cost(A, B) = |A| |B| / (|A| + |B|) * ||centroid(A) - centroid(B)||^2,

so two singletons at distance d merge at height d^2 / 2 and the heights of
the merges undone by a cut add up to the cut's within-cluster dispersion.

Cluster ids follow the usual convention: leaves are 0..n-1 and the cluster
created by step t is n + t.  Among pairs of equal cost the lexicographically
smallest (left_id, right_id), left_id < right_id, is merged first.  Costs
within ``tie_window`` of the minimum count as equal, so that ties which are
exact in real arithmetic resolve the same way whether a cost was reached by
recurrence or recomputed from centroids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import EmptyInputError
from .signature import AgeSignature, signature_matrix

ORACLE_MAX_LEAVES = 64
TIE_RTOL = 1e-12
TIE_ATOL = 1e-15


def tie_window(cost: float) -> float:
    """Largest cost still tied with ``cost``."""
    return cost + TIE_RTOL * abs(cost) + TIE_ATOL


@dataclass(frozen=True)
class MergeStep:
    left_id: int
    right_id: int
    height: float
    new_size: int


@dataclass(frozen=True)
class Dendrogram:
    n_leaves: int
    steps: tuple[MergeStep, ...]
    leaf_codes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = self.n_leaves
        if n < 1:
            raise ValueError("a dendrogram needs at least one leaf")
        if len(self.steps) != n - 1:
            raise ValueError(f"{n} leaves need {n - 1} merges, got {len(self.steps)}")
        if self.leaf_codes and len(self.leaf_codes) != n:
            raise ValueError("leaf_codes length does not match n_leaves")
        size = {i: 1 for i in range(n)}
        for t, s in enumerate(self.steps):
            if s.left_id == s.right_id or s.left_id not in size or s.right_id not in size:
                raise ValueError(f"step {t} merges clusters that are not alive: {s}")
            if s.new_size != size[s.left_id] + size[s.right_id]:
                raise ValueError(f"step {t} reports size {s.new_size}")
            if s.height < 0:
                raise ValueError(f"step {t} has negative height")
            size[n + t] = size.pop(s.left_id) + size.pop(s.right_id)

    @property
    def heights(self) -> np.ndarray:
        return np.array([s.height for s in self.steps], dtype=np.float64)

    def is_monotone(self) -> bool:
        h = self.heights
        return bool(np.all(h[1:] >= h[:-1]))


def _as_matrix(signatures) -> np.ndarray:
    if isinstance(signatures, np.ndarray):
        X = np.asarray(signatures, dtype=np.float64)
    else:
        signatures = list(signatures)
        if not signatures:
            raise EmptyInputError("nothing to cluster")
        if isinstance(signatures[0], AgeSignature):
            X = signature_matrix(signatures)
        else:
            X = np.asarray(signatures, dtype=np.float64).reshape(len(signatures), -1)
    if X.ndim != 2:
        raise ValueError("expected a 2-d array of signatures")
    if X.shape[0] == 0:
        raise EmptyInputError("nothing to cluster")
    return X


def _codes_of(signatures) -> tuple[str, ...]:
    if isinstance(signatures, np.ndarray) or not signatures:
        return ()
    return tuple(s.code for s in signatures if isinstance(s, AgeSignature))


def ward_cluster(signatures: Sequence[AgeSignature] | np.ndarray) -> Dendrogram:
    """Ward linkage via the Lance-Williams update.

    Keeps the full pairwise cost matrix plus each live cluster's minimum
    cost.  Ward is reducible, so merging A and B can only invalidate the
    cached minimum of clusters whose nearest neighbour was A or B; every
    other cluster compares its cached minimum with its cost to the new
    cluster.  Memory is n^2 doubles.
    """
    if not isinstance(signatures, np.ndarray):
        signatures = list(signatures)
    X = _as_matrix(signatures)
    n = X.shape[0]
    codes = _codes_of(signatures)
    if n == 1:
        return Dendrogram(1, (), codes)

    D = squareform(pdist(X, "sqeuclidean")) / 2.0
    np.fill_diagonal(D, np.inf)
    ids = np.arange(n)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    nn = np.zeros(n, dtype=np.int64)
    nnd = np.full(n, np.inf)

    def refresh(i: int) -> None:
        nn[i] = np.argmin(D[i])
        nnd[i] = D[i, nn[i]]

    for i in range(n):
        refresh(i)

    steps = []
    prev = 0.0
    for t in range(n - 1):
        live = np.flatnonzero(active)
        lim = tie_window(nnd[live].min())
        best = None
        for r in live[nnd[live] <= lim]:
            for j in np.flatnonzero(D[r] <= lim):
                pair = (int(min(ids[r], ids[j])), int(max(ids[r], ids[j])))
                if best is None or pair < best[0]:
                    best = (pair, int(r), int(j))
        (left, right), p, q = best
        sp, sq, dpq = size[p], size[q], D[p, q]
        # Ward is reducible; a dip below the previous height is rounding noise
        assert dpq >= prev - (tie_window(prev) - prev), "Ward merge heights decreased"
        prev = max(prev, float(dpq))
        steps.append(MergeStep(left, right, prev, int(sp + sq)))

        sr = size
        with np.errstate(invalid="ignore"):
            new = ((sp + sr) * D[p] + (sq + sr) * D[q] - sr * dpq) / (sp + sq + sr)
        new = np.maximum(new, 0.0)
        new[~active] = np.inf

        active[q] = False
        new[p] = new[q] = np.inf
        D[p, :] = new
        D[:, p] = new
        D[q, :] = np.inf
        D[:, q] = np.inf
        size[p] = sp + sq
        ids[p] = n + t
        nnd[q] = np.inf

        refresh(p)
        stale = active & ((nn == p) | (nn == q))
        stale[p] = False
        for r in np.flatnonzero(stale):
            refresh(r)
        closer = active & ~stale & (new < nnd)
        closer[p] = False
        nn[closer] = p
        nnd[closer] = new[closer]

    return Dendrogram(n, tuple(steps), codes)


def naive_ward_oracle(signatures: Sequence[AgeSignature] | np.ndarray) -> Dendrogram:
    """Reference Ward clustering that recomputes every cost from centroids.

    Cubic in n per step; refuses inputs above 64 leaves.
    """
    if not isinstance(signatures, np.ndarray):
        signatures = list(signatures)
    X = _as_matrix(signatures)
    n = X.shape[0]
    if n > ORACLE_MAX_LEAVES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_LEAVES} leaves, got {n}")
    members = {i: [i] for i in range(n)}
    steps = []
    for t in range(n - 1):
        alive = sorted(members)
        cents = {c: X[members[c]].mean(axis=0) for c in alive}
        costs = {}
        for i, a in enumerate(alive):
            for b in alive[i + 1:]:
                na, nb = len(members[a]), len(members[b])
                diff = cents[a] - cents[b]
                costs[a, b] = na * nb / (na + nb) * float(diff @ diff)
        lim = tie_window(min(costs.values()))
        a, b = min(pair for pair, c in costs.items() if c <= lim)
        cost = costs[a, b]
        members[n + t] = members.pop(a) + members.pop(b)
        steps.append(MergeStep(a, b, cost, len(members[n + t])))
    return Dendrogram(n, tuple(steps), _codes_of(signatures))


def cut_tree(dendrogram: Dendrogram, k: int) -> list[int]:
    """Flat labels after undoing the last ``k - 1`` merges.

    Labels are numbered 0..k-1 in order of each cluster's smallest leaf.
    """
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    parent = list(range(2 * n - 1))
    for t, s in enumerate(dendrogram.steps[: n - k]):
        parent[s.left_id] = n + t
        parent[s.right_id] = n + t

    def root(x: int) -> int:
        r = x
        while parent[r] != r:
            r = parent[r]
        while parent[x] != r:
            parent[x], x = r, parent[x]
        return r

    names: dict[int, int] = {}
    labels = []
    for leaf in range(n):
        labels.append(names.setdefault(root(leaf), len(names)))
    return labels


# -- serialization ------------------------------------------------------------

def to_text(dendrogram: Dendrogram) -> str:
    """Line format: a ``#`` leaf-table header then ``left right height size`` per merge.

    Heights are the raw Ward sum-of-squares increase (not square-rooted).
    """
    lines = ["# agesig dendrogram v1", f"# n_leaves {dendrogram.n_leaves}"]
    for i, code in enumerate(dendrogram.leaf_codes):
        lines.append(f"# leaf {i} {code}")
    lines.append("# left_id right_id height new_size")
    for s in dendrogram.steps:
        lines.append(f"{s.left_id} {s.right_id} {s.height!r} {s.new_size}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Dendrogram:
    n = None
    codes: dict[int, str] = {}
    steps = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["n_leaves"]:
                n = int(parts[1])
            elif parts[:1] == ["leaf"]:
                codes[int(parts[1])] = parts[2]
            continue
        left, right, height, new_size = line.split()
        steps.append(MergeStep(int(left), int(right), float(height), int(new_size)))
    if n is None:
        raise ValueError("dendrogram text lacks an n_leaves header")
    leaf_codes = tuple(codes[i] for i in range(n)) if codes else ()
    return Dendrogram(n, tuple(steps), leaf_codes)


def write_dendrogram(dendrogram: Dendrogram, fh: IO[str]) -> None:
    fh.write(to_text(dendrogram))


def to_newick(dendrogram: Dendrogram) -> str:
    """Nested-parenthesis tree with leaf codes (or leaf indices) as labels."""
    n = dendrogram.n_leaves
    label = dendrogram.leaf_codes or tuple(str(i) for i in range(n))
    nodes = {i: label[i] for i in range(n)}
    for t, s in enumerate(dendrogram.steps):
        nodes[n + t] = f"({nodes.pop(s.left_id)},{nodes.pop(s.right_id)})"
    (tree,) = nodes.values()
    return tree + ";"

"""Within-cluster dispersion over k and elbow selection."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import DegenerateElbow
from .hac import Dendrogram, _as_matrix, cut_tree

DEFAULT_K_MAX = 20
FLAT_TOL = 1e-12


def within_cluster_sse(X: np.ndarray, labels: Sequence[int]) -> float:
    """Sum over clusters of squared distances from members to their centroid."""
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        block = X[labels == c]
        total += float(((block - block.mean(axis=0)) ** 2).sum())
    return total


@dataclass
class ElbowCurve:
    k_values: np.ndarray
    dispersion: np.ndarray
    selected_k: int | None = None

    @property
    def k_min(self) -> int:
        return int(self.k_values[0])

    @property
    def k_max(self) -> int:
        return int(self.k_values[-1])


def dispersion_curve(signatures, dendrogram: Dendrogram, k_max: int = DEFAULT_K_MAX) -> ElbowCurve:
    """W(k) for k = 1..k_max, measured on the dendrogram's k-cuts.

    Each W(k) is recomputed from the cut's centroids; consecutive values
    differ by the height of the merge that the finer cut undoes.
    """
    X = _as_matrix(signatures)
    n = dendrogram.n_leaves
    if X.shape[0] != n:
        raise ValueError(f"dendrogram has {n} leaves but {X.shape[0]} signatures were given")
    if not 1 <= k_max <= n:
        raise ValueError(f"k_max must be in [1, {n}], got {k_max}")
    ks = np.arange(1, k_max + 1)
    w = np.array([within_cluster_sse(X, cut_tree(dendrogram, int(k))) for k in ks])
    # recomputation can leave sub-rounding bumps where merges cost nothing
    scale = max(w[0], 1.0)
    if np.any(np.diff(w) > 1e-9 * scale):
        raise AssertionError("dispersion increased with k")
    w = np.minimum.accumulate(w)
    return ElbowCurve(ks, w)


def chord_distances(curve: ElbowCurve) -> np.ndarray:
    """Distance of each normalized curve point below the end-to-end chord.

    Both axes are min-max scaled to [0, 1]; returns zeros for a flat curve.
    """
    k = curve.k_values.astype(np.float64)
    w = np.asarray(curve.dispersion, dtype=np.float64)
    x = (k - k[0]) / (k[-1] - k[0])
    span = w.max() - w.min()
    if span <= 0:
        return np.zeros_like(w)
    y = (w - w.min()) / span
    # chord from (0, y0) to (1, y1): signed perpendicular distance
    y0, y1 = y[0], y[-1]
    return np.abs((y1 - y0) * x - (y - y0)) / np.hypot(1.0, y1 - y0)


def select_k(curve: ElbowCurve) -> int:
    """Knee of the dispersion curve: the interior k farthest from the chord.

    Ties go to the smaller k.  Raises :class:`DegenerateElbow` when every
    interior point lies on the chord.
    """
    if len(curve.k_values) < 3:
        raise ValueError("elbow selection needs at least 3 points")
    d = chord_distances(curve)
    interior = d[1:-1]
    if interior.max() < FLAT_TOL:
        raise DegenerateElbow("dispersion curve is linear; no elbow to select")
    return int(curve.k_values[1 + int(np.argmax(interior))])


def write_elbow(curve: ElbowCurve, fh: IO[str], selected: int | None = None) -> None:
    """Columns: k, W, chord_distance, selected (0/1)."""
    chosen = curve.selected_k if selected is None else selected
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["k", "W", "chord_distance", "selected"])
    for k, w, d in zip(curve.k_values, curve.dispersion, chord_distances(curve)):
        writer.writerow([int(k), repr(float(w)), repr(float(d)), int(k == chosen)])

import io

import numpy as np
import pytest

from agesig.errors import DegenerateElbow
from agesig.hac import ward_cluster
from agesig.selection import ElbowCurve, chord_distances, dispersion_curve, select_k, write_elbow

from oracles import sse


def curve(values):
    values = np.asarray(values, dtype=float)
    return ElbowCurve(np.arange(1, len(values) + 1), values)


def random_curve(rng, n=20):
    drops = rng.exponential(1.0, size=n - 1) * np.sort(rng.uniform(0.01, 1, size=n - 1))[::-1]
    return curve(np.concatenate([[0.0], np.cumsum(drops[::-1])])[::-1] + rng.uniform(0, 5))


def test_extremes(rng):
    X = rng.dirichlet(np.ones(100), size=9)
    c = dispersion_curve(X, ward_cluster(X), k_max=9)
    assert c.dispersion[-1] == 0.0
    assert c.dispersion[0] == pytest.approx(sse(X.tolist(), [list(range(9))]), abs=1e-12)


def test_telescoping_against_raw_centroids(rng):
    X = rng.dirichlet(np.full(100, 0.5), size=25)
    d = ward_cluster(X)
    c = dispersion_curve(X, d, k_max=20)
    n = d.n_leaves
    for k in range(1, 20):
        assert abs(c.dispersion[k - 1] - c.dispersion[k] - d.steps[n - k - 1].height) <= 1e-9
    assert np.all(np.diff(c.dispersion) <= 0)


def test_mismatched_inputs(rng):
    X = rng.dirichlet(np.ones(100), size=5)
    with pytest.raises(ValueError):
        dispersion_curve(X[:4], ward_cluster(X), 3)
    with pytest.raises(ValueError):
        dispersion_curve(X, ward_cluster(X), 6)


def test_sharp_knee():
    w = [100 - 18 * (k - 1) if k <= 6 else 10 - 0.1 * (k - 6) for k in range(1, 21)]
    assert select_k(curve(w)) == 6


def test_linear_curve_is_degenerate():
    with pytest.raises(DegenerateElbow):
        select_k(curve(np.linspace(10, 1, 20)))
    with pytest.raises(DegenerateElbow):
        select_k(curve(np.full(20, 3.0)))


def test_too_few_points():
    with pytest.raises(ValueError):
        select_k(curve([2.0, 1.0]))


def test_ties_go_to_smaller_k():
    # symmetric dent: k = 2 and k = 4 equally far from the chord
    assert select_k(curve([4.0, 2.0, 2.0, 0.0, 0.0])) == 2


@pytest.mark.parametrize("seed", range(25))
def test_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    c = random_curve(rng)
    a, b = rng.uniform(0.01, 100), rng.uniform(-50, 50)
    k = select_k(c)
    assert select_k(curve(a * c.dispersion + b)) == k
    assert c.k_min <= k <= c.k_max


def test_chord_distance_endpoints_zero(rng):
    d = chord_distances(random_curve(rng))
    assert d[0] == pytest.approx(0, abs=1e-15) and d[-1] == pytest.approx(0, abs=1e-15)


def test_write_elbow():
    c = curve([10.0, 3.0, 2.0, 1.5])
    c.selected_k = 2
    buf = io.StringIO()
    write_elbow(c, buf)
    rows = [line.split(",") for line in buf.getvalue().splitlines()]
    assert rows[0] == ["k", "W", "chord_distance", "selected"]
    assert [r[3] for r in rows[1:]] == ["0", "1", "0", "0"]

import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from agesig.errors import EmptyCohortError
from agesig.ingest import Cohort
from agesig.signature import (
    AgeSignature,
    build_signature,
    read_signatures,
    signature_distance,
    write_signatures,
)


def cohort(ages, code="J20", prefix="p"):
    return Cohort(code, tuple((f"{prefix}{i}", a) for i, a in enumerate(ages)))


def sig(mass_by_age, code="X00"):
    m = np.zeros(100)
    for age, p in mass_by_age.items():
        m[age] = p
    return AgeSignature(code, m, 1)


def test_delta():
    s = build_signature(cohort([30]))
    assert s.mass[30] == 1.0 and s.mass.sum() == 1.0 and np.count_nonzero(s.mass) == 1
    assert s.support == 1


def test_clamps_old_ages():
    s = build_signature(cohort([10, 110]))
    assert s.mass[10] == 0.5 and s.mass[99] == 0.5


def test_count_ratios():
    s = build_signature(cohort([20, 20, 30, 40]))
    assert (s.mass[20], s.mass[30], s.mass[40]) == (0.5, 0.25, 0.25)


def test_empty_cohort():
    with pytest.raises(EmptyCohortError):
        build_signature(Cohort("J20", ()))


def test_mass_is_read_only():
    s = build_signature(cohort([1, 2]))
    with pytest.raises(ValueError):
        s.mass[0] = 1.0


def test_rejects_bad_mass():
    with pytest.raises(ValueError):
        AgeSignature("X00", np.full(100, 0.02), 1)
    with pytest.raises(ValueError):
        AgeSignature("X00", np.ones(99) / 99, 1)


def test_distance_examples():
    v = sig({20: 0.5, 30: 0.5})
    assert signature_distance(v, v) == 0.0
    assert signature_distance(sig({10: 1.0}), sig({90: 1.0})) == pytest.approx(math.sqrt(2), abs=1e-15)
    # independent arithmetic: (0.5 - 1)^2 + (0.5 - 0)^2 = 0.5
    expected = math.sqrt(math.fsum([(0.5 - 1.0) ** 2, (0.5 - 0.0) ** 2]))
    assert signature_distance(v, sig({20: 1.0})) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.7071067811865476, abs=1e-15)


age_lists = st.lists(st.integers(0, 120), min_size=1, max_size=200)


@given(age_lists, st.randoms(use_true_random=False))
def test_permutation_invariance(ages, random):
    shuffled = list(ages)
    random.shuffle(shuffled)
    assert np.array_equal(build_signature(cohort(ages)).mass, build_signature(cohort(shuffled)).mass)


@given(age_lists, st.integers(2, 5))
def test_duplicating_members_keeps_signature(ages, copies):
    base = build_signature(cohort(ages))
    dup = build_signature(cohort(ages * copies))
    assert np.allclose(base.mass, dup.mass, atol=1e-15, rtol=0)
    assert dup.support == copies * base.support


@given(age_lists)
def test_normalized(ages):
    s = build_signature(cohort(ages))
    assert (s.mass >= 0).all()
    assert abs(s.mass.sum() - 1.0) <= 1e-9


masses = arrays(np.float64, 100, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-3)


def as_sig(a):
    return AgeSignature("X00", a / a.sum(), 1)


@given(masses, masses, masses)
def test_metric_axioms(a, b, c):
    a, b, c = as_sig(a), as_sig(b), as_sig(c)
    dab, dba = signature_distance(a, b), signature_distance(b, a)
    assert dab >= 0 and dab == dba
    assert signature_distance(a, a) <= 1e-12
    assert signature_distance(a, c) <= dab + signature_distance(b, c) + 1e-12
    if dab <= 1e-12:
        assert np.allclose(a.mass, b.mass, atol=1e-12)


def test_export_roundtrip():
    sigs = [build_signature(cohort([1, 2, 2, 3], code="A00")), build_signature(cohort([77] * 3, code="I50"))]
    buf = io.StringIO()
    write_signatures(sigs, buf)
    header = buf.getvalue().splitlines()[0].split(",")
    assert header[0] == "code" and header[1] == "m00" and header[100] == "m99" and header[-1] == "support"
    back = read_signatures(io.StringIO(buf.getvalue()))
    assert [s.code for s in back] == ["A00", "I50"]
    assert all(np.array_equal(x.mass, y.mass) and x.support == y.support for x, y in zip(sigs, back))

import io
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agesig.errors import CodeFormatError, IngestError
from agesig.ingest import (
    Cohort,
    Schema,
    VisitRecord,
    age_between,
    build_cohorts,
    first_visits,
    cohorts_from_first_visits,
    merge_first_visits,
    normalize_code,
    parse_records,
    write_drop_report,
    write_records,
)

HEADER = "patient_id,age,code,visit_date\n"


def parse(text, **schema):
    return parse_records(io.BytesIO(text.encode()), Schema(**schema))


@pytest.mark.parametrize("raw, expected", [
    ("j20.9", "J20"),
    ("M54", "M54"),
    ("M54.5", "M54"),
    ("  z35 ", "Z35"),
    ("M545", "M54"),
    ("S72.001A", "S72"),
])
def test_normalize_code(raw, expected):
    assert normalize_code(raw) == expected


@pytest.mark.parametrize("raw", ["1234", "", "   ", "J2", "JJ0", "J20.9.1", "J20-9", "é20"])
def test_normalize_code_rejects(raw):
    with pytest.raises(CodeFormatError) as info:
        normalize_code(raw)
    assert info.value.raw == raw


@given(st.from_regex(r"\s*[A-Za-z][0-9]{2}(\.?[0-9A-Za-z]{0,4})?\s*", fullmatch=True))
def test_normalize_code_idempotent(raw):
    once = normalize_code(raw)
    assert normalize_code(once) == once
    assert len(once) == 3 and once[0].isupper() and once[1:].isdigit()


def test_parse_default_schema_row():
    records, errors = parse(HEADER + "p1,34,M54.5,2013-04-01\n")
    assert errors == []
    assert records == [VisitRecord("p1", 34, "M54", date(2013, 4, 1))]


def test_parse_negative_age():
    records, errors = parse(HEADER + "p2,-3,J20,2013-04-01\n")
    assert records == []
    assert len(errors) == 1
    assert errors[0].line == 2 and errors[0].reason == "negative age"


def test_parse_is_exhaustive():
    good = ["p1,34,M54.5,2013-04-01", "p2,0,J20,", "p3,101,A09,2014-01-02"]
    bad = ["p4,x,J20,2013-01-01", "p5,3,1234,2013-01-01", ",3,J20,2013-01-01",
           "p6,3,J20,2013-13-01", "p7,3,J20", "p8,,J20,2013-01-01"]
    lines = good + bad
    records, errors = parse(HEADER + "\n".join(lines) + "\n")
    assert len(records) == len(good)
    assert len(errors) == len(bad)
    assert len(records) + len(errors) == len(lines)
    assert sorted(e.line for e in errors) == list(range(5, 11))


def test_parse_blank_lines_are_not_rows():
    records, errors = parse(HEADER + "\np1,3,J20,2013-01-01\n\n")
    assert len(records) == 1 and errors == []


def test_parse_deterministic():
    text = HEADER + "p1,34,M54.5,2013-04-01\np2,-3,J20,2013-04-01\np3,7,b01,\n"
    assert parse(text) == parse(text)


def test_unknown_column_is_fatal():
    with pytest.raises(IngestError, match="columns not in header"):
        parse(HEADER + "p1,3,J20,2013-01-01\n", code_column="icd")


def test_unreadable_stream_is_fatal():
    with pytest.raises(IngestError, match="unreadable"):
        parse_records(io.BytesIO(HEADER.encode() + b"p1,3,J20,\xff\xfe\n"))


def test_schema_needs_one_age_source():
    with pytest.raises(IngestError):
        Schema(age_column="age", birthdate_column="dob")
    with pytest.raises(IngestError):
        Schema(age_column=None, birthdate_column=None)


def test_missing_date_column_tolerated_in_age_mode():
    records, errors = parse("patient_id,age,code\np1,3,J20\n")
    assert records == [VisitRecord("p1", 3, "J20", None)]


def test_birthdate_mode():
    text = "pid;dob;dt;icd\np1;1980-06-15;2013-06-14;I50\np1;1980-06-15;2013-06-15;I50\np2;2014-01-01;2013-12-31;P07\n"
    records, errors = parse(text, delimiter=";", patient_column="pid", age_column=None,
                            birthdate_column="dob", date_column="dt", code_column="icd")
    assert [r.age for r in records] == [32, 33]
    assert [e.reason for e in errors] == ["negative age"]


@pytest.mark.parametrize("birth, visit, age", [
    (date(2000, 2, 29), date(2001, 2, 28), 0),
    (date(2000, 2, 29), date(2001, 3, 1), 1),
    (date(1950, 1, 1), date(2013, 12, 31), 63),
    (date(2013, 5, 5), date(2013, 5, 5), 0),
])
def test_age_between(birth, visit, age):
    assert age_between(birth, visit) == age


def test_jsonl():
    text = '{"patient_id": "p1", "age": 4, "code": "h66.9"}\n\n[1]\n{"patient_id": "p2", "age": "x", "code": "H66"}\nnot json\n'
    records, errors = parse(text, format="jsonl")
    assert records == [VisitRecord("p1", 4, "H66", None)]
    assert [e.line for e in errors] == [3, 4, 5]


def test_write_records_roundtrip():
    recs = [VisitRecord("p1", 34, "M54", date(2013, 4, 1)), VisitRecord("p2", 0, "J20", None)]
    buf = io.StringIO()
    write_records(recs, buf)
    back, errors = parse(buf.getvalue())
    assert back == recs and errors == []


# -- cohorts ------------------------------------------------------------------

def test_dedup_keeps_earliest_visit():
    recs = [VisitRecord("p1", 35, "J20", date(2014, 5, 1)), VisitRecord("p1", 34, "J20", date(2013, 5, 1))]
    built = build_cohorts(recs, min_patients=1)
    assert built.cohorts["J20"].members == (("p1", 34),)


def test_dedup_prefers_date_over_age():
    # dirty data: earliest visit carries the larger age
    recs = [VisitRecord("p1", 40, "J20", date(2013, 1, 1)), VisitRecord("p1", 39, "J20", date(2014, 1, 1))]
    assert build_cohorts(recs, 1).cohorts["J20"].members == (("p1", 40),)


def test_two_codes_two_cohorts():
    recs = [VisitRecord("p1", 3, "J20"), VisitRecord("p2", 30, "A09")]
    built = build_cohorts(recs, 1)
    assert {c: v.patient_count for c, v in built.cohorts.items()} == {"A09": 1, "J20": 1}
    built = build_cohorts(recs, 2)
    assert built.cohorts == {}
    assert [d.code for d in built.dropped] == ["A09", "J20"]


def test_min_patients_drop_report():
    recs = [VisitRecord(f"p{i}", 40 + i, "M54") for i in range(10)]
    built = build_cohorts(recs, min_patients=50)
    assert "M54" not in built.cohorts
    assert built.dropped[0].code == "M54" and built.dropped[0].patient_count == 10
    buf = io.StringIO()
    write_drop_report(built.dropped, buf)
    assert buf.getvalue().splitlines()[:2] == ["code,patient_count,reason", "M54,10,fewer than 50 patients"]


def test_cohort_rejects_duplicate_patients():
    with pytest.raises(ValueError):
        Cohort("J20", (("p1", 3), ("p1", 4)))


records_strategy = st.lists(
    st.builds(
        VisitRecord,
        st.sampled_from([f"p{i}" for i in range(8)]),
        st.integers(0, 110),
        st.sampled_from(["J20", "A09", "M54"]),
        st.one_of(st.none(), st.dates(date(2013, 3, 1), date(2014, 7, 31))),
    ),
    max_size=60,
)


@given(records_strategy, st.integers(1, 5))
def test_cohort_invariants(records, min_patients):
    built = build_cohorts(records, min_patients)
    pairs = {(r.patient_id, r.code) for r in records}
    for cohort in built.cohorts.values():
        ids = [p for p, _ in cohort.members]
        assert len(ids) == len(set(ids)) == cohort.patient_count >= min_patients
    total = sum(c.patient_count for c in built.cohorts.values())
    assert total <= len(pairs)
    if min_patients == 1:
        assert total == len(pairs)


@given(records_strategy, st.integers(0, 60), st.integers(0, 60))
@settings(max_examples=200)
def test_chunked_merge_matches_sequential(records, i, j):
    i, j = sorted((min(i, len(records)), min(j, len(records))))
    chunks = [records[:i], records[i:j], records[j:]]
    parts = [first_visits(c) for c in chunks]
    left = merge_first_visits(merge_first_visits(parts[0], parts[1]), parts[2])
    right = merge_first_visits(parts[2], merge_first_visits(parts[1], parts[0]))
    whole = first_visits(records)
    assert left == right == whole
    assert cohorts_from_first_visits(left, 1) == build_cohorts(records, 1)

"""Visit-record parsing, ICD-10 normalization and cohort aggregation.

Input files are delimited text with a header row, or line-delimited JSON.
Each well-formed row becomes a :class:`VisitRecord`; malformed rows are
collected as :class:`RowError` so a single bad line never aborts a run.
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from datetime import date
from functools import lru_cache
from typing import IO, Iterable, Iterator, NamedTuple

from .errors import CodeFormatError, IngestError

DEFAULT_MIN_PATIENTS = 50

_CODE_RE = re.compile(r"([A-Z][0-9]{2})(?:\.?[0-9A-Z]{0,4})?")
_INT_RE = re.compile(r"[+-]?[0-9]+")


@lru_cache(maxsize=65536)
def normalize_code(raw: str) -> str:
    """Reduce a raw ICD-10 code to its 3-character category.

    >>> normalize_code(" j20.9 ")
    'J20'
    >>> normalize_code("M545")
    'M54'
    """
    text = raw.strip().upper()
    m = _CODE_RE.fullmatch(text)
    if m is None:
        raise CodeFormatError(raw)
    return m.group(1)


def is_category(value: str) -> bool:
    return len(value) == 3 and "A" <= value[0] <= "Z" and value[1:].isdigit() and value[1:].isascii()


@dataclass(frozen=True, slots=True)
class VisitRecord:
    patient_id: str
    age: int
    code: str
    visit_date: date | None = None

    def __post_init__(self):
        if self.age < 0:
            raise ValueError(f"negative age: {self.age}")
        if not is_category(self.code):
            raise CodeFormatError(self.code)


@dataclass(frozen=True, slots=True)
class RowError:
    line: int
    reason: str


@dataclass(frozen=True)
class Schema:
    """Maps input columns (or JSON keys) onto VisitRecord fields.

    Ages come either from ``age_column`` or are derived from
    ``birthdate_column`` and ``date_column``; exactly one of ``age_column``
    and ``birthdate_column`` must be set.  In direct-age mode the date
    column is optional: when the header lacks it, visit dates are left
    empty.
    """

    format: str = "csv"
    delimiter: str = ","
    patient_column: str = "patient_id"
    age_column: str | None = "age"
    code_column: str = "code"
    date_column: str | None = "visit_date"
    birthdate_column: str | None = None

    def __post_init__(self):
        if self.format not in ("csv", "jsonl"):
            raise IngestError(f"unknown input format {self.format!r}")
        if (self.age_column is None) == (self.birthdate_column is None):
            raise IngestError("schema needs exactly one of age_column / birthdate_column")
        if self.birthdate_column is not None and self.date_column is None:
            raise IngestError("birthdate-derived ages need a visit date column")
        if len(self.delimiter) != 1:
            raise IngestError(f"delimiter must be one character, got {self.delimiter!r}")

    @property
    def derives_age(self) -> bool:
        return self.birthdate_column is not None


def age_between(birth: date, visit: date) -> int:
    """Completed years from ``birth`` to ``visit``."""
    return visit.year - birth.year - ((visit.month, visit.day) < (birth.month, birth.day))


class _BadRow(Exception):
    pass


def _parse_date(value, what: str) -> date | None:
    if value is None:
        return None
    if isinstance(value, date):
        return value
    text = str(value).strip()
    if not text:
        return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise _BadRow(f"invalid {what} {text!r}") from None


def _parse_age(value) -> int:
    if isinstance(value, bool) or value is None:
        raise _BadRow("missing age" if value is None else f"invalid age {value!r}")
    if isinstance(value, int):
        age = value
    else:
        text = str(value).strip()
        if not text:
            raise _BadRow("missing age")
        if not _INT_RE.fullmatch(text):
            raise _BadRow(f"invalid age {text!r}")
        age = int(text)
    if age < 0:
        raise _BadRow("negative age")
    return age


def _to_record(get, schema: Schema) -> VisitRecord:
    pid = get(schema.patient_column)
    pid = "" if pid is None else str(pid).strip()
    if not pid:
        raise _BadRow("missing patient id")

    raw_code = get(schema.code_column)
    if raw_code is None or not str(raw_code).strip():
        raise _BadRow("missing code")
    try:
        code = normalize_code(str(raw_code))
    except CodeFormatError:
        raise _BadRow(f"invalid code {str(raw_code).strip()!r}") from None

    visit = _parse_date(get(schema.date_column), "visit date") if schema.date_column else None
    if schema.derives_age:
        birth = _parse_date(get(schema.birthdate_column), "birthdate")
        if birth is None:
            raise _BadRow("missing birthdate")
        if visit is None:
            raise _BadRow("missing visit date")
        age = age_between(birth, visit)
        if age < 0:
            raise _BadRow("negative age")
    else:
        age = _parse_age(get(schema.age_column))
    return VisitRecord(pid, age, code, visit)


def _text_stream(stream: IO[bytes]) -> io.TextIOWrapper:
    return io.TextIOWrapper(stream, encoding="utf-8-sig", newline="")


def _iter_csv(text: IO[str], schema: Schema) -> Iterator[tuple[int, object]]:
    reader = csv.reader(text, delimiter=schema.delimiter)
    header = next(reader, None)
    if header is None:
        return
    header = [h.strip() for h in header]
    index = {name: i for i, name in enumerate(header)}
    required = [schema.patient_column, schema.code_column]
    required.append(schema.birthdate_column if schema.derives_age else schema.age_column)
    if schema.derives_age:
        required.append(schema.date_column)
    missing = [c for c in required if c not in index]
    if missing:
        raise IngestError(f"columns not in header: {', '.join(missing)} (header: {header})")
    width = len(header)

    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != width:
            yield line, _BadRow(f"expected {width} fields, got {len(row)}")
            continue
        yield line, (lambda col, row=row: row[index[col]] if col in index else None)


def _iter_jsonl(text: IO[str], schema: Schema) -> Iterator[tuple[int, object]]:
    for line, raw in enumerate(text, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            yield line, _BadRow(f"invalid JSON: {exc.msg}")
            continue
        if not isinstance(obj, dict):
            yield line, _BadRow("JSON row is not an object")
            continue
        yield line, obj.get


def parse_records(stream: IO[bytes], schema: Schema | None = None) -> tuple[list[VisitRecord], list[RowError]]:
    """Parse every row of ``stream``.

    Returns the records and the per-row errors; together they account for
    every non-blank data row.  Raises :class:`IngestError` when the stream
    cannot be decoded or the schema names a column the header lacks.
    """
    schema = schema or Schema()
    records: list[VisitRecord] = []
    errors: list[RowError] = []
    text = _text_stream(stream)
    rows = _iter_csv(text, schema) if schema.format == "csv" else _iter_jsonl(text, schema)
    try:
        for line, item in rows:
            if isinstance(item, _BadRow):
                errors.append(RowError(line, str(item)))
                continue
            try:
                records.append(_to_record(item, schema))
            except _BadRow as exc:
                errors.append(RowError(line, str(exc)))
    except UnicodeDecodeError as exc:
        raise IngestError(f"unreadable input: {exc}") from exc
    except csv.Error as exc:
        raise IngestError(f"malformed delimited text: {exc}") from exc
    finally:
        text.detach()
    return records, errors


def read_records(path, schema: Schema | None = None) -> tuple[list[VisitRecord], list[RowError]]:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}") from exc
    with fh:
        return parse_records(fh, schema)


def write_records(records: Iterable[VisitRecord], fh: IO[str], delimiter: str = ",") -> None:
    """Write records in the default-schema delimited format."""
    writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
    writer.writerow(["patient_id", "age", "code", "visit_date"])
    for r in records:
        writer.writerow([r.patient_id, r.age, r.code, r.visit_date.isoformat() if r.visit_date else ""])


# -- cohorts ------------------------------------------------------------------

@dataclass(frozen=True)
class Cohort:
    """Distinct patients carrying one ICD-10 category, each with one age."""

    code: str
    members: tuple[tuple[str, int], ...]

    def __post_init__(self):
        ids = [pid for pid, _ in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError(f"cohort {self.code}: duplicate patient ids")

    @property
    def patient_count(self) -> int:
        return len(self.members)

    @property
    def ages(self) -> list[int]:
        return [age for _, age in self.members]


@dataclass(frozen=True)
class DroppedCohort:
    code: str
    patient_count: int
    reason: str


class CohortBuild(NamedTuple):
    cohorts: dict[str, Cohort]
    dropped: list[DroppedCohort]


# (code, patient_id) -> (visit order key, age); dateless visits sort last
FirstVisits = dict[tuple[str, str], tuple[date, int]]
_NO_DATE = date.max


def first_visits(records: Iterable[VisitRecord]) -> FirstVisits:
    """Earliest visit per (code, patient) over ``records``.

    Partial results from separate chunks combine with
    :func:`merge_first_visits`; the merge is commutative and associative.
    """
    out: FirstVisits = {}
    for r in records:
        key = (r.code, r.patient_id)
        cand = (r.visit_date or _NO_DATE, r.age)
        cur = out.get(key)
        if cur is None or cand < cur:
            out[key] = cand
    return out


def merge_first_visits(a: FirstVisits, b: FirstVisits) -> FirstVisits:
    out = dict(a)
    for key, cand in b.items():
        cur = out.get(key)
        if cur is None or cand < cur:
            out[key] = cand
    return out


def cohorts_from_first_visits(visits: FirstVisits, min_patients: int = DEFAULT_MIN_PATIENTS) -> CohortBuild:
    if min_patients < 1:
        raise ValueError("min_patients must be positive")
    grouped: dict[str, list[tuple[str, int]]] = {}
    for (code, pid), (_, age) in visits.items():
        grouped.setdefault(code, []).append((pid, age))

    cohorts: dict[str, Cohort] = {}
    dropped: list[DroppedCohort] = []
    for code in sorted(grouped):
        members = grouped[code]
        if len(members) < min_patients:
            dropped.append(DroppedCohort(code, len(members), f"fewer than {min_patients} patients"))
            continue
        members.sort()
        cohorts[code] = Cohort(code, tuple(members))
    return CohortBuild(cohorts, dropped)


def build_cohorts(records: Iterable[VisitRecord], min_patients: int = DEFAULT_MIN_PATIENTS) -> CohortBuild:
    """Group records into per-code cohorts of distinct patients.

    A patient seen several times for one code is kept once, at the age of
    the earliest visit.  Cohorts below ``min_patients`` are returned in
    ``dropped`` instead of ``cohorts``.
    """
    return cohorts_from_first_visits(first_visits(records), min_patients)


def write_drop_report(dropped: Iterable[DroppedCohort], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["code", "patient_count", "reason"])
    for d in dropped:
        writer.writerow([d.code, d.patient_count, d.reason])

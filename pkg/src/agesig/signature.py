"""Age probability-mass signatures and the Euclidean distance between them.

Bin ``i`` of a signature holds the fraction of a cohort's patients whose
age is ``i`` years (age 0 meaning under one year).  Ages of 100 and above
share the last bin so no patient's mass is discarded.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import EmptyCohortError
from .ingest import Cohort

N_BINS = 100
MAX_AGE_BIN = N_BINS - 1


@dataclass(frozen=True, eq=False)
class AgeSignature:
    code: str
    mass: np.ndarray
    support: int

    def __post_init__(self):
        mass = np.array(self.mass, dtype=np.float64)
        if mass.shape != (N_BINS,):
            raise ValueError(f"signature {self.code}: expected {N_BINS} bins, got shape {mass.shape}")
        if self.support < 1:
            raise ValueError(f"signature {self.code}: support must be >= 1")
        if (mass < 0).any():
            raise ValueError(f"signature {self.code}: negative mass")
        if abs(mass.sum() - 1.0) > 1e-9:
            raise ValueError(f"signature {self.code}: mass sums to {mass.sum()!r}")
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)


def age_counts(ages: Iterable[int]) -> np.ndarray:
    ages = np.fromiter(ages, dtype=np.int64)
    if (ages < 0).any():
        raise ValueError("negative age")
    return np.bincount(np.minimum(ages, MAX_AGE_BIN), minlength=N_BINS)


def build_signature(cohort: Cohort) -> AgeSignature:
    n = cohort.patient_count
    if n == 0:
        raise EmptyCohortError(f"cohort {cohort.code} has no patients")
    counts = age_counts(cohort.ages)
    return AgeSignature(cohort.code, counts / n, n)


def signature_distance(a: AgeSignature, b: AgeSignature) -> float:
    diff = a.mass - b.mass
    return float(np.sqrt(np.dot(diff, diff)))


def signature_matrix(signatures: Sequence[AgeSignature]) -> np.ndarray:
    """Stack signatures into an (n, 100) array."""
    if not signatures:
        return np.empty((0, N_BINS))
    return np.vstack([s.mass for s in signatures])


# -- delimited export ---------------------------------------------------------
# columns: code, m00 .. m99, support

MASS_COLUMNS = [f"m{i:02d}" for i in range(N_BINS)]
HEADER = ["code", *MASS_COLUMNS, "support"]


def write_signatures(signatures: Iterable[AgeSignature], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(HEADER)
    for s in signatures:
        writer.writerow([s.code, *(repr(float(x)) for x in s.mass), s.support])


def read_signatures(fh: IO[str]) -> list[AgeSignature]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header != HEADER:
        raise ValueError("signature file header does not match the code,m00..m99,support layout")
    out = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(HEADER):
            raise ValueError(f"line {reader.line_num}: expected {len(HEADER)} fields")
        out.append(AgeSignature(row[0], np.array([float(x) for x in row[1:-1]]), int(row[-1])))
    return out

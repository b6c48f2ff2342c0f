"""Gaussian KDE of cohort ages and empirical CDFs of signatures.

These are for plotting only; clustering always runs on the raw signatures.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ZeroBandwidthError
from .signature import N_BINS, AgeSignature

GRID_MAX = 100.0
DEFAULT_GRID_STEP = 0.5
AUTO = "auto"
_SQRT_2PI = np.sqrt(2 * np.pi)


@dataclass(frozen=True, eq=False)
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.grid))


def silverman_bandwidth(ages) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to sd when the IQR is 0."""
    x = np.asarray(ages, dtype=np.float64)
    if x.size < 2:
        raise ZeroBandwidthError("need at least two ages for an automatic bandwidth")
    sd = x.std(ddof=1)
    if sd == 0:
        raise ZeroBandwidthError("all ages are equal; pass an explicit bandwidth")
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** -0.2


def kde(ages: Sequence[int], grid_step: float = DEFAULT_GRID_STEP, bandwidth: float | str = AUTO) -> DensityCurve:
    """Gaussian KDE of ``ages`` on [0, 100].

    Kernel mass spilling past either end of the age range is put back by
    scaling the whole curve by 1 / (kernel mass inside [0, 100]); this keeps
    unit mass for cohorts piled up near age 0 or 99 without changing the
    curve's shape.  An automatic
    bandwidth is floored at twice the grid step (ages are whole years and
    the trapezoid rule needs the kernel to span several grid points);
    explicit bandwidths below that are rejected.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    x = np.sort(np.asarray(ages, dtype=np.float64))
    if x.size == 0:
        raise ValueError("kde needs at least one age")
    floor = 2 * grid_step
    if bandwidth == AUTO:
        h = max(silverman_bandwidth(x), floor)
    else:
        h = float(bandwidth)
        if h < floor:
            raise ValueError(f"bandwidth {h} is below twice the grid step ({floor})")

    grid = np.linspace(0.0, GRID_MAX, int(round(GRID_MAX / grid_step)) + 1)
    # integer ages: one kernel per distinct value, weighted by its count
    centers, counts = np.unique(np.clip(x, 0.0, GRID_MAX), return_counts=True)
    weights = counts / x.size
    z = (grid[:, None] - centers[None, :]) / h
    values = np.exp(-0.5 * z * z) @ weights / (h * _SQRT_2PI)
    inside = float((ndtr((GRID_MAX - centers) / h) - ndtr(-centers / h)) @ weights)
    values /= inside
    # trapezoid rounding can land a few ulps above 1; shave them off
    total = float(np.trapezoid(values, grid))
    while total > 1.0:
        values *= np.nextafter(1.0 / total, 0.0)
        total = float(np.trapezoid(values, grid))
    return DensityCurve(grid, values, h)


@dataclass(frozen=True, eq=False)
class EcdfVector:
    values: np.ndarray


def ecdf(signature: AgeSignature) -> EcdfVector:
    return EcdfVector(np.cumsum(signature.mass))


def cluster_mean_ecdf(members: Sequence[EcdfVector]) -> EcdfVector:
    """Pointwise mean of member ECDFs.

    Accumulated as offsets from the first member, which keeps the mean of
    identical members bit-equal to the member.
    """
    if not members:
        raise ValueError("cluster_mean_ecdf needs at least one member")
    stack = np.vstack([m.values for m in members])
    base = stack[0]
    mean = base + (stack - base).mean(axis=0)
    return EcdfVector(np.maximum.accumulate(mean))


def write_curve(x, y, fh: IO[str], names: tuple[str, str] = ("x", "y")) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(names)
    for a, b in zip(x, y):
        writer.writerow([repr(float(a)), repr(float(b))])


AGE_AXIS = np.arange(N_BINS)

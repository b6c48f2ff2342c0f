"""Synthetic visit logs with planted age-density clusters.

Every code belongs to one cluster, whose template is a mixture of normals
truncated to [0, 100).  A code's own age distribution is the template with
each component's mean and spread jittered by ``noise_level``; its patients
draw their first-visit age from that distribution and then make one or
more visits inside a 15-month observation window.

Each code draws from its own generator seeded by ``(seed, code_index)``,
so output does not depend on generation order.
"""
from __future__ import annotations

import csv
import json
import string
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from math import comb
from typing import IO, Sequence

import numpy as np
from scipy.stats import norm, truncnorm

from .ingest import VisitRecord

RNG_NAME = "numpy.PCG64(SeedSequence([seed, code_index]))"
AGE_LIMIT = 100
WINDOW_START = date(2013, 3, 1)
WINDOW_DAYS = (date(2014, 7, 31) - WINDOW_START).days
MAX_CODES = 26 * 100


@dataclass(frozen=True)
class Component:
    mean: float
    sd: float
    weight: float


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    components: tuple[Component, ...]
    n_codes: int
    patients_per_code: tuple[int, int] = (200, 200)


def _default_profile() -> tuple[float, ...]:
    # adult-heavy population pyramid
    ages = np.arange(AGE_LIMIT)
    w = norm.pdf(ages, 35, 20) + 0.002
    return tuple(float(v) for v in w / w.sum())


@dataclass(frozen=True)
class PopulationSpec:
    clusters: tuple[ClusterSpec, ...]
    population_age_profile: tuple[float, ...] = field(default_factory=_default_profile)
    seed: int = 20130301
    noise_level: float = 1.0
    mean_visits: float = 2.0

    def validate(self) -> None:
        if not self.clusters:
            raise ValueError("population spec needs at least one cluster")
        total = 0
        for c in self.clusters:
            if c.n_codes < 1:
                raise ValueError(f"cluster {c.name}: needs at least one code")
            if not c.components:
                raise ValueError(f"cluster {c.name}: empty mixture")
            weights = [comp.weight for comp in c.components]
            if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
                raise ValueError(f"cluster {c.name}: mixture weights must be nonnegative and sum to 1")
            if any(comp.sd <= 0 for comp in c.components):
                raise ValueError(f"cluster {c.name}: component sd must be positive")
            lo, hi = c.patients_per_code
            if not 1 <= lo <= hi:
                raise ValueError(f"cluster {c.name}: bad patients_per_code range {c.patients_per_code}")
            total += c.n_codes
        if total > MAX_CODES:
            raise ValueError(f"at most {MAX_CODES} codes can be generated, asked for {total}")
        if len(self.population_age_profile) != AGE_LIMIT or min(self.population_age_profile) < 0:
            raise ValueError("population_age_profile needs 100 nonnegative weights")
        if self.noise_level < 0:
            raise ValueError("noise_level must be nonnegative")
        if self.mean_visits < 1:
            raise ValueError("mean_visits must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationSpec":
        clusters = tuple(
            ClusterSpec(
                c["name"],
                tuple(Component(**comp) for comp in c["components"]),
                int(c["n_codes"]),
                tuple(c.get("patients_per_code", (200, 200))),
            )
            for c in d["clusters"]
        )
        kw = {k: d[k] for k in ("seed", "noise_level", "mean_visits") if k in d}
        if "population_age_profile" in d:
            kw["population_age_profile"] = tuple(d["population_age_profile"])
        return cls(clusters, **kw)


# six shapes: infants, teens/young adults, narrow thirties, broad adulthood, 60s, 80+
DEFAULT_TEMPLATES = (
    ("A", (Component(1.0, 2.0, 0.6), Component(4.0, 3.0, 0.4))),
    ("B", (Component(19.0, 5.0, 1.0),)),
    ("C", (Component(35.0, 3.5, 1.0),)),
    ("D", tuple(Component(m, 5.0, 0.25) for m in (36.0, 46.0, 56.0, 66.0))),
    ("E", (Component(67.0, 5.0, 1.0),)),
    ("F", (Component(83.0, 4.0, 1.0),)),
)


def default_population_spec(
    seed: int = 20130301,
    codes_per_cluster: int | Sequence[int] = 30,
    patients_per_code: tuple[int, int] = (200, 200),
    noise_level: float = 1.0,
    mean_visits: float = 2.0,
) -> PopulationSpec:
    if isinstance(codes_per_cluster, int):
        codes_per_cluster = [codes_per_cluster] * len(DEFAULT_TEMPLATES)
    clusters = tuple(
        ClusterSpec(name, comps, int(n), tuple(patients_per_code))
        for (name, comps), n in zip(DEFAULT_TEMPLATES, codes_per_cluster, strict=True)
    )
    return PopulationSpec(clusters, seed=seed, noise_level=noise_level, mean_visits=mean_visits)


def split_codes(total: int, n_clusters: int = 6) -> list[int]:
    """Spread ``total`` codes over clusters as evenly as possible."""
    base, extra = divmod(total, n_clusters)
    return [base + (i < extra) for i in range(n_clusters)]


def mixture_pdf(components: Sequence[Component], x) -> np.ndarray:
    """Density of a mixture of normals each truncated to [0, 100)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for c in components:
        a, b = (0 - c.mean) / c.sd, (AGE_LIMIT - c.mean) / c.sd
        out += c.weight * truncnorm.pdf(x, a, b, loc=c.mean, scale=c.sd)
    return out


def mixture_age_pmf(components: Sequence[Component]) -> np.ndarray:
    """Probability of each whole-year age 0..99 (age = floor of the draw)."""
    edges = np.arange(AGE_LIMIT + 1, dtype=np.float64)
    out = np.zeros(AGE_LIMIT)
    for c in components:
        a, b = (0 - c.mean) / c.sd, (AGE_LIMIT - c.mean) / c.sd
        out += c.weight * np.diff(truncnorm.cdf(edges, a, b, loc=c.mean, scale=c.sd))
    return out


def sample_mixture(components: Sequence[Component], size: int, rng: np.random.Generator) -> np.ndarray:
    """Continuous draws from the truncated mixture."""
    weights = np.array([c.weight for c in components])
    which = rng.choice(len(components), size=size, p=weights / weights.sum())
    out = np.empty(size)
    for i, c in enumerate(components):
        idx = np.flatnonzero(which == i)
        if idx.size:
            a, b = (0 - c.mean) / c.sd, (AGE_LIMIT - c.mean) / c.sd
            out[idx] = truncnorm.rvs(a, b, loc=c.mean, scale=c.sd, size=idx.size, random_state=rng)
    return out


@dataclass(frozen=True)
class PlantedTruth:
    cluster_of: dict[str, int]
    components_of: dict[str, tuple[Component, ...]]

    def labels(self, codes: Sequence[str]) -> list[int]:
        return [self.cluster_of[c] for c in codes]


def _code_pool(rng: np.random.Generator) -> list[str]:
    pool = [f"{letter}{i:02d}" for letter in string.ascii_uppercase for i in range(100)]
    return [pool[i] for i in rng.permutation(len(pool))]


def _perturb(components: Sequence[Component], noise: float, rng: np.random.Generator) -> tuple[Component, ...]:
    if noise == 0:
        return tuple(components)
    out = []
    for c in components:
        mean = c.mean + noise * rng.standard_normal()
        sd = c.sd * float(np.exp(0.1 * noise * rng.standard_normal()))
        out.append(Component(float(mean), sd, c.weight))
    return tuple(out)


def generate_population(spec: PopulationSpec) -> tuple[list[VisitRecord], PlantedTruth]:
    spec.validate()
    master = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed])))
    pool = _code_pool(master)
    profile = np.asarray(spec.population_age_profile, dtype=np.float64)
    profile = profile / profile.sum()

    plan = []
    for cid, cluster in enumerate(spec.clusters):
        for _ in range(cluster.n_codes):
            plan.append((cid, cluster))

    # derive all per-code parameters first, then size each cohort by how much
    # of the population lives at the code's ages
    params = []
    for index, (cid, cluster) in enumerate(plan):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, index])))
        comps = _perturb(cluster.components, spec.noise_level, rng)
        params.append((rng, comps, float(mixture_age_pmf(comps) @ profile)))
    top = max(p[2] for p in params)

    records: list[VisitRecord] = []
    truth_cluster: dict[str, int] = {}
    truth_comps: dict[str, tuple[Component, ...]] = {}
    for index, ((cid, cluster), (rng, comps, reach)) in enumerate(zip(plan, params)):
        code = pool[index]
        lo, hi = cluster.patients_per_code
        n_patients = lo + int(round((hi - lo) * reach / top)) if top > 0 else lo
        truth_cluster[code] = cid
        truth_comps[code] = comps
        records.extend(_visits(code, index, comps, n_patients, spec.mean_visits, rng))
    return records, PlantedTruth(truth_cluster, truth_comps)


def _visits(code, index, comps, n_patients, mean_visits, rng) -> list[VisitRecord]:
    ages = np.floor(sample_mixture(comps, n_patients, rng)).astype(int)
    ages = np.minimum(ages, AGE_LIMIT - 1)
    extra = rng.poisson(mean_visits - 1.0, size=n_patients)
    first_day = rng.integers(0, WINDOW_DAYS + 1, size=n_patients)
    to_birthday = rng.integers(0, 365, size=n_patients)
    out = []
    for j in range(n_patients):
        pid = f"P{index:04d}-{j:06d}"
        day0 = int(first_day[j])
        days = [day0]
        if extra[j]:
            days += sorted(int(d) for d in rng.integers(day0, WINDOW_DAYS + 1, size=extra[j]))
        for d in days:
            elapsed = d - day0
            bumps = 0 if elapsed <= to_birthday[j] else 1 + (elapsed - to_birthday[j]) // 365
            out.append(VisitRecord(pid, int(ages[j] + bumps), code, WINDOW_START + timedelta(days=d)))
    return out


def write_truth(truth: PlantedTruth, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["code", "cluster_id"])
    for code in sorted(truth.cluster_of):
        writer.writerow([code, truth.cluster_of[code]])


def read_truth(fh: IO[str]) -> dict[str, int]:
    reader = csv.DictReader(fh)
    return {row["code"]: int(row["cluster_id"]) for row in reader}


def metadata(spec: PopulationSpec) -> str:
    return json.dumps({"rng": RNG_NAME, "seed": spec.seed, "spec": spec.to_dict()}, indent=2, sort_keys=True) + "\n"


def adjusted_rand_index(labels_a: Sequence, labels_b: Sequence) -> float:
    """Hubert-Arabie adjusted Rand index from the contingency table."""
    if len(labels_a) != len(labels_b):
        raise ValueError(f"label lists differ in length: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n < 2:
        return 1.0
    _, a = np.unique(np.asarray(labels_a, dtype=object).astype(str), return_inverse=True)
    _, b = np.unique(np.asarray(labels_b, dtype=object).astype(str), return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)

    def pairs(counts) -> int:
        return sum(comb(int(c), 2) for c in np.ravel(counts))

    index = pairs(table)
    rows, cols = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    expected = rows * cols / comb(n, 2)
    maximum = (rows + cols) / 2
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))

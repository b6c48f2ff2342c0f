"""End-to-end pipeline: visit logs in, cluster report files out.

Output directory layout (all text, byte-reproducible for a given input and
config except ``manifest.json``, which also records timings):

    labels.csv            code, cluster, patient_count
    dendrogram.txt        merge list, see :func:`agesig.hac.to_text`
    elbow.csv             k, W, chord_distance, selected
    ecdf_cluster_<i>.csv  age, mean ECDF, one column per member code
    top_codes.csv         cluster, rank, code, patient_count
    signatures.csv        code, m00..m99, support
    dropped.csv           cohorts below min_patients
    kde_top_codes.csv     KDE of the most frequent code of each cluster
    manifest.json         config echo, counts, selected k, timings, digests
    *.svg                 elbow, ECDF panels and KDE overlay (emit_svg)
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__, svg
from .density import AUTO, DEFAULT_GRID_STEP, EcdfVector, cluster_mean_ecdf, ecdf, kde
from .errors import AgesigError, DegenerateElbow, IngestError, ZeroBandwidthError
from .hac import cut_tree, to_text, ward_cluster
from .ingest import DEFAULT_MIN_PATIENTS, Cohort, Schema, build_cohorts, read_records, write_drop_report
from .selection import DEFAULT_K_MAX, dispersion_curve, select_k, write_elbow
from .signature import build_signature, write_signatures
from .synth import PopulationSpec, RNG_NAME, generate_population

log = logging.getLogger(__name__)

DEFAULT_TOP_N = 4

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class PipelineError(AgesigError):
    """A stage failed; ``str(err)`` reads ``"<stage>: <reason>"``."""

    def __init__(self, stage: str, reason: str, exit_code: int):
        super().__init__(f"{stage}: {reason}")
        self.stage = stage
        self.exit_code = exit_code


@dataclass
class PipelineConfig:
    input: str | None = None
    schema: Schema = field(default_factory=Schema)
    min_patients: int = DEFAULT_MIN_PATIENTS
    k_max: int = DEFAULT_K_MAX
    k: int | None = None
    bandwidth: float | str = AUTO
    grid_step: float = DEFAULT_GRID_STEP
    top_n: int = DEFAULT_TOP_N
    output_dir: str = "agesig-out"
    emit_svg: bool = True
    synth: PopulationSpec | None = None

    def validate(self) -> None:
        if self.input is None and self.synth is None:
            raise ValueError("either an input file or a synthetic population spec is required")
        if self.min_patients < 1:
            raise ValueError("min_patients must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be positive")
        if self.k is not None and not 1 <= self.k <= self.k_max:
            raise ValueError(f"k must be in [1, k_max={self.k_max}], got {self.k}")
        if self.top_n < 1:
            raise ValueError("top_n must be positive")
        if self.bandwidth != AUTO and float(self.bandwidth) <= 0:
            raise ValueError("bandwidth must be positive or 'auto'")

    def echo(self) -> dict:
        d = asdict(self)
        d["synth"] = self.synth.to_dict() if self.synth else None
        return d


@dataclass
class ClusterSummary:
    label: int
    codes: list[str]
    patient_count: int
    mean_ecdf: EcdfVector
    top_codes: list[tuple[str, int]]

    @property
    def member_count(self) -> int:
        return len(self.codes)


@dataclass
class ClusterReport:
    k: int
    selected_by: str
    labels: dict[str, int]
    clusters: list[ClusterSummary]
    manifest: dict = field(default_factory=dict)


def top_codes(cohorts: Mapping[str, Cohort | int], labels: Mapping[str, int], n: int = DEFAULT_TOP_N) -> dict[int, list[tuple[str, int]]]:
    """Per cluster, the ``n`` codes with most patients (ties by code)."""
    if n < 1:
        raise ValueError("n must be positive")
    grouped: dict[int, list[tuple[str, int]]] = {}
    for code, label in labels.items():
        c = cohorts[code]
        count = c if isinstance(c, int) else c.patient_count
        grouped.setdefault(label, []).append((code, count))
    return {label: sorted(rows, key=lambda r: (-r[1], r[0]))[:n] for label, rows in sorted(grouped.items())}


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


class _Emitter:
    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        (self.outdir / name).write_bytes(data)
        self.files[name] = _digest(data)

    def write_with(self, name: str, writer, *args) -> None:
        buf = io.StringIO()
        writer(*args, buf)
        self.write(name, buf.getvalue())


def run_pipeline(config: PipelineConfig) -> ClusterReport:
    """Run every stage and write the output directory.

    Raises :class:`PipelineError` naming the failing stage; its
    ``exit_code`` follows the CLI convention (2 input, 3 numerical).
    """
    try:
        config.validate()
    except ValueError as exc:
        raise PipelineError("config", str(exc), EXIT_USAGE) from exc

    timings: dict[str, float] = {}
    clock = time.perf_counter()

    def lap(stage: str) -> None:
        nonlocal clock
        now = time.perf_counter()
        timings[stage] = round(now - clock, 6)
        clock = now

    # ingest
    row_errors = []
    try:
        if config.synth is not None:
            records, _ = generate_population(config.synth)
        else:
            records, row_errors = read_records(config.input, config.schema)
    except (IngestError, ValueError) as exc:
        raise PipelineError("ingest", str(exc), EXIT_INPUT) from exc
    if not records:
        reason = "no records" + (f" ({len(row_errors)} malformed rows)" if row_errors else "")
        raise PipelineError("ingest", reason, EXIT_INPUT)
    log.info("ingest: %d records, %d row errors", len(records), len(row_errors))
    built = build_cohorts(records, config.min_patients)
    if not built.cohorts:
        raise PipelineError("cohorts", f"no code reaches min_patients={config.min_patients}", EXIT_INPUT)
    codes = list(built.cohorts)
    lap("ingest")

    signatures = [build_signature(built.cohorts[c]) for c in codes]
    lap("signatures")

    dendro = ward_cluster(signatures)
    lap("cluster")

    n = len(signatures)
    k_max = min(config.k_max, n)
    curve = dispersion_curve(signatures, dendro, k_max)
    if config.k is not None:
        if config.k > n:
            raise PipelineError("select", f"k={config.k} exceeds the {n} clustered codes", EXIT_NUMERIC)
        k, selected_by = config.k, "override"
    else:
        try:
            k, selected_by = select_k(curve), "elbow"
        except DegenerateElbow as exc:
            raise PipelineError("select", f"{exc}; pass an explicit k", EXIT_NUMERIC) from exc
        except ValueError as exc:
            raise PipelineError("select", f"{exc}; pass an explicit k", EXIT_NUMERIC) from exc
    curve.selected_k = k
    labels = cut_tree(dendro, k)
    lap("select")

    label_of = dict(zip(codes, labels))
    tops = top_codes(built.cohorts, label_of, config.top_n)
    ecdfs = {c: ecdf(s) for c, s in zip(codes, signatures)}
    clusters = []
    for label in range(k):
        members = [c for c in codes if label_of[c] == label]
        clusters.append(ClusterSummary(
            label,
            members,
            sum(built.cohorts[c].patient_count for c in members),
            cluster_mean_ecdf([ecdfs[c] for c in members]),
            tops[label],
        ))
    kde_curves, kde_notes = _top_code_kdes(built.cohorts, clusters, config)
    lap("density")

    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = _Emitter(outdir)
    out.write("labels.csv", _csv_text(
        [["code", "cluster", "patient_count"]]
        + [[c, label_of[c], built.cohorts[c].patient_count] for c in codes]))
    out.write("dendrogram.txt", to_text(dendro))
    out.write_with("elbow.csv", write_elbow, curve)
    for s in clusters:
        rows = [["age", "mean_ecdf", *s.codes]]
        for age in range(len(s.mean_ecdf.values)):
            rows.append([age, repr(float(s.mean_ecdf.values[age])),
                         *(repr(float(ecdfs[c].values[age])) for c in s.codes)])
        out.write(f"ecdf_cluster_{s.label}.csv", _csv_text(rows))
    out.write("top_codes.csv", _csv_text(
        [["cluster", "rank", "code", "patient_count"]]
        + [[s.label, r + 1, code, count] for s in clusters for r, (code, count) in enumerate(s.top_codes)]))
    out.write_with("signatures.csv", write_signatures, signatures)
    out.write_with("dropped.csv", write_drop_report, built.dropped)
    if kde_curves:
        grid = next(iter(kde_curves.values())).grid
        header = ["x", *(f"{code}" for code in kde_curves)]
        rows = [[repr(float(x)), *(repr(float(c.values[i])) for c in kde_curves.values())]
                for i, x in enumerate(grid)]
        out.write("kde_top_codes.csv", _csv_text([header, *rows]))
    if config.emit_svg:
        _emit_svgs(out, curve, clusters, ecdfs, kde_curves, label_of)
    lap("emit")

    manifest = {
        "tool": "agesig",
        "version": __version__,
        "config": config.echo(),
        "rng": RNG_NAME if config.synth else None,
        "counts": {
            "records": len(records),
            "row_errors": len(row_errors),
            "cohorts": len(built.cohorts),
            "dropped": len(built.dropped),
            "clustered_codes": n,
        },
        "row_error_sample": [asdict(e) for e in row_errors[:20]],
        "k_max": k_max,
        "selected_k": k,
        "selected_by": selected_by,
        "cluster_sizes": [s.member_count for s in clusters],
        "kde_notes": kde_notes,
        "timings_s": timings,
        "files": dict(sorted(out.files.items())),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return ClusterReport(k, selected_by, label_of, clusters, manifest)


def _top_code_kdes(cohorts, clusters, config):
    curves, notes = {}, []
    for s in clusters:
        if not s.top_codes:
            continue
        code = s.top_codes[0][0]
        ages = cohorts[code].ages
        try:
            curves[code] = kde(ages, config.grid_step, config.bandwidth)
        except ZeroBandwidthError:
            h = 2 * config.grid_step
            curves[code] = kde(ages, config.grid_step, h)
            notes.append(f"{code}: constant ages, bandwidth set to {h}")
    return curves, notes


def _emit_svgs(out: _Emitter, curve, clusters, ecdfs, kde_curves, label_of) -> None:
    knee = svg.Series([curve.selected_k], [float(curve.dispersion[curve.selected_k - 1])],
                      f"k = {curve.selected_k}", "#d62728", 0, markers=True)
    out.write("elbow.svg", svg.line_chart(
        [svg.Series(curve.k_values, curve.dispersion, "W(k)", "#1f77b4", markers=True), knee],
        title="Within-cluster dispersion", xlabel="k", ylabel="W(k)"))

    ages = np.arange(len(next(iter(ecdfs.values())).values))
    panels = []
    for s in clusters:
        series = [svg.Series(ages, ecdfs[c].values, color="#999999", width=0.6, opacity=0.5) for c in s.codes]
        series.append(svg.Series(ages, s.mean_ecdf.values, "cluster mean", "#d62728", 2.0))
        panels.append(svg.chart(series, title=f"Cluster {s.label} ({s.member_count} codes)",
                                xlabel="age", ylabel="ECDF", ylim=(0.0, 1.0), legend=False))
    out.write("ecdf_clusters.svg", svg.document(panels, columns=3))

    if kde_curves:
        series = [svg.Series(c.grid, c.values, f"{code} (cluster {label_of[code]})", svg.PALETTE[i % len(svg.PALETTE)])
                  for i, (code, c) in enumerate(kde_curves.items())]
        out.write("kde_top_codes.svg", svg.line_chart(series, title="Age density of the top code per cluster",
                                                      xlabel="age", ylabel="density"))

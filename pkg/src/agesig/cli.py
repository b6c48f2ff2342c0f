"""Command line interface: ``agesig {run,synth,cluster,plot}``.

Any ``run`` flag may also come from a JSON config file (``--config``) whose
keys are the flag names with dashes turned into underscores; flags given on
the command line win over the file.

Exit codes: 0 success, 1 usage error, 2 input/parse failure,
3 numerical/degenerate failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__, svg
from .density import AUTO
from .errors import AgesigError, DegenerateElbow, IngestError
from .hac import cut_tree, to_newick, to_text, ward_cluster
from .ingest import Schema, write_records
from .report import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, PipelineConfig, PipelineError, run_pipeline
from .selection import DEFAULT_K_MAX, dispersion_curve, select_k, write_elbow
from .signature import read_signatures
from .synth import PopulationSpec, default_population_spec, generate_population, metadata, split_codes, write_truth

log = logging.getLogger("agesig")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


S = argparse.SUPPRESS


def _bandwidth(text: str):
    return AUTO if text == AUTO else float(text)


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="agesig", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"agesig {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline: records -> clusters and report files")
    run.add_argument("--config", default=S, help="JSON file supplying any of these flags")
    run.add_argument("--input", "-i", default=S, help="visit-record file (csv or jsonl)")
    run.add_argument("--format", choices=["csv", "jsonl"], default=S)
    run.add_argument("--delimiter", default=S)
    run.add_argument("--patient-column", default=S)
    run.add_argument("--age-column", default=S)
    run.add_argument("--code-column", default=S)
    run.add_argument("--date-column", default=S)
    run.add_argument("--birthdate-column", default=S, help="derive ages from birthdate and visit date")
    run.add_argument("--min-patients", type=int, default=S)
    run.add_argument("--k-max", type=int, default=S)
    run.add_argument("--k", type=int, default=S, help="fixed number of clusters (skips the elbow)")
    run.add_argument("--bandwidth", type=_bandwidth, default=S, help="KDE bandwidth in years or 'auto'")
    run.add_argument("--grid-step", type=float, default=S)
    run.add_argument("--top-n", type=int, default=S)
    run.add_argument("--output-dir", "-o", default=S)
    run.add_argument("--svg", dest="svg", action="store_true", default=S)
    run.add_argument("--no-svg", dest="svg", action="store_false", default=S)
    run.add_argument("--synth-spec", default=S,
                     help="population spec JSON, or 'default', used instead of --input")
    run.add_argument("--seed", type=int, default=S, help="seed for --synth-spec")

    syn = sub.add_parser("synth", help="write a synthetic population with planted clusters")
    syn.add_argument("--spec", help="population spec JSON (default: six built-in templates)")
    syn.add_argument("--seed", type=int)
    syn.add_argument("--codes-per-cluster", type=int)
    syn.add_argument("--total-codes", type=int, help="spread this many codes over the six templates")
    syn.add_argument("--patients-per-code", type=_range, help="N or LO:HI")
    syn.add_argument("--noise", type=float)
    syn.add_argument("--mean-visits", type=float)
    syn.add_argument("--output-dir", "-o", required=True)

    clu = sub.add_parser("cluster", help="signatures.csv -> dendrogram, labels, elbow curve")
    clu.add_argument("--signatures", "-s", required=True)
    clu.add_argument("--k", type=int)
    clu.add_argument("--k-max", type=int, default=DEFAULT_K_MAX)
    clu.add_argument("--output-dir", "-o", required=True)
    clu.add_argument("--svg", action="store_true")

    plo = sub.add_parser("plot", help="delimited curve file -> SVG line chart")
    plo.add_argument("input", help="CSV whose first column is x and other columns are series")
    plo.add_argument("--output", "-o", required=True)
    plo.add_argument("--columns", help="comma-separated subset of series columns")
    plo.add_argument("--title", default="")
    plo.add_argument("--xlabel", default="")
    plo.add_argument("--ylabel", default="")
    return p


_SCHEMA_KEYS = ("format", "delimiter", "patient_column", "age_column", "code_column",
                "date_column", "birthdate_column")


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    values: dict = {}
    if hasattr(args, "config"):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    values.update({k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")})

    known = set(_SCHEMA_KEYS) | {"input", "min_patients", "k_max", "k", "bandwidth", "grid_step",
                                 "top_n", "output_dir", "svg", "synth_spec", "seed"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")

    schema_kw = {k: values[k] for k in _SCHEMA_KEYS if k in values}
    if schema_kw.get("birthdate_column") and "age_column" not in schema_kw:
        schema_kw["age_column"] = None
    try:
        schema = Schema(**schema_kw)
    except IngestError as exc:
        raise UsageError(str(exc)) from exc

    synth = None
    spec = values.get("synth_spec")
    if spec is not None:
        synth = _load_spec(spec)
        if "seed" in values:
            synth = PopulationSpec(synth.clusters, synth.population_age_profile, values["seed"],
                                   synth.noise_level, synth.mean_visits)
    elif "input" not in values:
        raise UsageError("run needs --input or --synth-spec")

    cfg = PipelineConfig(input=values.get("input"), schema=schema, synth=synth)
    for key in ("min_patients", "k_max", "k", "bandwidth", "grid_step", "top_n", "output_dir"):
        if key in values:
            setattr(cfg, key, values[key])
    if "svg" in values:
        cfg.emit_svg = bool(values["svg"])
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _load_spec(spec) -> PopulationSpec:
    if isinstance(spec, dict):
        return PopulationSpec.from_dict(spec)
    if spec == "default":
        return default_population_spec()
    try:
        return PopulationSpec.from_dict(json.loads(Path(spec).read_text()))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read population spec {spec}: {exc}") from exc


def cmd_run(args) -> int:
    report = run_pipeline(config_from_args(args))
    print(f"k = {report.k} ({report.selected_by}); {len(report.labels)} codes clustered")
    for s in report.clusters:
        tops = ", ".join(f"{c} ({n})" for c, n in s.top_codes)
        print(f"  cluster {s.label}: {s.member_count} codes, {s.patient_count} patients; top: {tops}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.spec:
        spec = _load_spec(args.spec)
        if args.seed is not None:
            spec = PopulationSpec(spec.clusters, spec.population_age_profile, args.seed,
                                  spec.noise_level, spec.mean_visits)
    else:
        kw = {}
        if args.seed is not None:
            kw["seed"] = args.seed
        if args.total_codes is not None:
            kw["codes_per_cluster"] = split_codes(args.total_codes)
        elif args.codes_per_cluster is not None:
            kw["codes_per_cluster"] = args.codes_per_cluster
        if args.patients_per_code is not None:
            kw["patients_per_code"] = args.patients_per_code
        if args.noise is not None:
            kw["noise_level"] = args.noise
        if args.mean_visits is not None:
            kw["mean_visits"] = args.mean_visits
        spec = default_population_spec(**kw)
    try:
        records, truth = generate_population(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.csv", "w", newline="") as fh:
        write_records(records, fh)
    with open(out / "truth.csv", "w", newline="") as fh:
        write_truth(truth, fh)
    (out / "synth_meta.json").write_text(metadata(spec))
    print(f"wrote {len(records)} visit records for {len(truth.cluster_of)} codes to {out}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    try:
        with open(args.signatures, newline="") as fh:
            sigs = read_signatures(fh)
    except (OSError, ValueError) as exc:
        raise PipelineError("ingest", str(exc), EXIT_INPUT) from exc
    if not sigs:
        raise PipelineError("ingest", "no signatures", EXIT_INPUT)
    dendro = ward_cluster(sigs)
    n = len(sigs)
    if args.k is not None and not 1 <= args.k <= n:
        raise UsageError(f"--k must be in [1, {n}]")
    curve = dispersion_curve(sigs, dendro, min(args.k_max, n))
    if args.k is not None:
        k = args.k
    else:
        try:
            k = select_k(curve)
        except (DegenerateElbow, ValueError) as exc:
            raise PipelineError("select", f"{exc}; pass --k", EXIT_NUMERIC) from exc
    curve.selected_k = k
    labels = cut_tree(dendro, k)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "dendrogram.txt").write_text(to_text(dendro))
    (out / "dendrogram.nwk").write_text(to_newick(dendro) + "\n")
    with open(out / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "cluster"])
        w.writerows(zip((s.code for s in sigs), labels))
    with open(out / "elbow.csv", "w", newline="") as fh:
        write_elbow(curve, fh)
    if args.svg:
        (out / "elbow.svg").write_text(svg.line_chart(
            [svg.Series(curve.k_values, curve.dispersion, "W(k)", markers=True)],
            title="Within-cluster dispersion", xlabel="k", ylabel="W(k)"))
    print(f"k = {k}; {n} codes")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        with open(args.input, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise PipelineError("plot", str(exc), EXIT_INPUT) from exc
    if len(rows) < 2 or len(rows[0]) < 2:
        raise PipelineError("plot", "need a header and at least one x,y row", EXIT_INPUT)
    header, body = rows[0], rows[1:]
    wanted = args.columns.split(",") if args.columns else header[1:]
    missing = [c for c in wanted if c not in header]
    if missing:
        raise UsageError(f"columns not in {args.input}: {', '.join(missing)}")
    try:
        x = [float(r[0]) for r in body]
        series = []
        for i, name in enumerate(wanted):
            col = header.index(name)
            series.append(svg.Series(x, [float(r[col]) for r in body], name, svg.PALETTE[i % len(svg.PALETTE)]))
    except (ValueError, IndexError) as exc:
        raise PipelineError("plot", f"non-numeric or short row: {exc}", EXIT_INPUT) from exc
    Path(args.output).write_text(svg.line_chart(
        series, title=args.title, xlabel=args.xlabel or header[0], ylabel=args.ylabel,
        legend=len(series) <= 12))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "synth": cmd_synth, "cluster": cmd_cluster, "plot": cmd_plot}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"agesig {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"agesig: {exc}", file=sys.stderr)
        return exc.exit_code
    except IngestError as exc:
        print(f"agesig: ingest: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AgesigError as exc:
        print(f"agesig: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

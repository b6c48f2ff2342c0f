"""Age-density signatures of ICD-10 codes and their Ward clustering."""

__version__ = "0.1.0"

from .density import cluster_mean_ecdf, ecdf, kde  # noqa: E402
from .hac import cut_tree, naive_ward_oracle, ward_cluster  # noqa: E402
from .ingest import build_cohorts, normalize_code, parse_records  # noqa: E402
from .selection import dispersion_curve, select_k  # noqa: E402
from .signature import build_signature, signature_distance  # noqa: E402
from .synth import adjusted_rand_index, default_population_spec, generate_population  # noqa: E402

__all__ = [
    "adjusted_rand_index",
    "build_cohorts",
    "build_signature",
    "cluster_mean_ecdf",
    "cut_tree",
    "default_population_spec",
    "dispersion_curve",
    "ecdf",
    "generate_population",
    "kde",
    "naive_ward_oracle",
    "normalize_code",
    "parse_records",
    "select_k",
    "signature_distance",
    "ward_cluster",
]

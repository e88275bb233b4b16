"""Random generator of synthetic causal benchmarks.

Sample structural causal models from a declarative space of interest, draw
observational data, sample ATE/CATE/Ctf-TE queries with Monte-Carlo ground
truths, characterize the models, and verify them statistically.
"""

__version__ = "0.1.0"

from .errors import ScmBenchError  # noqa: E402
from .soi import SpaceOfInterest, parse_soi, soi_from_mapping  # noqa: E402
from .scm import Scm, forward_sample, forward_sample_with_do, sample_scm  # noqa: E402
from .queries import GroundTruth, Query, estimate_ate, estimate_cate, estimate_ctf_te, generate_queries  # noqa: E402
from .dataset import CausalDataset, generate_dataset  # noqa: E402

__all__ = [
    "__version__",
    "ScmBenchError",
    "SpaceOfInterest",
    "parse_soi",
    "soi_from_mapping",
    "Scm",
    "sample_scm",
    "forward_sample",
    "forward_sample_with_do",
    "Query",
    "GroundTruth",
    "estimate_ate",
    "estimate_cate",
    "estimate_ctf_te",
    "generate_queries",
    "CausalDataset",
    "generate_dataset",
]

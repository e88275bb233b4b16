"""End-to-end generation of one causal dataset per SCM and its on-disk layout.

Every random draw is keyed by ``(master_seed, purpose, scm_index, ...)`` so a
dataset can be regenerated in isolation and in any order.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .analysis import DEFAULT_PROBE_SAMPLES, METRIC_NAMES, AssumptionReport, analyze
from .graph import Admg
from .queries import DEFAULT_ESTIMATION_SAMPLES, QueryRecord, generate_queries
from .rng import stream
from .scm import DataMatrix, Scm, data_to_csv, forward_sample, sample_scm
from .soi import SCHEMA_VERSION, SpaceOfInterest, soi_hash


@dataclass(frozen=True)
class GenerationOptions:
    n_estimation: int = DEFAULT_ESTIMATION_SAMPLES
    probe_samples: int = DEFAULT_PROBE_SAMPLES
    analyze: bool = True


@dataclass
class CausalDataset:
    """Queries with ground truths, observed data, projected graph and assumptions."""

    index: int
    scm: Scm
    data: DataMatrix
    queries: list[QueryRecord]
    projected: Admg
    metrics: dict[str, float] | None = None
    assumptions: AssumptionReport | None = None
    provenance: dict = field(default_factory=dict)


def generate_dataset(
    soi: SpaceOfInterest,
    master_seed: int,
    index: int,
    options: GenerationOptions = GenerationOptions(),
) -> CausalDataset:
    provenance = {
        "soi_hash": soi_hash(soi),
        "master_seed": master_seed,
        "scm_index": index,
        "schema_version": SCHEMA_VERSION,
    }
    scm = sample_scm(soi, stream(master_seed, "scm", index), provenance)
    data = forward_sample(scm, soi.num_samples, stream(master_seed, "data", index))
    queries = generate_queries(scm, soi, master_seed, index, options.n_estimation)
    metrics = assumptions = None
    if options.analyze:
        metrics, assumptions = analyze(scm, options.probe_samples, stream(master_seed, "analysis", index))
    return CausalDataset(index, scm, data, queries, scm.projected(), metrics, assumptions, provenance)


# -- serialization helpers ---------------------------------------------------------

def json_safe(value):
    """Replace non-finite floats by ``None`` so output is strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def dumps(doc) -> str:
    return json.dumps(json_safe(doc), indent=1, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def queries_jsonl(records: list[QueryRecord], discrete: bool, with_truth: bool = True) -> str:
    lines = [json.dumps(json_safe(r.to_json(k, discrete, with_truth)), allow_nan=False) for k, r in enumerate(records)]
    return "".join(line + "\n" for line in lines)


def scm_manifest(ds: CausalDataset) -> dict:
    return {"tool_version": __version__, **ds.provenance}


def write_dataset_dir(ds: CausalDataset, path: Path, include_queries: bool = True) -> None:
    """Write ``data.csv``, ``graph.json``, ``queries.jsonl``, ``scm.json``, ``metrics.json``, ``manifest.json``."""
    path = Path(path)
    disc = ds.scm.discrete
    write_atomic(path / "data.csv", data_to_csv(ds.data.observed_matrix, ds.scm.observed, disc))
    write_atomic(path / "graph.json", dumps(ds.projected.to_json()))
    if include_queries:
        write_atomic(path / "queries.jsonl", queries_jsonl(ds.queries, disc))
    write_atomic(path / "scm.json", ds.scm.dumps() + "\n")
    if ds.metrics is not None:
        doc = {"metrics": ds.metrics, "assumptions": ds.assumptions.to_json()}
        write_atomic(path / "metrics.json", dumps(doc))
    write_atomic(path / "manifest.json", dumps(scm_manifest(ds)))


def metrics_csv(rows: list[tuple[str, dict]]) -> str:
    """CSV with one row per SCM and one column per metric; NaN is written empty."""
    lines = [",".join(["scm", *METRIC_NAMES])]
    for name, metrics in rows:
        vals = []
        for k in METRIC_NAMES:
            v = metrics.get(k)
            vals.append("" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v)))
        lines.append(",".join([name, *vals]))
    return "\n".join(lines) + "\n"

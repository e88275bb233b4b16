"""Drive external estimators over generated benchmarks and aggregate their errors.

Estimators run as subprocesses.  For each SCM the harness prepares a work
directory holding ``data.csv``, ``graph.json`` (the projected graph) and
``queries.jsonl`` without ground truths, then runs ``<command...> <workdir>``.
The estimator must write ``estimates.jsonl`` (``{"id", "estimate"}`` per line)
and exit 0.  A non-zero exit, a timeout, a missing or non-finite estimate or a
malformed file all count as failed query slots.
"""

from __future__ import annotations

import csv
import io
import json
import math
import shutil
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import GenerationOptions, dumps, generate_dataset, queries_jsonl, write_atomic
from .errors import EstimatorNotFound, ProtocolError
from .scm import data_to_csv
from .soi import SpaceOfInterest

DEFAULT_TIMEOUT = 600.0


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    command: tuple[str, ...]
    timeout: float = DEFAULT_TIMEOUT

    @classmethod
    def builtin(cls, method: str, timeout: float = DEFAULT_TIMEOUT) -> "EstimatorSpec":
        return cls(method, (sys.executable, "-m", "scmbench.estimators", method), timeout)

    def resolve(self) -> None:
        if not self.command:
            raise EstimatorNotFound("empty estimator command")
        exe = self.command[0]
        if shutil.which(exe) is None and not Path(exe).is_file():
            raise EstimatorNotFound(f"estimator command {exe!r} not found")


@dataclass
class QueryResult:
    soi: str
    seed: int
    scm: int
    query: int
    kind: str
    truth: float
    estimate: float | None
    failed: bool
    reason: str = ""
    runtime: float = 0.0

    @property
    def error(self) -> float:
        return float("nan") if self.failed else self.estimate - self.truth

    @property
    def abs_error(self) -> float:
        return abs(self.error)

    @property
    def sq_error(self) -> float:
        return self.error**2


RECORD_FIELDS = ("soi", "seed", "scm", "query", "kind", "truth", "estimate", "error", "abs_error", "sq_error", "failed", "reason", "runtime")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return "" if v is None else str(v)


def records_csv(records: Sequence[QueryResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        w.writerow([_fmt(getattr(r, f)) for f in RECORD_FIELDS])
    return buf.getvalue()


def read_records_csv(text: str) -> list[QueryResult]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            QueryResult(
                soi=row["soi"],
                seed=int(row["seed"]),
                scm=int(row["scm"]),
                query=int(row["query"]),
                kind=row["kind"],
                truth=float(row["truth"]) if row["truth"] else float("nan"),
                estimate=float(row["estimate"]) if row["estimate"] else None,
                failed=row["failed"] == "1",
                reason=row["reason"],
                runtime=float(row["runtime"]),
            )
        )
    return out


def aggregate(records: Sequence[QueryResult], runtimes: Sequence[float] | None = None) -> dict:
    """Error moments over successful slots (squared error) plus failure rate and runtime."""
    total = len(records)
    ok = [r for r in records if not r.failed]
    sq = np.array([r.sq_error for r in ok], dtype=float)
    ab = np.array([r.abs_error for r in ok], dtype=float)
    if runtimes is None:
        per_scm = {}
        for r in records:
            per_scm[(r.soi, r.seed, r.scm)] = r.runtime
        runtimes = list(per_scm.values())
    rt = np.asarray(runtimes, dtype=float)
    nan = float("nan")
    return {
        "n_queries": total,
        "n_failed": total - len(ok),
        "failure_rate": (total - len(ok)) / total if total else nan,
        "mean_error": float(sq.mean()) if sq.size else nan,
        "std_error": float(sq.std()) if sq.size else nan,
        "max_error": float(sq.max()) if sq.size else nan,
        "min_error": float(sq.min()) if sq.size else nan,
        "mean_abs_error": float(ab.mean()) if ab.size else nan,
        "runtime_mean": float(rt.mean()) if rt.size else nan,
        "runtime_std": float(rt.std()) if rt.size else nan,
        "runtime_total": float(rt.sum()) if rt.size else 0.0,
    }


@dataclass
class EvaluationRun:
    estimator: str
    soi_names: list[str]
    seeds: list[int]
    num_scms: int
    records: list[QueryResult] = field(default_factory=list)

    def summary(self) -> dict:
        per_soi = {}
        for name in self.soi_names:
            recs = [r for r in self.records if r.soi == name]
            per_seed = {str(s): aggregate([r for r in recs if r.seed == s]) for s in self.seeds}
            per_soi[name] = {"overall": aggregate(recs), "per_seed": per_seed}
        return {
            "estimator": self.estimator,
            "sois": self.soi_names,
            "seeds": self.seeds,
            "num_scms": self.num_scms,
            "overall": aggregate(self.records),
            "per_soi": per_soi,
        }


def prepare_workdir(ds, path: Path, expose_ground_truth: bool) -> None:
    disc = ds.scm.discrete
    write_atomic(path / "data.csv", data_to_csv(ds.data.observed_matrix, ds.scm.observed, disc))
    write_atomic(path / "graph.json", dumps(ds.projected.to_json()))
    write_atomic(path / "queries.jsonl", queries_jsonl(ds.queries, disc, with_truth=False))
    if expose_ground_truth:
        lines = [json.dumps({"id": k, "ground_truth": r.truth.value}) for k, r in enumerate(ds.queries)]
        write_atomic(path / "ground_truth.jsonl", "".join(line + "\n" for line in lines))


def parse_estimates(text: str) -> dict[int, float]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            qid, val = int(doc["id"]), doc["estimate"]
            out[qid] = float("nan") if val is None else float(val)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"estimates.jsonl line {n}: {exc}") from None
    return out


def _run_one(args) -> list[QueryResult]:
    soi_name, soi, seed, index, estimator, root, expose, n_estimation = args
    ds = generate_dataset(soi, seed, index, GenerationOptions(n_estimation=n_estimation, analyze=False))
    work = Path(root) / soi_name / f"seed_{seed}" / f"scm_{index}"
    prepare_workdir(ds, work, expose)
    start = time.perf_counter()
    reason = ""
    estimates: dict[int, float] = {}
    try:
        proc = subprocess.run(
            [*estimator.command, str(work)], capture_output=True, text=True, timeout=estimator.timeout
        )
        if proc.returncode != 0:
            reason = f"exit status {proc.returncode}"
        else:
            est_path = work / "estimates.jsonl"
            if not est_path.exists():
                reason = "no estimates.jsonl"
            else:
                estimates = parse_estimates(est_path.read_text())
    except subprocess.TimeoutExpired:
        reason = "timeout"
    except ProtocolError as exc:
        reason = f"protocol: {exc}"
    except OSError as exc:
        reason = f"exception: {exc}"
    runtime = time.perf_counter() - start
    out = []
    for k, rec in enumerate(ds.queries):
        est = estimates.get(k)
        why = reason or ("missing estimate" if est is None else "")
        if not why and not math.isfinite(est):
            why = "non-finite estimate"
        out.append(
            QueryResult(soi_name, seed, index, k, rec.query.kind.value, rec.truth.value, est, bool(why), why, runtime)
        )
    return out


def run_evaluation(
    sois: Sequence[tuple[str, SpaceOfInterest]],
    seeds: Sequence[int],
    num_scms: int,
    estimator: EstimatorSpec,
    workdir: Path,
    expose_ground_truth: bool = False,
    n_estimation: int = 10_000,
    jobs: int = 1,
) -> EvaluationRun:
    estimator.resolve()
    tasks = [
        (name, soi, seed, k, estimator, str(workdir), expose_ground_truth, n_estimation)
        for name, soi in sois
        for seed in seeds
        for k in range(num_scms)
    ]
    run = EvaluationRun(estimator.name, [n for n, _ in sois], list(seeds), num_scms)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    for res in results:
        run.records.extend(res)
    return run


def write_run(run: EvaluationRun, out: Path) -> None:
    write_atomic(Path(out) / "results.json", dumps(run.summary()))
    write_atomic(Path(out) / "records.csv", records_csv(run.records))

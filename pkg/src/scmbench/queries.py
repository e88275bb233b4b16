"""Causal queries (ATE, CATE, Ctf-TE) and their Monte-Carlo ground truths."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import EmptyPosterior, NodeNotFound, ParamError, QueryResamplingError, TooFewObserved, ValidationError
from .rng import stream
from .scm import Scm, abduct
from .soi import CtfTeForm, KernelKind, KernelSpec, QueryType, SpaceOfInterest

DEFAULT_ESTIMATION_SAMPLES = 10_000
RETRY_CAP = 100
MIN_SUPPORT_SIZE = 100_000


# -- kernels -------------------------------------------------------------------

def _gaussian(diff: np.ndarray, h: float) -> np.ndarray:
    return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * h * h))


def _epsilon(diff: np.ndarray, h: float) -> np.ndarray:
    return (np.max(np.abs(diff), axis=-1) <= h).astype(float)


KERNELS: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    KernelKind.GAUSSIAN.value: _gaussian,
    KernelKind.EPSILON.value: _epsilon,
}


def register_kernel(name: str, fn: Callable[[np.ndarray, float], np.ndarray]) -> None:
    """Add a kernel; ``fn(diff, h)`` maps ``(..., k)`` differences to ``(...)`` weights."""
    KERNELS[name] = fn


def kernel_weight(kind, diff, h: float):
    """Weight of a difference vector; a 2-D ``diff`` gives one weight per row."""
    if not h > 0:
        raise ParamError(f"bandwidth must be > 0, got {h}")
    name = kind.value if isinstance(kind, KernelKind) else str(kind)
    if name not in KERNELS:
        try:
            name = KernelKind.parse(name, "kernel").value
        except ValidationError:
            pass
    if name not in KERNELS:
        raise ParamError(f"unknown kernel {name!r}")
    d = np.asarray(diff, dtype=float)
    scalar = d.ndim <= 1
    w = KERNELS[name](np.atleast_2d(d.reshape(1, -1) if scalar else d), float(h))
    return float(w[0]) if scalar else w


# -- query types ---------------------------------------------------------------------

@dataclass(frozen=True)
class Query:
    kind: QueryType
    T: int
    Y: int
    t: float
    c: float
    X: tuple[int, ...] = ()
    x: tuple[float, ...] = ()
    V_F: tuple[int, ...] = ()
    v_F: tuple[float, ...] = ()
    y: float | None = None  # outcome value for probability-form Ctf-TE

    def __post_init__(self):
        if len(self.X) != len(self.x) or len(self.V_F) != len(self.v_F):
            raise ValidationError("conditioning variables and values differ in length")
        if self.kind is not QueryType.CATE and self.X:
            raise ValidationError("only CATE queries carry covariates")
        if self.kind is not QueryType.CTF_TE and (self.V_F or self.y is not None):
            raise ValidationError("only Ctf-TE queries carry factual evidence")

    def to_json(self, discrete: bool) -> dict:
        val = (lambda v: int(v)) if discrete else (lambda v: float(v))
        doc = {"kind": self.kind.value, "T": self.T, "Y": self.Y}
        if self.kind is QueryType.CATE:
            doc["X"] = list(self.X)
        if self.kind is QueryType.CTF_TE:
            doc["V_F"] = list(self.V_F)
        doc["t"], doc["c"] = val(self.t), val(self.c)
        if self.kind is QueryType.CATE:
            doc["x"] = [val(v) for v in self.x]
        if self.kind is QueryType.CTF_TE:
            doc["v_F"] = [val(v) for v in self.v_F]
            if self.y is not None:
                doc["y"] = val(self.y)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "Query":
        kind = QueryType.parse(doc["kind"], "kind")
        return cls(
            kind,
            int(doc["T"]),
            int(doc["Y"]),
            doc["t"],
            doc["c"],
            tuple(int(v) for v in doc.get("X", ()) or ()),
            tuple(doc.get("x", ()) or ()),
            tuple(int(v) for v in doc.get("V_F", ()) or ()),
            tuple(doc.get("v_F", ()) or ()),
            doc.get("y"),
        )


@dataclass(frozen=True)
class GroundTruth:
    value: float
    n_estimation: int
    posterior_size: int | None = None

    @property
    def nan(self) -> bool:
        return math.isnan(self.value)


def validate_query(q: Query, scm: Scm) -> Query:
    observed = set(scm.observed)
    for v in (q.T, q.Y, *q.X, *q.V_F):
        if v not in observed:
            raise NodeNotFound(f"query variable {v} is not an observed node")
    if set(q.X) & {q.T, q.Y}:
        raise ValidationError("covariates must exclude T and Y")
    if len(set(q.X)) != len(q.X) or len(set(q.V_F)) != len(q.V_F):
        raise ValidationError("duplicate conditioning variables")
    if scm.discrete:
        for v, val in [(q.T, q.t), (q.T, q.c), *zip(q.X, q.x), *zip(q.V_F, q.v_F)] + (
            [(q.Y, q.y)] if q.y is not None else []
        ):
            if float(val) != int(val) or not 0 <= int(val) < scm.cardinalities[v]:
                raise ValidationError(f"value {val!r} outside the domain of node {v}")
    return q


# -- realizable support ---------------------------------------------------------------

@dataclass(frozen=True)
class SupportData:
    """A large observational dataset used only to pick realizable query values.

    Rows are never materialised: row ``r`` is the forward evaluation of the
    noise drawn from ``stream(master_seed, "support", scm_index, r)``, so the
    dataset is fixed by its seed but costs nothing until a row is read.
    """

    scm: Scm
    master_seed: int
    scm_index: int
    size: int = MIN_SUPPORT_SIZE

    @classmethod
    def for_soi(cls, scm: Scm, soi: SpaceOfInterest, master_seed: int, scm_index: int) -> "SupportData":
        return cls(scm, master_seed, scm_index, max(MIN_SUPPORT_SIZE, 100 * soi.num_samples))

    def row(self, r: int) -> np.ndarray:
        if not 0 <= r < self.size:
            raise IndexError(r)
        u = self.scm.draw_noise(1, stream(self.master_seed, "support", self.scm_index, r))
        return self.scm.evaluate(u)[0]

    def sample_row(self, rng: np.random.Generator) -> np.ndarray:
        return self.row(int(rng.integers(self.size)))


def _pyval(v, discrete: bool):
    return int(v) if discrete else float(v)


def sample_query(
    kind: QueryType,
    scm: Scm,
    support: SupportData,
    rng: np.random.Generator,
    probability_form: bool = False,
) -> Query:
    obs = list(scm.observed)
    need = 3 if kind is QueryType.CATE else 2
    if len(obs) < need:
        raise TooFewObserved(f"{kind.value} queries need at least {need} observed nodes, have {len(obs)}")
    disc = scm.discrete
    T = obs[int(rng.integers(len(obs)))]
    Y = obs[int(rng.integers(len(obs)))]
    t = _pyval(support.sample_row(rng)[T], disc)
    c = _pyval(support.sample_row(rng)[T], disc)
    if kind is QueryType.ATE:
        return Query(kind, T, Y, t, c)
    if kind is QueryType.CATE:
        rest = [v for v in obs if v not in (T, Y)]
        k = int(rng.integers(1, len(rest) + 1)) if T == Y else int(rng.integers(1, len(obs) - 1))
        X = tuple(sorted(int(v) for v in rng.choice(rest, size=k, replace=False)))
        row = support.sample_row(rng)
        return Query(kind, T, Y, t, c, X=X, x=tuple(_pyval(row[v], disc) for v in X))
    k = int(rng.integers(1, len(obs) + 1))
    V_F = tuple(sorted(int(v) for v in rng.choice(obs, size=k, replace=False)))
    row = support.sample_row(rng)
    y = None
    if probability_form:
        y = _pyval(support.sample_row(rng)[Y], disc)
    return Query(kind, T, Y, t, c, V_F=V_F, v_F=tuple(_pyval(row[v], disc) for v in V_F), y=y)


# -- ground truth ---------------------------------------------------------------------

def _noise_for(scm: Scm, q: Query, n: int, rng: np.random.Generator) -> np.ndarray:
    # only the ancestors of the quantities the estimate reads are drawn
    return scm.draw_noise(n, rng, scm.closure([q.Y, *q.X, *q.V_F]))


def _outcome(q: Query, y: np.ndarray) -> np.ndarray:
    return (y == q.y).astype(float) if q.y is not None else y.astype(float)


def _mean(values: np.ndarray, w: np.ndarray | None = None) -> float:
    if w is None:
        return float(np.mean(values))
    return float(np.dot(w, values) / np.sum(w))


def estimate_ate(scm: Scm, q: Query, n: int, rng: np.random.Generator) -> GroundTruth:
    if q.kind is not QueryType.ATE:
        raise ParamError(f"expected an ATE query, got {q.kind.value}")
    u = _noise_for(scm, q, n, rng)
    yt = scm.evaluate(u, {q.T: q.t}, [q.Y])[:, q.Y]
    yc = scm.evaluate(u, {q.T: q.c}, [q.Y])[:, q.Y]
    return GroundTruth(_mean(_outcome(q, yt)) - _mean(_outcome(q, yc)), n)


def _stratum(scm: Scm, data: np.ndarray, q: Query, kernel: KernelSpec) -> np.ndarray | None:
    """Row weights of the ``X = x`` stratum (``None`` when it is empty)."""
    cols = data[:, list(q.X)]
    target = np.asarray(q.x, dtype=cols.dtype if scm.discrete else float)
    if scm.discrete:
        w = np.all(cols == target, axis=1).astype(float)
    else:
        w = kernel_weight(kernel.kind, cols - target, kernel.bandwidth)
    return w if w.sum() > 0 else None


def estimate_cate(
    scm: Scm, q: Query, n: int, kernel: KernelSpec, rng: np.random.Generator
) -> GroundTruth:
    if q.kind is not QueryType.CATE:
        raise ParamError(f"expected a CATE query, got {q.kind.value}")
    u = _noise_for(scm, q, n, rng)
    targets = [q.Y, *q.X]
    dt = scm.evaluate(u, {q.T: q.t}, targets)
    dc = scm.evaluate(u, {q.T: q.c}, targets)
    wt, wc = _stratum(scm, dt, q, kernel), _stratum(scm, dc, q, kernel)
    if wt is None or wc is None:
        return GroundTruth(float("nan"), n)
    return GroundTruth(_mean(_outcome(q, dt[:, q.Y]), wt) - _mean(_outcome(q, dc[:, q.Y]), wc), n)


def estimate_ctf_te(
    scm: Scm, q: Query, n: int, kernel: KernelSpec, rng: np.random.Generator
) -> GroundTruth:
    if q.kind is not QueryType.CTF_TE:
        raise ParamError(f"expected a Ctf-TE query, got {q.kind.value}")
    u = _noise_for(scm, q, n, rng)
    if q.V_F:
        factual = scm.evaluate(u, None, q.V_F)
        try:
            idx, w = abduct(scm, factual, dict(zip(q.V_F, q.v_F)), kernel)
        except EmptyPosterior:
            return GroundTruth(float("nan"), n, 0)
        u = u[idx]
    else:
        w = None
    yt = scm.evaluate(u, {q.T: q.t}, [q.Y])[:, q.Y]
    yc = scm.evaluate(u, {q.T: q.c}, [q.Y])[:, q.Y]
    if w is not None and np.all(w == w[0]):
        w = None  # uniform posterior: plain mean keeps the empty-evidence case bit-identical to ATE
    return GroundTruth(_mean(_outcome(q, yt), w) - _mean(_outcome(q, yc), w), n, u.shape[0])


def estimate(scm: Scm, q: Query, n: int, kernel: KernelSpec, rng: np.random.Generator) -> GroundTruth:
    if q.kind is QueryType.ATE:
        return estimate_ate(scm, q, n, rng)
    if q.kind is QueryType.CATE:
        return estimate_cate(scm, q, n, kernel, rng)
    return estimate_ctf_te(scm, q, n, kernel, rng)


# -- per-SCM query generation -------------------------------------------------------------

@dataclass
class QueryRecord:
    query: Query
    truth: GroundTruth
    attempts: int = 1

    def to_json(self, qid: int, discrete: bool, with_truth: bool = True) -> dict:
        doc = {"id": qid, **self.query.to_json(discrete)}
        if with_truth:
            doc["ground_truth"] = None if self.truth.nan else self.truth.value
        doc["n_estimation"] = self.truth.n_estimation
        doc["nan"] = self.truth.nan
        return doc


def generate_queries(
    scm: Scm,
    soi: SpaceOfInterest,
    master_seed: int,
    scm_index: int,
    n_estimation: int = DEFAULT_ESTIMATION_SAMPLES,
    support: SupportData | None = None,
) -> list[QueryRecord]:
    """Sample ``queries_per_scm`` queries (or take the specific ones) with ground truths."""
    if soi.disable_queries:
        return []
    prob = soi.ctf_te_form is CtfTeForm.PROBABILITY
    records = []
    if soi.specific_queries:
        for k, spec in enumerate(soi.specific_queries):
            q = Query.from_json(spec)
            if prob and q.kind is QueryType.CTF_TE and q.y is None:
                raise ValidationError("probability-form Ctf-TE queries need an outcome value y", f"specific_queries[{k}]")
            q = validate_query(q, scm)
            truth = estimate(scm, q, n_estimation, soi.kernel, stream(master_seed, "truth", scm_index, k, 0))
            records.append(QueryRecord(q, truth))
        return records
    support = support or SupportData.for_soi(scm, soi, master_seed, scm_index)
    for k in range(soi.queries_per_scm):
        for attempt in range(RETRY_CAP):
            q = sample_query(soi.query_type, scm, support, stream(master_seed, "query", scm_index, k, attempt), prob)
            truth = estimate(scm, q, n_estimation, soi.kernel, stream(master_seed, "truth", scm_index, k, attempt))
            if soi.allow_nan_queries or not truth.nan:
                records.append(QueryRecord(q, truth, attempt + 1))
                break
        else:
            raise QueryResamplingError(
                f"SCM {scm_index}: query slot {k} gave NaN ground truths {RETRY_CAP} times in a row"
            )
    return records

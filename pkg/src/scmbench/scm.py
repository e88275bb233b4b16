"""Structural causal models: assembly, forward simulation, interventions, abduction."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import EmptyPosterior, InfeasibleError, NodeNotFound, ParamError
from .expr import resolve_count, resolve_expr
from .graph import Admg, CausalGraph, assign_hidden, latent_project, sample_dag
from .mechanisms import (
    DEFAULT_TABLE_BUDGET,
    Mechanism,
    NoiseSpec,
    RegionalMechanism,
    mechanism_from_json,
    sample_continuous_mechanism,
    sample_noise,
    sample_regional,
)
from .soi import SCHEMA_VERSION, MechanismFamily, SpaceOfInterest


@dataclass(frozen=True, eq=False)
class Scm:
    """A fully specified SCM over nodes ``0..N-1`` (index order is topological).

    ``cardinalities`` is ``None`` for continuous models.  ``provenance`` carries
    the SoI hash, master seed and SCM index when the model came from a sampler.
    """

    graph: CausalGraph
    mechanisms: tuple[Mechanism, ...]
    noises: tuple[NoiseSpec, ...]
    cardinalities: tuple[int, ...] | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        g = self.graph
        if len(self.mechanisms) != g.n or len(self.noises) != g.n:
            raise ParamError("need one mechanism and one noise law per node")
        for i, f in enumerate(self.mechanisms):
            if f.n_parents != len(g.parents[i]):
                raise ParamError(f"node {i}: mechanism arity {f.n_parents} != {len(g.parents[i])} parents")
        if self.cardinalities is not None:
            if len(self.cardinalities) != g.n:
                raise ParamError("need one cardinality per node")
            for i, f in enumerate(self.mechanisms):
                if not isinstance(f, RegionalMechanism):
                    raise ParamError(f"node {i}: discrete models need tabular mechanisms")
                cards = tuple(self.cardinalities[j] for j in g.parents[i])
                if f.parent_cards != cards or f.cardinality != self.cardinalities[i]:
                    raise ParamError(f"node {i}: table domains do not match the cardinalities")
                lo, hi = self.noises[i].support()
                if (f.boundaries[0], f.boundaries[-1]) != (lo, hi):
                    raise ParamError(f"node {i}: region boundaries do not span the noise support")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def discrete(self) -> bool:
        return self.cardinalities is not None

    @property
    def observed(self) -> tuple[int, ...]:
        return self.graph.observed

    @property
    def dtype(self):
        return np.int64 if self.discrete else np.float64

    def projected(self) -> Admg:
        return latent_project(self.graph)

    def _check(self, nodes: Iterable[int]) -> list[int]:
        out = []
        for v in nodes:
            if not (isinstance(v, (int, np.integer)) and 0 <= v < self.n):
                raise NodeNotFound(v)
            out.append(int(v))
        return out

    def closure(self, targets: Iterable[int], cut: Iterable[int] = ()) -> list[int]:
        """Nodes whose values are needed to compute ``targets`` when ``cut`` is intervened on."""
        cut = set(self._check(cut))
        need = set()
        stack = list(self._check(targets))
        while stack:
            v = stack.pop()
            if v in need:
                continue
            need.add(v)
            if v not in cut:
                stack.extend(self.graph.parents[v])
        return sorted(need)

    def draw_noise(self, n: int, rng: np.random.Generator, nodes: Iterable[int] | None = None) -> np.ndarray:
        """Noise matrix of shape ``(n, N)``; columns outside ``nodes`` are NaN.

        Columns are drawn in ascending node order from the single stream ``rng``.
        """
        u = np.full((n, self.n), np.nan, order="F")
        cols = range(self.n) if nodes is None else sorted(set(self._check(nodes)))
        for v in cols:
            u[:, v] = sample_noise(self.noises[v], n, rng)
        return u

    def evaluate(
        self,
        noise: np.ndarray,
        do: Mapping[int, object] | None = None,
        targets: Iterable[int] | None = None,
    ) -> np.ndarray:
        """Evaluate the model on a fixed noise matrix.

        ``do`` maps nodes to intervention values; a value may be a scalar or a
        length-``n`` vector (one value per row).  Intervened nodes ignore their
        mechanism and noise.  When ``targets`` is given only their closure is
        computed and the other columns are left as zeros.
        """
        noise = np.asarray(noise, dtype=float)
        if noise.ndim != 2 or noise.shape[1] != self.n:
            raise ParamError(f"noise matrix must have shape (n, {self.n}), got {noise.shape}")
        do = {int(k): v for k, v in (do or {}).items()}
        self._check(do)
        rows = noise.shape[0]
        nodes = range(self.n) if targets is None else self.closure(targets, do)
        x = np.zeros((rows, self.n), dtype=self.dtype, order="F")
        for v in nodes:
            if v in do:
                val = np.asarray(do[v])
                if val.ndim and val.shape != (rows,):
                    raise ParamError(f"intervention on {v} has shape {val.shape}, expected ({rows},)")
                if self.discrete and np.any((val < 0) | (val >= self.cardinalities[v])):
                    raise ParamError(f"intervention value outside the domain of node {v}")
                x[:, v] = val
                continue
            pa = self.graph.parents[v]
            x[:, v] = self.mechanisms[v].evaluate(x[:, list(pa)], noise[:, v])
        return x

    def forward_sample(self, n: int, rng: np.random.Generator) -> "DataMatrix":
        return forward_sample(self, n, rng)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "provenance": dict(self.provenance),
            "graph": self.graph.to_json(),
            "cardinalities": None if self.cardinalities is None else list(self.cardinalities),
            "nodes": [
                {"id": i, "parents": list(self.graph.parents[i]), "mechanism": f.to_json(), "noise": u.to_json()}
                for i, (f, u) in enumerate(zip(self.mechanisms, self.noises))
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=False)

    @classmethod
    def from_json(cls, doc: dict) -> "Scm":
        g = doc["graph"]
        graph = CausalGraph.from_edges(len(g["nodes"]), [tuple(e) for e in g["directed_edges"]], g["hidden"])
        nodes = sorted(doc["nodes"], key=lambda d: d["id"])
        cards = doc.get("cardinalities")
        return cls(
            graph,
            tuple(mechanism_from_json(d["mechanism"]) for d in nodes),
            tuple(NoiseSpec.from_json(d["noise"]) for d in nodes),
            None if cards is None else tuple(cards),
            dict(doc.get("provenance", {})),
        )


@dataclass(frozen=True)
class DataMatrix:
    """Samples with all nodes kept; ``observed_matrix`` drops hidden columns."""

    full: np.ndarray
    observed: tuple[int, ...]
    noise: np.ndarray | None = None

    @property
    def observed_matrix(self) -> np.ndarray:
        return np.ascontiguousarray(self.full[:, list(self.observed)])

    def __len__(self) -> int:
        return self.full.shape[0]


def forward_sample(m: Scm, n: int, rng: np.random.Generator) -> DataMatrix:
    if n < 1:
        raise ParamError(f"sample count must be >= 1, got {n}")
    u = m.draw_noise(n, rng)
    return DataMatrix(m.evaluate(u), m.observed, u)


def forward_sample_with_do(m: Scm, interventions: Mapping[int, object], noise: np.ndarray) -> np.ndarray:
    """Evaluate under ``do(interventions)`` reusing the given noise matrix."""
    return m.evaluate(noise, interventions)


def kernel_row_weights(values: np.ndarray, target: np.ndarray, kernel) -> np.ndarray:
    """Per-row weight ``prod_f K(x_f - v_f)`` for a ``(n, k)`` block of values."""
    from .queries import kernel_weight

    diff = np.asarray(values, dtype=float) - np.asarray(target, dtype=float)
    return kernel_weight(kernel.kind, diff, kernel.bandwidth)


def abduct(
    m: Scm,
    full_matrix: np.ndarray,
    factual: Mapping[int, object],
    kernel=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Rows consistent with the factual evidence plus normalised weights.

    Discrete models keep exactly matching rows with uniform weight.  Continuous
    models keep every row with positive kernel weight.
    """
    nodes = m._check(factual)
    hidden = set(nodes) & m.graph.hidden
    if hidden:
        raise NodeNotFound(f"factual nodes must be observed, got hidden {sorted(hidden)}")
    rows = full_matrix.shape[0]
    if not nodes:
        return np.arange(rows), np.full(rows, 1.0 / rows)
    cols = full_matrix[:, nodes]
    target = np.array([factual[v] for v in nodes])
    if m.discrete:
        mask = np.all(cols == target, axis=1)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise EmptyPosterior("no noise row reproduces the factual evidence")
        return idx, np.full(idx.size, 1.0 / idx.size)
    if kernel is None:
        raise ParamError("continuous abduction needs a kernel")
    w = kernel_row_weights(cols, target, kernel)
    idx = np.flatnonzero(w > 0)
    if idx.size == 0:
        raise EmptyPosterior("all kernel weights vanish")
    w = w[idx]
    return idx, w / w.sum()


# -- sampling from an SoI -------------------------------------------------------

def sample_scm(
    soi: SpaceOfInterest,
    rng: np.random.Generator,
    provenance: dict | None = None,
) -> Scm:
    if not soi.markovian:
        has_hidden = soi.hidden_proportion > 0 or bool(soi.predefined_graph and soi.predefined_graph.hidden)
        if not has_hidden:
            raise InfeasibleError(
                "semi-Markovian models arise only from hidden variables; set hidden_proportion > 0"
            )
    if soi.predefined_graph is not None:
        pg = soi.predefined_graph
        graph = CausalGraph.from_edges(pg.num_nodes, pg.edges)
        n = pg.num_nodes
    else:
        lo, hi = soi.num_nodes_range
        n = int(rng.integers(lo, hi + 1))
        d = resolve_expr(soi.expected_edges, n) / n
        graph = sample_dag(n, d, rng)
    if soi.predefined_graph is not None and soi.predefined_graph.hidden is not None:
        graph = graph.with_hidden(soi.predefined_graph.hidden)
    else:
        graph = assign_hidden(graph, soi.hidden_proportion, rng)

    noise = NoiseSpec.from_soi(soi.noise_distribution)
    noises = (noise,) * n
    if soi.is_discrete:
        lo, hi = soi.cardinality_range
        cards = tuple(int(c) for c in rng.integers(lo, hi + 1, size=n))
        args = dict(soi.mechanism_args)
        budget = int(args.pop("table_budget", DEFAULT_TABLE_BUDGET))
        if args:
            raise ParamError(f"unknown tabular mechanism arguments {sorted(args)}")
        mechs = []
        for v in range(n):
            regions = resolve_count(soi.noise_regions, n, cards[v])
            pcards = tuple(cards[j] for j in graph.parents[v])
            mechs.append(
                sample_regional(soi.discrete_sampling, pcards, cards[v], regions, noise.support(), rng, budget)
            )
        return Scm(graph, tuple(mechs), noises, cards, dict(provenance or {}))
    if soi.mechanism_family is MechanismFamily.TABULAR:
        raise ParamError("tabular mechanisms need discrete variables")
    mechs = tuple(
        sample_continuous_mechanism(
            soi.mechanism_family, len(graph.parents[v]), soi.mechanism_args, rng, soi.noise_mode
        )
        for v in range(n)
    )
    return Scm(graph, mechs, noises, None, dict(provenance or {}))


# -- export -----------------------------------------------------------------------

def format_value(x, discrete: bool) -> str:
    if discrete:
        return str(int(x))
    return repr(float(x))


def data_to_csv(observed: np.ndarray, columns: Iterable[int], discrete: bool) -> str:
    buf = io.StringIO()
    buf.write(",".join(str(c) for c in columns) + "\n")
    if discrete:
        for row in np.asarray(observed, dtype=np.int64).tolist():
            buf.write(",".join(map(str, row)) + "\n")
    else:
        for row in np.asarray(observed, dtype=float).tolist():
            buf.write(",".join(map(repr, row)) + "\n")
    return buf.getvalue()


def read_csv(text: str) -> tuple[list[int], np.ndarray]:
    lines = text.strip().splitlines()
    header = [int(c) for c in lines[0].split(",")] if lines and lines[0] else []
    rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))

"""Characterization metrics for sampled SCMs and the assumption report.

Four metric blocks are produced, each a flat ``name -> float`` map:

* ``graph_*``: degree, ancestor/descendant and directed-path statistics of the
  full DAG (paths counted exactly by dynamic programming).
* ``proj_*``: sibling and c-component statistics of the latent projection.
* ``dist_*``: statistics of the observational law estimated from a probe sample.
* ``mech_*``: correlations and conditional entropies of each mechanism over the
  image of its input space (parents x noise), independent of the entailed law.

Entropies are in nats.  Variances are population variances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import GridBudgetExceeded
from .graph import Admg, CausalGraph, ancestors, c_components, descendants
from .mechanisms import RegionalMechanism
from .scm import Scm, forward_sample

DEFAULT_PROBE_SAMPLES = 1_000_000
DEFAULT_GRID_POINTS = 16
DEFAULT_GRID_BUDGET = 1_000_000
ENTROPY_BINS = 16

GRAPH_METRICS = (
    "graph_mean_in_degree",
    "graph_var_in_degree",
    "graph_mean_ancestors",
    "graph_var_ancestors",
    "graph_mean_descendants",
    "graph_var_descendants",
    "graph_mean_path_length",
    "graph_var_path_length",
    "graph_max_path_length",
    "graph_path_count",
)
PROJECTED_METRICS = (
    "proj_mean_siblings",
    "proj_var_siblings",
    "proj_num_c_components",
    "proj_mean_c_component_size",
    "proj_var_c_component_size",
)
DISTRIBUTION_METRICS = (
    "dist_min_joint_prob",
    "dist_zero_prob_proportion",
    "dist_min_marginal_prob",
    "dist_mean_min_marginal_prob",
    "dist_var_min_marginal_prob",
    "dist_joint_l1_to_uniform",
    "dist_mean_marginal_l1_to_uniform",
    "dist_var_marginal_l1_to_uniform",
    "dist_joint_entropy",
)
MECHANISM_METRICS = (
    "mech_mean_pearson",
    "mech_var_pearson",
    "mech_mean_spearman",
    "mech_var_spearman",
    "mech_mean_cond_entropy",
    "mech_var_cond_entropy",
)
METRIC_NAMES = GRAPH_METRICS + PROJECTED_METRICS + DISTRIBUTION_METRICS + MECHANISM_METRICS


def _mean_var(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0, 0.0
    m = float(v.mean())
    return m, float(np.mean((v - m) ** 2))


def _entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log(p))))


# -- graph -------------------------------------------------------------------------

def path_length_counts(g: CausalGraph) -> list[int]:
    """``counts[L]`` = number of directed paths with ``L`` edges (``counts[0] = 0``)."""
    n = g.n
    # ending[v][L]: paths of length L ending at v, the trivial path included at L = 0
    ending: list[list[int]] = []
    for v in range(n):
        row = [0] * n
        row[0] = 1
        for p in g.parents[v]:
            for length, c in enumerate(ending[p][: n - 1]):
                if c:
                    row[length + 1] += c
        ending.append(row)
    totals = [sum(ending[v][length] for v in range(n)) for length in range(n)]
    if totals:
        totals[0] = 0
    return totals


def graph_metrics(g: CausalGraph) -> dict[str, float]:
    n = g.n
    in_deg = [len(p) for p in g.parents]
    anc = [len(ancestors(g, {v})) for v in range(n)]
    desc = [len(descendants(g, {v})) for v in range(n)]
    counts = path_length_counts(g)
    total = sum(counts)
    if total:
        mean_len = sum(length * c for length, c in enumerate(counts)) / total
        second = sum(length * length * c for length, c in enumerate(counts)) / total
        var_len = max(0.0, second - mean_len * mean_len)
        max_len = max(length for length, c in enumerate(counts) if c)
    else:
        mean_len = var_len = 0.0
        max_len = 0
    out = {}
    out["graph_mean_in_degree"], out["graph_var_in_degree"] = _mean_var(in_deg)
    out["graph_mean_ancestors"], out["graph_var_ancestors"] = _mean_var(anc)
    out["graph_mean_descendants"], out["graph_var_descendants"] = _mean_var(desc)
    out["graph_mean_path_length"] = float(mean_len)
    out["graph_var_path_length"] = float(var_len)
    out["graph_max_path_length"] = float(max_len)
    out["graph_path_count"] = float(total)
    return out


def projected_metrics(a: Admg) -> dict[str, float]:
    sib = [len(a.siblings(v)) for v in a.nodes]
    comps = c_components(a)
    out = {}
    out["proj_mean_siblings"], out["proj_var_siblings"] = _mean_var(sib)
    out["proj_num_c_components"] = float(len(comps))
    out["proj_mean_c_component_size"], out["proj_var_c_component_size"] = _mean_var([len(c) for c in comps])
    return out


# -- observational distribution -------------------------------------------------------

def _joint_counts(data: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Counts of every observed joint value plus the per-column observed domains."""
    domains = [np.unique(data[:, j]) for j in range(data.shape[1])]
    _, counts = np.unique(data, axis=0, return_counts=True)
    return counts, domains


def distribution_metrics(
    m: Scm,
    n: int = DEFAULT_PROBE_SAMPLES,
    rng: np.random.Generator | None = None,
    domain: str = "observed",
) -> dict[str, float]:
    """Statistics of ``P(V_o)`` estimated from ``n`` forward samples.

    ``domain="observed"`` takes each variable's domain to be the values seen in
    the probe sample; ``"declared"`` uses ``{0..C-1}``.  Continuous models only
    get a binned joint entropy; the other entries are NaN.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    data = forward_sample(m, n, rng).observed_matrix
    out = {k: float("nan") for k in DISTRIBUTION_METRICS}
    if not m.discrete:
        binned = np.empty(data.shape, dtype=np.int64)
        for j in range(data.shape[1]):
            edges = np.histogram_bin_edges(data[:, j], bins=ENTROPY_BINS)
            binned[:, j] = np.clip(np.searchsorted(edges, data[:, j], side="right") - 1, 0, ENTROPY_BINS - 1)
        counts, _ = _joint_counts(binned)
        out["dist_joint_entropy"] = _entropy(counts / n)
        return out

    counts, domains = _joint_counts(data)
    if domain == "declared":
        sizes = [m.cardinalities[v] for v in m.observed]
    elif domain == "observed":
        sizes = [len(d) for d in domains]
    else:
        raise ValueError(f"unknown domain mode {domain!r}")
    omega = math.prod(sizes)
    probs = counts / n
    n_zero = omega - counts.size
    out["dist_min_joint_prob"] = 0.0 if n_zero else float(probs.min())
    out["dist_zero_prob_proportion"] = n_zero / omega
    out["dist_joint_l1_to_uniform"] = float(np.sum(np.abs(probs - 1.0 / omega)) + n_zero / omega)
    out["dist_joint_entropy"] = _entropy(probs)

    mins, l1s = [], []
    for j, v in enumerate(m.observed):
        size = sizes[j]
        if domain == "declared":
            p = np.bincount(data[:, j], minlength=size) / n
        else:
            p = np.array([np.count_nonzero(data[:, j] == val) for val in domains[j]]) / n
        mins.append(float(p.min()))
        l1s.append(float(np.sum(np.abs(p - 1.0 / size))))
    out["dist_min_marginal_prob"] = float(min(mins)) if mins else float("nan")
    out["dist_mean_min_marginal_prob"], out["dist_var_min_marginal_prob"] = _mean_var(mins)
    out["dist_mean_marginal_l1_to_uniform"], out["dist_var_marginal_l1_to_uniform"] = _mean_var(l1s)
    return out


# -- mechanisms ------------------------------------------------------------------------

def _corr(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return float("nan")
    return float(np.clip(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb), -1.0, 1.0))


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    return _corr(rankdata(a), rankdata(b))


def _regional_image(f: RegionalMechanism) -> tuple[np.ndarray, np.ndarray, float]:
    """Grid inputs (parents then noise), outputs, and ``H(V | PA)``."""
    n_cfg, n_reg = f.n_configs, f.n_regions
    cfg = np.arange(n_cfg)
    strides = f.strides
    pa = np.stack([(cfg // s) % c for s, c in zip(strides, f.parent_cards)], axis=1) if f.n_parents else np.zeros((n_cfg, 0))
    mid = 0.5 * (f.boundaries[:-1] + f.boundaries[1:])
    inputs = np.hstack([np.repeat(pa, n_reg, axis=0), np.tile(mid, n_cfg)[:, None]])
    outputs = f.mappings.T.reshape(-1)  # config-major, region-minor
    h = float(np.mean([_entropy(p) for p in f.conditional_probs()]))
    return inputs, outputs, h


def _noise_points(spec, k: int) -> np.ndarray:
    from scipy.stats import norm

    q = (np.arange(k) + 0.5) / k
    a, b = spec.params
    return a + (b - a) * q if spec.kind == "uniform" else norm.ppf(q, loc=a, scale=b)


def _continuous_image(m: Scm, v: int, ranges: np.ndarray, points: int, budget: int):
    f = m.mechanisms[v]
    dims = f.n_parents + 1
    k = points
    while k >= 2 and k**dims > budget:
        k -= 1
    if k < 2:
        raise GridBudgetExceeded(f"node {v}: a grid over {dims} inputs does not fit the budget of {budget}")
    axes = [np.linspace(ranges[j, 0], ranges[j, 1], k) for j in m.graph.parents[v]]
    axes.append(_noise_points(m.noises[v], k))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dims)
    out = f.evaluate(mesh[:, :-1], mesh[:, -1])
    # H(V | PA): bin outputs, then average the entropy over the noise axis per parent point
    edges = np.histogram_bin_edges(out, bins=ENTROPY_BINS)
    binned = np.clip(np.searchsorted(edges, out, side="right") - 1, 0, ENTROPY_BINS - 1).reshape(-1, k)
    h = float(np.mean([_entropy(np.bincount(row, minlength=ENTROPY_BINS) / k) for row in binned]))
    return mesh, out, h


def mechanism_metrics(
    m: Scm,
    points: int = DEFAULT_GRID_POINTS,
    budget: int = DEFAULT_GRID_BUDGET,
    rng: np.random.Generator | None = None,
    range_samples: int = 10_000,
) -> dict[str, float]:
    """Correlations and conditional entropies over each mechanism's input grid.

    Continuous parent domains are discretised into ``points`` equispaced values
    between the minimum and maximum of a forward sample; the noise axis uses
    ``points`` quantiles of the noise law.
    """
    ranges = None
    if not m.discrete:
        rng = rng if rng is not None else np.random.default_rng(0)
        sample = forward_sample(m, range_samples, rng).full
        ranges = np.stack([sample.min(axis=0), sample.max(axis=0)], axis=1)
    pearson_by_node, spearman_by_node, entropies = [], [], []
    for v in range(m.n):
        f = m.mechanisms[v]
        if m.discrete:
            if f.n_configs * f.n_regions > budget:
                raise GridBudgetExceeded(f"node {v}: {f.n_configs * f.n_regions} grid points over the budget")
            inputs, outputs, h = _regional_image(f)
        else:
            inputs, outputs, h = _continuous_image(m, v, ranges, points, budget)
        pearson_by_node.append([_corr(outputs, inputs[:, j]) for j in range(inputs.shape[1])])
        spearman_by_node.append([_spearman(outputs, inputs[:, j]) for j in range(inputs.shape[1])])
        entropies.append(h)

    out = {}
    for name, per_node in (("pearson", pearson_by_node), ("spearman", spearman_by_node)):
        node_means = [np.nanmean(r) if np.any(~np.isnan(r)) else np.nan for r in map(np.asarray, per_node)]
        mean = float(np.nanmean(node_means)) if np.any(~np.isnan(node_means)) else float("nan")
        node_vars = [
            np.nanmean((np.asarray(r) - mean) ** 2) if np.any(~np.isnan(r)) else np.nan
            for r in map(np.asarray, per_node)
        ]
        var = float(np.nanmean(node_vars)) if np.any(~np.isnan(node_vars)) else float("nan")
        out[f"mech_mean_{name}"], out[f"mech_var_{name}"] = mean, var
    out["mech_mean_cond_entropy"], out["mech_var_cond_entropy"] = _mean_var(entropies)
    return out


# -- assumptions ------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    markovian: bool
    causal_sufficiency: bool
    strong_positivity: bool | None
    weak_positivity: bool | None
    cardinalities: tuple[int, ...] | None
    variable_type: str
    probe_samples: int

    def to_json(self) -> dict:
        return {
            "markovian": self.markovian,
            "causal_sufficiency": self.causal_sufficiency,
            "strong_positivity": self.strong_positivity,
            "weak_positivity": self.weak_positivity,
            "cardinalities": None if self.cardinalities is None else list(self.cardinalities),
            "variable_type": self.variable_type,
            "probe_samples": self.probe_samples,
        }


def assumption_report(m: Scm, dist_block: dict[str, float], probe_samples: int) -> AssumptionReport:
    a = m.projected()
    strong = weak = None
    if m.discrete:
        strong = bool(dist_block["dist_min_joint_prob"] > 0)
        weak = bool(dist_block["dist_min_marginal_prob"] > 0)
    return AssumptionReport(
        markovian=not a.bidirected,
        causal_sufficiency=not m.graph.hidden,
        strong_positivity=strong,
        weak_positivity=weak,
        cardinalities=None if not m.discrete else tuple(m.cardinalities[v] for v in m.observed),
        variable_type="Discrete" if m.discrete else "Continuous",
        probe_samples=probe_samples,
    )


def analyze(
    m: Scm,
    probe_samples: int = DEFAULT_PROBE_SAMPLES,
    rng: np.random.Generator | None = None,
    grid_points: int = DEFAULT_GRID_POINTS,
    grid_budget: int = DEFAULT_GRID_BUDGET,
    domain: str = "observed",
) -> tuple[dict[str, float], AssumptionReport]:
    """All metric blocks (in :data:`METRIC_NAMES` order) plus the assumption report."""
    rng = rng if rng is not None else np.random.default_rng(0)
    metrics = {}
    metrics.update(graph_metrics(m.graph))
    metrics.update(projected_metrics(m.projected()))
    dist = distribution_metrics(m, probe_samples, rng, domain)
    metrics.update(dist)
    try:
        metrics.update(mechanism_metrics(m, grid_points, grid_budget, rng))
    except GridBudgetExceeded:
        metrics.update({k: float("nan") for k in MECHANISM_METRICS})
    return {k: metrics[k] for k in METRIC_NAMES}, assumption_report(m, dist, probe_samples)

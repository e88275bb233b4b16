"""Structural mechanisms and exogenous noise.

Three mechanism families are supported:

* :class:`RegionalMechanism` -- a discrete tabular mechanism.  The noise
  interval is cut into consecutive regions; region ``r`` carries a lookup table
  ``m_r`` from parent configurations to child values.
* :class:`LinearMechanism` -- weighted sum of the parents, combined with noise.
* :class:`NeuralMechanism` -- small ReLU network on the parents, combined with
  noise.

All evaluation is vectorised over rows: ``evaluate(pa, u)`` takes a parent
matrix of shape ``(n, k)`` and a noise vector of shape ``(n,)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, ParamError, TableBudgetError
from .soi import DiscreteSampling, MechanismFamily, NoiseDistribution, NoiseKind, NoiseMode

DEFAULT_TABLE_BUDGET = 10**6
DEFAULT_HIDDEN_SIZES = (8, 8)
WEIGHT_RANGE = (-1.0, 1.0)


def _hex_list(values) -> list[str]:
    return [float(v).hex() for v in np.asarray(values, dtype=float).ravel()]


def _from_hex(values, shape=None) -> np.ndarray:
    arr = np.array([float.fromhex(v) for v in values], dtype=float)
    return arr.reshape(shape) if shape is not None else arr


# -- noise -------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Exogenous noise law: ``uniform`` on ``[lo, hi)`` or ``normal(mean, std)``."""

    kind: str = "uniform"
    params: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise ParamError(f"unknown noise kind {self.kind!r}")
        a, b = self.params
        if self.kind == "uniform" and not a < b:
            raise ParamError(f"uniform noise needs lo < hi, got {self.params}")
        if self.kind == "normal" and not b > 0:
            raise ParamError(f"normal noise needs std > 0, got {self.params}")

    @classmethod
    def from_soi(cls, dist: NoiseDistribution) -> "NoiseSpec":
        kind = "uniform" if dist.kind is NoiseKind.UNIFORM else "normal"
        return cls(kind, tuple(float(x) for x in dist.args))

    @property
    def bounded(self) -> bool:
        return self.kind == "uniform"

    def support(self) -> tuple[float, float]:
        if not self.bounded:
            raise DomainError("normal noise has unbounded support")
        return self.params

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": _hex_list(self.params)}

    @classmethod
    def from_json(cls, doc: dict) -> "NoiseSpec":
        return cls(doc["kind"], tuple(_from_hex(doc["params"])))


def sample_noise(spec: NoiseSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 0:
        raise ParamError(f"sample count must be >= 0, got {n}")
    a, b = spec.params
    if spec.kind == "uniform":
        return rng.uniform(a, b, size=n)
    return rng.normal(a, b, size=n)


# -- regional (tabular) mechanisms ---------------------------------------------

@dataclass(frozen=True, eq=False)
class RegionalMechanism:
    parent_cards: tuple[int, ...]
    cardinality: int
    boundaries: np.ndarray  # shape (R + 1,), strictly increasing
    mappings: np.ndarray  # shape (R, n_configs), values in [0, cardinality)

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        m = np.asarray(self.mappings, dtype=np.int64)
        if b.ndim != 1 or len(b) < 2 or np.any(np.diff(b) <= 0):
            raise ParamError("region boundaries must be strictly increasing")
        if m.shape != (len(b) - 1, self.n_configs):
            raise ParamError(f"mapping table shape {m.shape} does not match regions/configs")
        if m.size and (m.min() < 0 or m.max() >= self.cardinality):
            raise ParamError("mapping values outside the child domain")
        b.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "mappings", m)
        object.__setattr__(self, "parent_cards", tuple(int(c) for c in self.parent_cards))

    @property
    def n_parents(self) -> int:
        return len(self.parent_cards)

    @property
    def n_configs(self) -> int:
        return math.prod(self.parent_cards)

    @property
    def n_regions(self) -> int:
        return len(self.boundaries) - 1

    @property
    def strides(self) -> np.ndarray:
        # last parent varies fastest
        s = np.ones(self.n_parents, dtype=np.int64)
        for j in range(self.n_parents - 2, -1, -1):
            s[j] = s[j + 1] * self.parent_cards[j + 1]
        return s

    def config_index(self, pa: np.ndarray) -> np.ndarray:
        pa = np.asarray(pa, dtype=np.int64)
        if pa.shape[1] != self.n_parents:
            raise DomainError(f"expected {self.n_parents} parent columns, got {pa.shape[1]}")
        if self.n_parents == 0:
            return np.zeros(pa.shape[0], dtype=np.int64)
        return pa @ self.strides

    def region_of(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        lo, hi = self.boundaries[0], self.boundaries[-1]
        if np.any((u < lo) | (u > hi)) or np.any(np.isnan(u)):
            raise DomainError(f"noise outside the mechanism's support [{lo}, {hi}]")
        r = np.searchsorted(self.boundaries, u, side="right") - 1
        return np.minimum(r, self.n_regions - 1)

    def evaluate(self, pa: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.mappings[self.region_of(u), self.config_index(pa)]

    def region_lengths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def conditional_probs(self) -> np.ndarray:
        """``P(V = v | config)`` as an ``(n_configs, cardinality)`` array."""
        weights = self.region_lengths() / (self.boundaries[-1] - self.boundaries[0])
        probs = np.zeros((self.n_configs, self.cardinality))
        for r in range(self.n_regions):
            probs[np.arange(self.n_configs), self.mappings[r]] += weights[r]
        return probs

    def to_json(self) -> dict:
        return {
            "type": "regional",
            "parent_cards": list(self.parent_cards),
            "cardinality": self.cardinality,
            "boundaries": _hex_list(self.boundaries),
            "mappings": self.mappings.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RegionalMechanism":
        n_configs = math.prod(doc["parent_cards"])
        mappings = np.array(doc["mappings"], dtype=np.int64).reshape(-1, n_configs)
        return cls(tuple(doc["parent_cards"]), int(doc["cardinality"]), _from_hex(doc["boundaries"]), mappings)


def table_count(cardinality: int, n_configs: int) -> int:
    """Number of distinct parent-to-child tables, ``C ** n_configs`` (exact)."""
    return cardinality**n_configs


def _effective_regions(requested: int, cardinality: int, n_configs: int) -> int:
    # avoid materialising C ** n_configs when it obviously dwarfs the request
    if n_configs * math.log(cardinality) > math.log(requested) + 1:
        return requested
    return min(requested, table_count(cardinality, n_configs))


def _check_budget(regions: int, n_configs: int, budget: int):
    if regions * n_configs > budget:
        raise TableBudgetError(
            f"mechanism needs {regions} x {n_configs} table entries, over the budget of {budget}"
        )


def _boundaries(regions: int, omega_u: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    lo, hi = omega_u
    while True:
        cuts = np.sort(rng.uniform(lo, hi, size=regions - 1))
        b = np.concatenate(([lo], cuts, [hi]))
        if np.all(np.diff(b) > 0):
            return b


def _validate(cardinality: int, regions: int | None):
    if cardinality < 2:
        raise ParamError(f"cardinality must be >= 2, got {cardinality}")
    if regions is not None and regions < 1:
        raise ParamError(f"need at least one noise region, got {regions}")


def sample_regional_rejection(
    parent_cards: Sequence[int],
    cardinality: int,
    regions: int,
    omega_u: tuple[float, float],
    rng: np.random.Generator,
    budget: int = DEFAULT_TABLE_BUDGET,
) -> RegionalMechanism:
    """Distinct random tables, one per region, drawn by rejection."""
    _validate(cardinality, regions)
    n_configs = math.prod(parent_cards)
    regions = _effective_regions(regions, cardinality, n_configs)
    _check_budget(regions, n_configs, budget)
    boundaries = _boundaries(regions, omega_u, rng)
    seen: set[bytes] = set()
    tables = []
    for _ in range(regions):
        while True:
            m = rng.integers(0, cardinality, size=n_configs, dtype=np.int64)
            key = m.tobytes()
            if key not in seen:
                break
        seen.add(key)
        tables.append(m)
    return RegionalMechanism(tuple(parent_cards), cardinality, boundaries, np.array(tables).reshape(regions, n_configs))


def all_tables(cardinality: int, n_configs: int) -> np.ndarray:
    """Every table over ``n_configs`` configurations, in lexicographic order."""
    count = table_count(cardinality, n_configs)
    idx = np.arange(count, dtype=np.int64)
    digits = np.empty((count, n_configs), dtype=np.int64)
    for j in range(n_configs - 1, -1, -1):
        digits[:, j] = idx % cardinality
        idx //= cardinality
    return digits


def sample_regional_exhaustive(
    parent_cards: Sequence[int],
    cardinality: int,
    omega_u: tuple[float, float],
    rng: np.random.Generator,
    budget: int = DEFAULT_TABLE_BUDGET,
) -> RegionalMechanism:
    """One region for every possible table, in random order."""
    _validate(cardinality, None)
    n_configs = math.prod(parent_cards)
    if n_configs * math.log(cardinality) > math.log(budget) + 1:
        raise TableBudgetError(f"{cardinality}^{n_configs} tables exceed the budget of {budget}")
    regions = table_count(cardinality, n_configs)
    _check_budget(regions, n_configs, budget)
    boundaries = _boundaries(regions, omega_u, rng)
    tables = all_tables(cardinality, n_configs)[rng.permutation(regions)]
    return RegionalMechanism(tuple(parent_cards), cardinality, boundaries, tables)


def sample_regional_unbiased(
    parent_cards: Sequence[int],
    cardinality: int,
    regions: int,
    omega_u: tuple[float, float],
    rng: np.random.Generator,
    budget: int = DEFAULT_TABLE_BUDGET,
) -> RegionalMechanism:
    """Independent uniform tables per region; duplicates allowed."""
    _validate(cardinality, regions)
    n_configs = math.prod(parent_cards)
    _check_budget(regions, n_configs, budget)
    boundaries = _boundaries(regions, omega_u, rng)
    tables = rng.integers(0, cardinality, size=(regions, n_configs), dtype=np.int64)
    return RegionalMechanism(tuple(parent_cards), cardinality, boundaries, tables)


def sample_regional(
    strategy: DiscreteSampling,
    parent_cards: Sequence[int],
    cardinality: int,
    regions: int,
    omega_u: tuple[float, float],
    rng: np.random.Generator,
    budget: int = DEFAULT_TABLE_BUDGET,
) -> RegionalMechanism:
    if strategy is DiscreteSampling.SAMPLE_REJECTION:
        return sample_regional_rejection(parent_cards, cardinality, regions, omega_u, rng, budget)
    if strategy is DiscreteSampling.EXHAUSTIVE:
        return sample_regional_exhaustive(parent_cards, cardinality, omega_u, rng, budget)
    return sample_regional_unbiased(parent_cards, cardinality, regions, omega_u, rng, budget)


# -- continuous mechanisms -----------------------------------------------------

def _combine(f: np.ndarray, u: np.ndarray, mode: NoiseMode) -> np.ndarray:
    return f + u if mode is NoiseMode.ADDITIVE else f * u


@dataclass(frozen=True, eq=False)
class LinearMechanism:
    """``sum_j w_j pa_j`` combined with noise.

    Parentless nodes emit the noise itself under both noise modes.
    """

    weights: np.ndarray
    noise_mode: NoiseMode = NoiseMode.ADDITIVE

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(w)):
            raise ParamError("linear weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n_parents(self) -> int:
        return len(self.weights)

    def evaluate(self, pa: np.ndarray, u: np.ndarray) -> np.ndarray:
        pa = np.asarray(pa, dtype=float)
        u = np.asarray(u, dtype=float)
        if pa.shape[1] != self.n_parents:
            raise DomainError(f"expected {self.n_parents} parent columns, got {pa.shape[1]}")
        if self.n_parents == 0:
            return u.copy()
        # explicit left-to-right sum keeps results bit-reproducible across row subsets
        f = self.weights[0] * pa[:, 0]
        for j in range(1, self.n_parents):
            f = f + self.weights[j] * pa[:, j]
        return _combine(f, u, self.noise_mode)

    def to_json(self) -> dict:
        return {"type": "linear", "noise_mode": self.noise_mode.value, "weights": _hex_list(self.weights)}

    @classmethod
    def from_json(cls, doc: dict) -> "LinearMechanism":
        return cls(_from_hex(doc["weights"]), NoiseMode(doc["noise_mode"]))


@dataclass(frozen=True, eq=False)
class NeuralMechanism:
    """ReLU network ``k -> h1 -> ... -> 1`` combined with noise."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    noise_mode: NoiseMode = NoiseMode.ADDITIVE

    def __post_init__(self):
        fixed = []
        width = None
        for w, b in self.layers:
            w = np.array(w, dtype=float)
            b = np.array(b, dtype=float).ravel()
            if w.ndim != 2 or w.shape[1] != b.shape[0]:
                raise ParamError("layer weight/bias shapes do not compose")
            if width is not None and w.shape[0] != width:
                raise ParamError("layer shapes do not compose")
            width = w.shape[1]
            w.flags.writeable = False
            b.flags.writeable = False
            fixed.append((w, b))
        if width != 1:
            raise ParamError("network output must be one-dimensional")
        object.__setattr__(self, "layers", tuple(fixed))

    @property
    def n_parents(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def network(self, pa: np.ndarray) -> np.ndarray:
        h = np.asarray(pa, dtype=float)
        if h.shape[1] != self.n_parents:
            raise DomainError(f"expected {self.n_parents} parent columns, got {h.shape[1]}")
        for k, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if k < len(self.layers) - 1:
                h = np.maximum(h, 0.0)
        return h[:, 0]

    def evaluate(self, pa: np.ndarray, u: np.ndarray) -> np.ndarray:
        return _combine(self.network(pa), np.asarray(u, dtype=float), self.noise_mode)

    def to_json(self) -> dict:
        return {
            "type": "neural",
            "noise_mode": self.noise_mode.value,
            "layers": [{"shape": list(w.shape), "weights": _hex_list(w), "bias": _hex_list(b)} for w, b in self.layers],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NeuralMechanism":
        layers = tuple(
            (_from_hex(layer["weights"], tuple(layer["shape"])), _from_hex(layer["bias"])) for layer in doc["layers"]
        )
        return cls(layers, NoiseMode(doc["noise_mode"]))


Mechanism = Union[RegionalMechanism, LinearMechanism, NeuralMechanism]


def sample_continuous_mechanism(
    family: MechanismFamily,
    n_parents: int,
    args: dict | None,
    rng: np.random.Generator,
    noise_mode: NoiseMode = NoiseMode.ADDITIVE,
) -> LinearMechanism | NeuralMechanism:
    """Random linear or neural mechanism with i.i.d. ``Uniform[-1, 1]`` parameters.

    ``args`` may carry ``weight_range`` (both families) and ``hidden_sizes``
    (NeuralNet only, default ``[8, 8]``).
    """
    args = dict(args or {})
    lo, hi = args.pop("weight_range", WEIGHT_RANGE)
    if not lo < hi:
        raise ParamError(f"weight_range needs lo < hi, got {(lo, hi)}")
    if family is MechanismFamily.LINEAR:
        if args:
            raise ParamError(f"unknown linear mechanism arguments {sorted(args)}")
        return LinearMechanism(rng.uniform(lo, hi, size=n_parents), noise_mode)
    if family is not MechanismFamily.NEURAL_NET:
        raise ParamError(f"{family.value} is not a continuous mechanism family")
    hidden = args.pop("hidden_sizes", DEFAULT_HIDDEN_SIZES)
    if args:
        raise ParamError(f"unknown neural mechanism arguments {sorted(args)}")
    if not isinstance(hidden, (list, tuple)) or any(not isinstance(h, int) or h < 1 for h in hidden):
        raise ParamError(f"hidden_sizes must be a list of positive integers, got {hidden!r}")
    sizes = [n_parents, *hidden, 1]
    layers = tuple(
        (rng.uniform(lo, hi, size=(a, b)), rng.uniform(lo, hi, size=b)) for a, b in zip(sizes[:-1], sizes[1:])
    )
    return NeuralMechanism(layers, noise_mode)


def eval_mechanism(f: Mechanism, pa_values, u):
    """Evaluate ``f`` on one realization (1-D ``pa_values``, scalar ``u``) or a batch."""
    pa = np.asarray(pa_values)
    scalar = pa.ndim == 1 and np.ndim(u) == 0
    if scalar:
        pa = pa.reshape(1, -1)
        u = np.array([u])
    elif pa.ndim == 1:
        pa = pa.reshape(-1, 1) if f.n_parents == 1 else pa.reshape(len(np.atleast_1d(u)), -1)
    out = f.evaluate(pa, np.asarray(u))
    return out[0].item() if scalar else out


def mechanism_from_json(doc: dict) -> Mechanism:
    kind = doc["type"]
    if kind == "regional":
        return RegionalMechanism.from_json(doc)
    if kind == "linear":
        return LinearMechanism.from_json(doc)
    if kind == "neural":
        return NeuralMechanism.from_json(doc)
    raise ParamError(f"unknown mechanism type {kind!r}")

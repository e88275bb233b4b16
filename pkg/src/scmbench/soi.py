"""Space-of-Interest configuration: parsing, validation, serialization.

A Space of Interest (SoI) is written as a YAML document (JSON is valid YAML,
so either syntax works).  Every key is optional except ``expected_edges``::

    num_nodes_range: [5, 15]
    expected_edges: "0.5 * N"       # expected TOTAL edges; degree = value / N
    hidden_proportion: 0.0
    mechanism_family: Linear        # Linear | NeuralNet | Tabular
    variable_type: Continuous       # Continuous | Discrete
    noise_distribution: {kind: Uniform, args: [-1, 1]}
    query_type: ATE                 # ATE | CATE | CtfTE
    kernel: {kind: Gaussian, bandwidth: 0.1}
    num_samples: 1000

See README.md for the full key list.  Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, fields
from typing import Any

import yaml

from .errors import ConfigSyntaxError, ConflictError, ValidationError
from .expr import Expr

SCHEMA_VERSION = "1"


class SoiWarning(UserWarning):
    """Emitted for settings that are accepted but have no effect."""


class _Choice(str, enum.Enum):
    @classmethod
    def parse(cls, value, path):
        if isinstance(value, cls):
            return value
        if not isinstance(value, str):
            raise ValidationError(f"expected one of {[m.value for m in cls]}", path)
        key = value.replace("_", "").replace("-", "").replace(" ", "").lower()
        for member in cls:
            names = {member.value.lower()} | {a.lower() for a in getattr(cls, "_aliases", {}).get(member.value, ())}
            if key in names:
                return member
        raise ValidationError(f"unknown value {value!r}; expected one of {[m.value for m in cls]}", path)


class MechanismFamily(_Choice):
    LINEAR = "Linear"
    NEURAL_NET = "NeuralNet"
    TABULAR = "Tabular"


MechanismFamily._aliases = {"NeuralNet": ("nn", "neural", "mlp")}


class VariableType(_Choice):
    CONTINUOUS = "Continuous"
    DISCRETE = "Discrete"


class DiscreteSampling(_Choice):
    SAMPLE_REJECTION = "SampleRejection"
    EXHAUSTIVE = "Exhaustive"
    UNBIASED_RANDOM = "UnbiasedRandom"


DiscreteSampling._aliases = {
    "SampleRejection": ("rejection",),
    "Exhaustive": ("enumeration", "exhaustivepartition"),
    "UnbiasedRandom": ("unbiased", "random"),
}


class NoiseMode(_Choice):
    ADDITIVE = "Additive"
    MULTIPLICATIVE = "Multiplicative"


class QueryType(_Choice):
    ATE = "ATE"
    CATE = "CATE"
    CTF_TE = "CtfTE"


QueryType._aliases = {"CtfTE": ("ctfte", "counterfactualte")}


class CtfTeForm(_Choice):
    MEAN = "Mean"
    PROBABILITY = "Probability"


class KernelKind(_Choice):
    GAUSSIAN = "Gaussian"
    EPSILON = "Epsilon"


class NoiseKind(_Choice):
    UNIFORM = "Uniform"
    NORMAL = "Normal"


NoiseKind._aliases = {"Normal": ("gaussian",)}


@dataclass(frozen=True)
class NoiseDistribution:
    kind: NoiseKind = NoiseKind.UNIFORM
    args: tuple[float, float] = (-1.0, 1.0)


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.GAUSSIAN
    bandwidth: float = 0.1


@dataclass(frozen=True)
class PredefinedGraph:
    """A user-fixed DAG; every edge ``j -> i`` must satisfy ``j < i``."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    hidden: tuple[int, ...] | None = None


@dataclass(frozen=True)
class SpaceOfInterest:
    expected_edges: Expr
    num_nodes_range: tuple[int, int] = (5, 15)
    variable_dimensionality: tuple[int, int] = (1, 1)
    hidden_proportion: float = 0.0
    markovian: bool = True
    semi_markovian: bool = False
    predefined_graph: PredefinedGraph | None = None
    mechanism_family: MechanismFamily = MechanismFamily.LINEAR
    mechanism_args: dict = field(default_factory=dict)
    variable_type: VariableType = VariableType.CONTINUOUS
    cardinality_range: tuple[int, int] = (2, 2)
    discrete_sampling: DiscreteSampling = DiscreteSampling.SAMPLE_REJECTION
    noise_mode: NoiseMode = NoiseMode.ADDITIVE
    noise_distribution: NoiseDistribution = NoiseDistribution()
    noise_regions: Expr = Expr("N")
    query_type: QueryType = QueryType.ATE
    queries_per_scm: int = 1
    specific_queries: tuple[dict, ...] | None = None
    allow_nan_queries: bool = False
    disable_queries: bool = False
    ctf_te_form: CtfTeForm = CtfTeForm.MEAN
    kernel: KernelSpec = KernelSpec()
    num_samples: int = 1000

    @property
    def is_discrete(self) -> bool:
        return self.variable_type is VariableType.DISCRETE


KEYS = tuple(f.name for f in fields(SpaceOfInterest))
_DISCRETE_ONLY = ("cardinality_range", "noise_regions", "discrete_sampling")


# -- field parsers -----------------------------------------------------------

def _int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ValidationError(f"expected an integer, got {value!r}", path)
    if minimum is not None and value < minimum:
        raise ValidationError(f"must be >= {minimum}, got {value}", path)
    return value


def _real(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"expected a real number, got {value!r}", path)
    if not math.isfinite(value):
        raise ValidationError("must be finite", path)
    return float(value)


def _bool(value, path):
    if not isinstance(value, bool):
        raise ValidationError(f"expected true/false, got {value!r}", path)
    return value


def _interval(value, path, minimum):
    if isinstance(value, int) and not isinstance(value, bool):
        value = [value, value]
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValidationError("expected an integer or a [min, max] pair", path)
    lo = _int(value[0], f"{path}[0]", minimum)
    hi = _int(value[1], f"{path}[1]", minimum)
    if lo > hi:
        raise ValidationError(f"min {lo} exceeds max {hi}", path)
    return (lo, hi)


def _expr(value, path):
    try:
        return Expr.of(value)
    except ValidationError as exc:
        raise ValidationError(str(exc), path) from None


def _n_expr(value, path):
    e = _expr(value, path)
    if "V" in e.symbols:
        raise ValidationError("only N may appear here", path)
    return e


def _mapping(value, path):
    if not isinstance(value, dict):
        raise ValidationError("expected a mapping", path)
    return value


def _noise(value, path):
    if isinstance(value, str):
        value = {"kind": value}
    value = _mapping(value, path)
    unknown = set(value) - {"kind", "args"}
    if unknown:
        raise ValidationError(f"unknown keys {sorted(unknown)}", path)
    kind = NoiseKind.parse(value.get("kind", "Uniform"), f"{path}.kind")
    default = (-1.0, 1.0) if kind is NoiseKind.UNIFORM else (0.0, 1.0)
    args = value.get("args", list(default))
    if not isinstance(args, (list, tuple)) or len(args) != 2:
        raise ValidationError("expected two parameters", f"{path}.args")
    a, b = (_real(x, f"{path}.args[{i}]") for i, x in enumerate(args))
    if kind is NoiseKind.UNIFORM and not a < b:
        raise ValidationError(f"uniform bounds need lo < hi, got [{a}, {b}]", f"{path}.args")
    if kind is NoiseKind.NORMAL and not b > 0:
        raise ValidationError(f"normal std must be > 0, got {b}", f"{path}.args")
    return NoiseDistribution(kind, (a, b))


def _kernel(value, path):
    if isinstance(value, str):
        value = {"kind": value}
    value = _mapping(value, path)
    unknown = set(value) - {"kind", "bandwidth"}
    if unknown:
        raise ValidationError(f"unknown keys {sorted(unknown)}", path)
    kind = KernelKind.parse(value.get("kind", "Gaussian"), f"{path}.kind")
    bandwidth = _real(value.get("bandwidth", 0.1), f"{path}.bandwidth")
    if bandwidth <= 0:
        raise ValidationError(f"bandwidth must be > 0, got {bandwidth}", f"{path}.bandwidth")
    return KernelSpec(kind, bandwidth)


def _graph(value, path):
    value = _mapping(value, path)
    unknown = set(value) - {"num_nodes", "edges", "hidden"}
    if unknown:
        raise ValidationError(f"unknown keys {sorted(unknown)}", path)
    if "num_nodes" not in value:
        raise ValidationError("required field", f"{path}.num_nodes")
    n = _int(value["num_nodes"], f"{path}.num_nodes", 1)
    edges = []
    for k, edge in enumerate(value.get("edges", []) or []):
        epath = f"{path}.edges[{k}]"
        if not isinstance(edge, (list, tuple)) or len(edge) != 2:
            raise ValidationError("expected a [parent, child] pair", epath)
        j, i = _int(edge[0], epath, 0), _int(edge[1], epath, 0)
        if i >= n or j >= n:
            raise ValidationError(f"node out of range for num_nodes={n}", epath)
        if not j < i:
            raise ValidationError("edges must follow index order (parent < child)", epath)
        edges.append((j, i))
    if len(set(edges)) != len(edges):
        raise ValidationError("duplicate edges", f"{path}.edges")
    hidden = value.get("hidden")
    if hidden is not None:
        if not isinstance(hidden, (list, tuple)):
            raise ValidationError("expected a list of node ids", f"{path}.hidden")
        hidden = tuple(sorted({_int(h, f"{path}.hidden", 0) for h in hidden}))
        if hidden and hidden[-1] >= n:
            raise ValidationError(f"node out of range for num_nodes={n}", f"{path}.hidden")
    return PredefinedGraph(n, tuple(sorted(edges, key=lambda e: (e[1], e[0]))), hidden)


_QUERY_KEYS = {"kind", "T", "Y", "t", "c", "X", "x", "V_F", "v_F", "y"}


def _queries(value, path):
    if not isinstance(value, (list, tuple)) or not value:
        raise ValidationError("expected a non-empty list of queries", path)
    out = []
    for k, q in enumerate(value):
        qpath = f"{path}[{k}]"
        q = dict(_mapping(q, qpath))
        unknown = set(q) - _QUERY_KEYS
        if unknown:
            raise ValidationError(f"unknown keys {sorted(unknown)}", qpath)
        for key in ("kind", "T", "Y", "t", "c"):
            if key not in q:
                raise ValidationError("required field", f"{qpath}.{key}")
        q["kind"] = QueryType.parse(q["kind"], f"{qpath}.kind").value
        out.append(q)
    return tuple(out)


_PARSERS = {
    "num_nodes_range": lambda v, p: _interval(v, p, 1),
    "variable_dimensionality": lambda v, p: _interval(v, p, 1),
    "expected_edges": _n_expr,
    "hidden_proportion": _real,
    "markovian": _bool,
    "semi_markovian": _bool,
    "predefined_graph": lambda v, p: None if v is None else _graph(v, p),
    "mechanism_family": MechanismFamily.parse,
    "mechanism_args": lambda v, p: copy.deepcopy(_mapping(v or {}, p)),
    "variable_type": VariableType.parse,
    "cardinality_range": lambda v, p: _interval(v, p, 2),
    "discrete_sampling": DiscreteSampling.parse,
    "noise_mode": NoiseMode.parse,
    "noise_distribution": _noise,
    "noise_regions": _expr,
    "query_type": QueryType.parse,
    "queries_per_scm": lambda v, p: _int(v, p, 1),
    "specific_queries": lambda v, p: None if v is None else _queries(v, p),
    "allow_nan_queries": _bool,
    "disable_queries": _bool,
    "ctf_te_form": CtfTeForm.parse,
    "kernel": _kernel,
    "num_samples": lambda v, p: _int(v, p, 1),
}


def soi_from_mapping(doc: dict) -> SpaceOfInterest:
    """Validate a raw mapping and return a :class:`SpaceOfInterest`."""
    if not isinstance(doc, dict):
        raise ConfigSyntaxError("top level of a SoI document must be a mapping")
    unknown = sorted(set(doc) - set(KEYS))
    if unknown:
        raise ValidationError(f"unknown keys {unknown}")
    if "expected_edges" not in doc or doc["expected_edges"] is None:
        raise ValidationError("required field", "expected_edges")

    values = {key: _PARSERS[key](doc[key], key) for key in KEYS if key in doc}

    if values.get("variable_dimensionality", (1, 1)) != (1, 1):
        raise ValidationError("only one-dimensional variables are supported", "variable_dimensionality")
    hp = values.get("hidden_proportion", 0.0)
    if not 0.0 <= hp <= 1.0:
        raise ValidationError(f"must lie in [0, 1], got {hp}", "hidden_proportion")
    markovian = values.get("markovian", True)
    semi = values.get("semi_markovian", False)
    if markovian and semi:
        raise ConflictError("markovian and semi_markovian are mutually exclusive", "semi_markovian")
    if not markovian and not semi:
        raise ConflictError("exactly one of markovian / semi_markovian must be set", "markovian")

    vtype = values.get("variable_type", VariableType.CONTINUOUS)
    if "mechanism_family" not in values and vtype is VariableType.DISCRETE:
        values["mechanism_family"] = MechanismFamily.TABULAR
    family = values.get("mechanism_family", MechanismFamily.LINEAR)
    if (family is MechanismFamily.TABULAR) != (vtype is VariableType.DISCRETE):
        raise ValidationError(
            f"mechanism family {family.value} is incompatible with variable type {vtype.value}",
            "mechanism_family",
        )
    if vtype is VariableType.CONTINUOUS:
        defaults = {f.name: f.default for f in fields(SpaceOfInterest) if f.name in _DISCRETE_ONLY}
        ignored = [k for k in _DISCRETE_ONLY if k in values and values[k] != defaults[k]]
        if ignored:
            warnings.warn(f"ignored for continuous variables: {', '.join(ignored)}", SoiWarning, stacklevel=3)
    else:
        noise = values.get("noise_distribution", NoiseDistribution())
        if noise.kind is not NoiseKind.UNIFORM:
            raise ValidationError("tabular mechanisms need a bounded (Uniform) noise", "noise_distribution")
        if values.get("noise_mode", NoiseMode.ADDITIVE) is not NoiseMode.ADDITIVE:
            warnings.warn("noise_mode is ignored for tabular mechanisms", SoiWarning, stacklevel=3)
    if values.get("ctf_te_form") is CtfTeForm.PROBABILITY and vtype is not VariableType.DISCRETE:
        raise ValidationError("probability-form Ctf-TE needs discrete variables", "ctf_te_form")
    return SpaceOfInterest(**values)


def soi_to_mapping(soi: SpaceOfInterest) -> dict[str, Any]:
    """Inverse of :func:`soi_from_mapping`; every field is written explicitly."""
    out: dict[str, Any] = {}
    for f in fields(SpaceOfInterest):
        value = getattr(soi, f.name)
        if isinstance(value, Expr):
            value = value.text
        elif isinstance(value, enum.Enum):
            value = value.value
        elif isinstance(value, tuple) and f.name.endswith(("_range", "dimensionality")):
            value = list(value)
        elif isinstance(value, NoiseDistribution):
            value = {"kind": value.kind.value, "args": list(value.args)}
        elif isinstance(value, KernelSpec):
            value = {"kind": value.kind.value, "bandwidth": value.bandwidth}
        elif isinstance(value, PredefinedGraph):
            value = {
                "num_nodes": value.num_nodes,
                "edges": [list(e) for e in value.edges],
                "hidden": None if value.hidden is None else list(value.hidden),
            }
        elif f.name == "specific_queries" and value is not None:
            value = [dict(q) for q in value]
        elif f.name == "mechanism_args":
            value = copy.deepcopy(value)
        out[f.name] = value
    return out


def parse_soi(text: str) -> SpaceOfInterest:
    """Parse a YAML/JSON SoI document."""
    return soi_from_mapping(load_document(text))


def load_document(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(f"malformed SoI document: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigSyntaxError("top level of a SoI document must be a mapping")
    return doc


def dump_soi(soi: SpaceOfInterest) -> str:
    return yaml.safe_dump(soi_to_mapping(soi), sort_keys=False)


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` (dotted keys allowed) overrides to a raw document.

    Values are parsed as YAML scalars, so ``--set num_samples=50`` yields an int
    and ``--set 'expected_edges=2*N'`` a string.
    """
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigSyntaxError(f"cannot parse override value {raw!r}: {exc}") from None
        parts = key.strip().split(".")
        target = doc
        for part in parts[:-1]:
            nxt = target.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                target[part] = nxt
            target = nxt
        target[parts[-1]] = value
    return doc


def soi_hash(soi: SpaceOfInterest) -> str:
    canonical = json.dumps(soi_to_mapping(soi), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def edge_probability_soi(edge_prob: float, **kwargs) -> SpaceOfInterest:
    """Convenience constructor for grids parameterised by edge probability.

    An edge probability ``p`` corresponds to expected degree ``p (N - 1) / 2``
    and hence ``p N (N - 1) / 2`` expected edges.
    """
    doc = {"expected_edges": f"{edge_prob!r} * N * (N - 1) / 2"}
    doc.update(kwargs)
    return soi_from_mapping(doc)

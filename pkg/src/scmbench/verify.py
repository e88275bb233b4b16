"""Statistical checks that sampled SCMs behave as the three causal levels require.

* L1: every d-separation in the graph shows up as a conditional independence
  in forward-sampled data (per-stratum chi-square tests).
* L2: the three do-calculus rules, on univariate ``(X, Y, Z, W)`` tuples whose
  graphical precondition holds, give matching distributions on both sides.
* L3: composition, effectiveness and reversibility hold exactly on individual
  noise realizations.

Composite tests are made of per-stratum chi-square tests.  A stratum that
fails the adequacy filter or collapses to a degenerate table is skipped;
Benjamini-Hochberg runs over the remaining p-values of each composite, which
fails iff any corrected test rejects and is skipped iff every stratum was.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTable, NotDiscrete, NotMarkovian, TooFewNodes
from .graph import ancestors, d_separated, graph_surgery
from .rng import stream
from .scm import Scm, forward_sample
from .stats import bh_correct, chi2_independence, koehler_ok

PASS, FAIL, SKIP = "pass", "fail", "skip"


@dataclass
class StratumRecord:
    condition: tuple
    status: str
    p_value: float | None = None
    reason: str | None = None
    count: int = 1  # exact checks fold many identical outcomes into one record


@dataclass
class TestRecord:
    __test__ = False  # keep pytest from collecting this as a test class
    group: str
    variables: dict
    strata: list[StratumRecord] = field(default_factory=list)
    status: str = SKIP

    def to_json(self) -> dict:
        return {
            "group": self.group,
            "variables": self.variables,
            "status": self.status,
            "strata": [
                {"condition": list(s.condition), "status": s.status, "p_value": s.p_value, "reason": s.reason, "count": s.count}
                for s in self.strata
            ],
        }


def _tally(weighted) -> dict:
    out = {"total": 0, PASS: 0, FAIL: 0, SKIP: 0}
    for status, k in weighted:
        out["total"] += k
        out[status] += k
    return out


@dataclass
class VerificationResult:
    level: str
    records: list[TestRecord] = field(default_factory=list)

    def composite_counts(self, group: str | None = None) -> dict:
        return _tally((r.status, 1) for r in self.records if group is None or r.group == group)

    def test_counts(self, group: str | None = None) -> dict:
        return _tally(
            (s.status, s.count) for r in self.records if group is None or r.group == group for s in r.strata
        )

    @property
    def groups(self) -> list[str]:
        return sorted({r.group for r in self.records})

    @property
    def pass_rate(self) -> float:
        c = self.composite_counts()
        return c[PASS] / c["total"] if c["total"] else float("nan")

    def extend(self, other: "VerificationResult") -> "VerificationResult":
        self.records.extend(other.records)
        return self

    def summary(self) -> dict:
        rows = {g: {"composite": self.composite_counts(g), "tests": self.test_counts(g)} for g in self.groups}
        return {
            "level": self.level,
            "groups": rows,
            "total": {"composite": self.composite_counts(), "tests": self.test_counts()},
            "composite_pass_rate": self.pass_rate,
        }


def _require_discrete_markovian(m: Scm):
    if not m.discrete:
        raise NotDiscrete("statistical verification needs discrete variables")
    if m.graph.hidden:
        raise NotMarkovian("statistical verification needs every variable observed")


def _stratum_test(table: np.ndarray, condition: tuple) -> StratumRecord:
    if table.sum() == 0:
        return StratumRecord(condition, SKIP, reason="empty")
    try:
        if not koehler_ok(table):
            return StratumRecord(condition, SKIP, reason="too few samples")
        return StratumRecord(condition, PASS, chi2_independence(table))
    except DegenerateTable:
        return StratumRecord(condition, SKIP, reason="degenerate")


def _finish(rec: TestRecord, alpha: float) -> TestRecord:
    tested = [s for s in rec.strata if s.status != SKIP]
    if not tested:
        rec.status = SKIP
        return rec
    reject = bh_correct([s.p_value for s in tested], alpha)
    for s, r in zip(tested, reject):
        s.status = FAIL if r else PASS
    rec.status = FAIL if reject.any() else PASS
    return rec


def _encode(data: np.ndarray, cols, cards) -> tuple[np.ndarray, int]:
    key = np.zeros(data.shape[0], dtype=np.int64)
    size = 1
    for c in cols:
        key = key * cards[c] + data[:, c]
        size *= cards[c]
    return key, size


def _decode(k: int, cols, cards) -> tuple:
    out = []
    for c in reversed(cols):
        out.append(k % cards[c])
        k //= cards[c]
    return tuple(int(v) for v in reversed(out))


# -- L1 ------------------------------------------------------------------------------

def markov_triples(m: Scm, max_cond: int = 3, min_cond: int = 1):
    """Unordered pairs ``A < B`` and sets ``C`` of size min_cond..max_cond with ``A _||_ B | C``."""
    nodes = m.graph.nodes
    for a, b in itertools.combinations(nodes, 2):
        rest = [v for v in nodes if v not in (a, b)]
        for k in range(min_cond, max_cond + 1):
            for cset in itertools.combinations(rest, k):
                if d_separated(m.graph, {a}, {b}, set(cset)):
                    yield a, b, cset


def verify_markov(
    m: Scm,
    n: int,
    alpha: float = 0.05,
    max_cond: int = 3,
    rng: np.random.Generator | None = None,
    min_cond: int = 1,
) -> VerificationResult:
    _require_discrete_markovian(m)
    rng = rng if rng is not None else np.random.default_rng(0)
    data = forward_sample(m, n, rng).full
    cards = m.cardinalities
    result = VerificationResult("l1")
    for a, b, cset in markov_triples(m, max_cond, min_cond):
        ca, cb = cards[a], cards[b]
        key, n_strata = _encode(data, cset, cards)
        cell = (key * ca + data[:, a]) * cb + data[:, b]
        counts = np.bincount(cell, minlength=n_strata * ca * cb).reshape(n_strata, ca, cb)
        rec = TestRecord(f"|C|={len(cset)}", {"A": a, "B": b, "C": list(cset)})
        for k in range(n_strata):
            rec.strata.append(_stratum_test(counts[k], _decode(k, cset, cards)))
        result.records.append(_finish(rec, alpha))
    return result


# -- L2 ------------------------------------------------------------------------------

RULES = ("rule 1", "rule 2", "rule 3")


def rule_applies(m: Scm, rule: int, x: int, y: int, z: int, w: int) -> bool:
    g = m.graph
    g_x = graph_surgery(g, remove_incoming={x})
    if rule == 1:
        return d_separated(g_x, {y}, {z}, {x, w})
    if rule == 2:
        return d_separated(graph_surgery(g, remove_incoming={x}, remove_outgoing={z}), {y}, {z}, {x, w})
    # Z(W) must be non-empty for a univariate Z: Z may not be an ancestor of W once X is cut
    if z in ancestors(g_x, {w}):
        return False
    return d_separated(graph_surgery(g, remove_incoming={x, z}), {y}, {z}, {x, w})


def do_calculus_tuples(m: Scm):
    for x, y, z, w in itertools.permutations(m.graph.nodes, 4):
        for rule in (1, 2, 3):
            if rule_applies(m, rule, x, y, z, w):
                yield rule, x, y, z, w


class _Datasets:
    """Interventional samples, each drawn once from its own keyed stream."""

    def __init__(self, m: Scm, n: int, seed: int):
        self.m, self.n, self.seed = m, n, seed
        self.cache: dict[tuple, np.ndarray] = {}

    def get(self, side: int, do: tuple[tuple[int, int], ...]) -> np.ndarray:
        key = (side, do)
        if key not in self.cache:
            flat = [v for pair in do for v in pair]
            u = self.m.draw_noise(self.n, stream(self.seed, "l2-data", side, *flat))
            self.cache[key] = self.m.evaluate(u, dict(do))
        return self.cache[key]

    def drop(self, keep):
        self.cache = {k: v for k, v in self.cache.items() if keep(k)}


def _histogram(data: np.ndarray, y: int, card_y: int, conds: dict[int, int]) -> np.ndarray:
    mask = np.ones(data.shape[0], dtype=bool)
    for v, val in conds.items():
        mask &= data[:, v] == val
    return np.bincount(data[mask, y], minlength=card_y)


def verify_do_calculus(m: Scm, n: int, alpha: float = 0.05, seed: int = 0) -> VerificationResult:
    """Compare both sides of every applicable rule with two-sample chi-square tests."""
    _require_discrete_markovian(m)
    cards = m.cardinalities
    data = _Datasets(m, n, seed)
    result = VerificationResult("l2")
    tuples = sorted(do_calculus_tuples(m), key=lambda t: (t[1], t[3], t[0], t[2], t[4]))
    current = None
    for rule, x, y, z, w in tuples:
        if current != (x, z):
            # datasets under do(X, Z) are only reused within one (X, Z) group
            data.drop(lambda k: len(k[1]) == 1)
            current = (x, z)
        rec = TestRecord(f"rule {rule}", {"X": x, "Y": y, "Z": z, "W": w})
        for xv, zv, wv in itertools.product(range(cards[x]), range(cards[z]), range(cards[w])):
            if rule == 1:
                left = _histogram(data.get(1, ((x, xv),)), y, cards[y], {z: zv, w: wv})
                right = _histogram(data.get(0, ((x, xv),)), y, cards[y], {w: wv})
            elif rule == 2:
                left = _histogram(data.get(0, ((x, xv), (z, zv))), y, cards[y], {w: wv})
                right = _histogram(data.get(0, ((x, xv),)), y, cards[y], {z: zv, w: wv})
            else:
                left = _histogram(data.get(0, ((x, xv), (z, zv))), y, cards[y], {w: wv})
                right = _histogram(data.get(0, ((x, xv),)), y, cards[y], {w: wv})
            table = np.vstack([left, right])
            cond = (xv, zv, wv)
            if left.sum() == 0 or right.sum() == 0:
                rec.strata.append(StratumRecord(cond, SKIP, reason="empty"))
            else:
                rec.strata.append(_stratum_test(table, cond))
        result.records.append(_finish(rec, alpha))
    return result


# -- L3 ------------------------------------------------------------------------------

def sample_partition(nodes, rng: np.random.Generator) -> tuple[list[int], list[int], list[int]]:
    """Random subset of size in ``[3, |V|]`` split into three non-empty parts."""
    nodes = list(nodes)
    if len(nodes) < 3:
        raise TooFewNodes(f"need at least 3 nodes, have {len(nodes)}")
    k = int(rng.integers(3, len(nodes) + 1))
    subset = [int(v) for v in rng.permutation(nodes)[:k]]
    i, j = sorted(int(c) for c in rng.choice(np.arange(1, k), size=2, replace=False))
    return sorted(subset[:i]), sorted(subset[i:j]), sorted(subset[j:])


def _exact(group: str, variables: dict, ok: np.ndarray, premise: np.ndarray | None = None) -> TestRecord:
    tested = ok if premise is None else ok[premise]
    n_total = ok.size
    n_fail = int(np.count_nonzero(~tested))
    n_pass = tested.size - n_fail
    strata = [
        StratumRecord(("rows",), status, reason=reason, count=k)
        for status, k, reason in ((PASS, n_pass, None), (FAIL, n_fail, None), (SKIP, n_total - tested.size, "premise false"))
        if k
    ]
    status = SKIP if tested.size == 0 else (FAIL if n_fail else PASS)
    return TestRecord(group, variables, strata, status)


def verify_ctf_axioms(
    m: Scm, n_noise: int, rng: np.random.Generator, n_partitions: int = 1
) -> VerificationResult:
    if m.n < 3:
        raise TooFewNodes(f"need at least 3 nodes, have {m.n}")
    result = VerificationResult("l3")
    for _ in range(n_partitions):
        X, Y, W = sample_partition(m.graph.nodes, rng)
        u = m.draw_noise(n_noise, rng)
        values = forward_sample(m, n_noise, rng).full  # intervention values: realizable rows
        do_x = {v: values[:, v] for v in X}
        variables = {"X": X, "Y": Y, "W": W}

        # composition: with w := W_x(u), Y_{x,w}(u) = Y_x(u)
        base = m.evaluate(u, do_x)
        both = m.evaluate(u, {**do_x, **{v: base[:, v] for v in W}})
        ok = np.all(both[:, Y] == base[:, Y], axis=1)
        result.records.append(_exact("composition", variables, ok))

        # effectiveness: X_{x,w}(u) = x
        do_w = {v: values[:, v] for v in W}
        xw = m.evaluate(u, {**do_x, **do_w})
        ok = np.all(xw[:, X] == values[:, X], axis=1)
        result.records.append(_exact("effectiveness", variables, ok))

        # reversibility on one variable from Y and one from W
        yv, wv = int(rng.choice(Y)), int(rng.choice(W))
        coin = rng.random(n_noise) < 0.5
        w_val = np.where(coin, base[:, wv], values[:, wv])
        y_val = m.evaluate(u, {**do_x, wv: w_val})[:, yv]
        w_back = m.evaluate(u, {**do_x, yv: y_val})[:, wv]
        premise = w_back == w_val
        ok = base[:, yv] == y_val
        result.records.append(_exact("reversibility", {"X": X, "Y": [yv], "W": [wv]}, ok, premise))
    return result

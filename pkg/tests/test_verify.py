import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import brute_d_separated
from scmbench.errors import NotDiscrete, NotMarkovian, TooFewNodes
from scmbench.graph import CausalGraph, sample_dag
from scmbench.mechanisms import NoiseSpec, RegionalMechanism
from scmbench.rng import stream
from scmbench.scm import Scm, sample_scm
from scmbench.soi import edge_probability_soi
from scmbench.verify import (
    FAIL,
    PASS,
    SKIP,
    StratumRecord,
    TestRecord,
    _finish,
    _stratum_test,
    markov_triples,
    rule_applies,
    sample_partition,
    verify_ctf_axioms,
    verify_do_calculus,
    verify_markov,
)

UNIT = NoiseSpec("uniform", (0.0, 1.0))


def _fair_scm(n, edges):
    """Binary SCM on ``edges``; each node is its parents' xor on half the noise and a fair coin otherwise."""
    g = CausalGraph.from_edges(n, edges)
    mechs = []
    for v in range(n):
        k = len(g.parents[v])
        xor = [bin(c).count("1") % 2 for c in range(2**k)]
        table = np.array([xor, [0] * 2**k, [1] * 2**k]) if k else np.array([[0], [1]])
        bounds = np.array([0.0, 0.5, 0.75, 1.0]) if k else np.array([0.0, 0.5, 1.0])
        mechs.append(RegionalMechanism((2,) * k, 2, bounds, table))
    return Scm(g, tuple(mechs), (UNIT,) * n, (2,) * n)


def _discrete(n, p=0.5, **kw):
    base = dict(num_nodes_range=[n, n], variable_type="Discrete", noise_distribution={"kind": "Uniform", "args": [0, 1]})
    base.update(kw)
    return edge_probability_soi(p, **base)


def _brute_triples(n, edges, max_cond, min_cond=1):
    out = []
    for a, b in itertools.combinations(range(n), 2):
        rest = [v for v in range(n) if v not in (a, b)]
        for k in range(min_cond, max_cond + 1):
            for c in itertools.combinations(rest, k):
                if brute_d_separated(n, edges, {a}, {b}, set(c)):
                    out.append((a, b, c))
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.floats(0.0, 2.5), st.integers(0, 2**31), st.integers(0, 1))
def test_markov_triples_match_path_enumeration(n, d, seed, lo):
    g = sample_dag(n, d, np.random.default_rng(seed))
    m = _fair_scm(n, sorted(g.edges))
    assert list(markov_triples(m, 3, lo)) == _brute_triples(n, sorted(g.edges), 3, lo)


def _cut(edges, incoming=(), outgoing=()):
    return [(i, j) for i, j in edges if j not in incoming and i not in outgoing]


def _brute_ancestors(edges, w):
    anc, frontier = {w}, {w}
    while frontier:
        frontier = {i for i, j in edges if j in frontier} - anc
        anc |= frontier
    return anc


def _brute_rule(n, edges, rule, x, y, z, w):
    if rule == 1:
        return brute_d_separated(n, _cut(edges, {x}), {y}, {z}, {x, w})
    if rule == 2:
        return brute_d_separated(n, _cut(edges, {x}, {z}), {y}, {z}, {x, w})
    if z in _brute_ancestors(_cut(edges, {x}), w):
        return False
    return brute_d_separated(n, _cut(edges, {x, z}), {y}, {z}, {x, w})


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 6), st.floats(0.5, 3.0), st.integers(0, 2**31))
def test_rule_preconditions_match_path_enumeration(n, d, seed):
    g = sample_dag(n, d, np.random.default_rng(seed))
    edges = sorted(g.edges)
    m = _fair_scm(n, edges)
    for x, y, z, w in itertools.permutations(range(n), 4):
        for rule in (1, 2, 3):
            assert rule_applies(m, rule, x, y, z, w) == _brute_rule(n, edges, rule, x, y, z, w)


def test_rule_two_on_unconfounded_edge():
    # X=0 -> Y=1, plus isolated Z=2 and W=3: do(z) and observing z agree
    m = _fair_scm(4, [(0, 1)])
    assert rule_applies(m, 2, 0, 1, 2, 3)
    # and with Z the cause of Y and nothing else, rule 2 on (Z -> Y) holds given do(X)
    m = _fair_scm(4, [(1, 2)])
    assert rule_applies(m, 2, 0, 2, 1, 3)
    res = verify_do_calculus(m, 20_000, seed=1)
    rule2 = [r for r in res.records if r.group == "rule 2" and r.variables == {"X": 0, "Y": 2, "Z": 1, "W": 3}]
    assert rule2 and rule2[0].status == PASS


def test_rule_three_excludes_ancestor_of_w():
    # Z=1 -> W=3 with X=0 and Y=2 disconnected: Z is an ancestor of W after cutting X
    m = _fair_scm(4, [(1, 3)])
    assert not rule_applies(m, 3, 0, 2, 1, 3)
    # swapping the roles so that W -> Z makes the tuple admissible
    assert rule_applies(m, 3, 0, 2, 3, 1)


def test_uniform_table_passes_with_p_one():
    rec = _stratum_test(np.array([[50, 50], [50, 50]]), ())
    assert rec.status == PASS and rec.p_value == pytest.approx(1.0)


def test_dependent_table_fails():
    rec = TestRecord("g", {})
    rec.strata = [_stratum_test(np.array([[90, 10], [10, 90]]), (0,)), _stratum_test(np.array([[50, 50], [50, 50]]), (1,))]
    _finish(rec, 0.05)
    assert rec.status == FAIL
    assert [s.status for s in rec.strata] == [FAIL, PASS]


def test_skips():
    assert _stratum_test(np.zeros((2, 2), dtype=int), ()).status == SKIP
    assert _stratum_test(np.array([[3, 3], [3, 3]]), ()).reason == "too few samples"
    assert _stratum_test(np.array([[40, 60], [0, 0]]), ()).reason == "degenerate"
    rec = _finish(TestRecord("g", {}, [StratumRecord((), SKIP, reason="empty")]), 0.05)
    assert rec.status == SKIP


def test_disconnected_pass_rate_near_one_minus_alpha():
    m = _fair_scm(3, [])
    assert len(list(markov_triples(m, 1, 0))) == 6  # all three pairs, given nothing and given the third node
    res = None
    for k in range(60):
        r = verify_markov(m, 4000, 0.05, 1, stream(3, "l1", k), min_cond=0)
        res = r if res is None else res.extend(r)
    counts = res.composite_counts()
    assert counts["total"] == 360 and counts[SKIP] == 0
    # each composite is a BH family under the null, so its failure rate is at most alpha
    assert 0.9 <= res.pass_rate <= 1.0


def test_dependent_pair_is_excluded():
    m = _fair_scm(3, [(0, 1)])
    pairs = {(a, b) for a, b, _ in markov_triples(m, 1, 0)}
    assert (0, 1) not in pairs and (0, 2) in pairs


def test_skip_counts_grow_with_conditioning_size():
    m = sample_scm(_discrete(6, 0.2, cardinality_range=[3, 3]), stream(4, "scm", 0))
    res = verify_markov(m, 2000, rng=stream(4, "l1", 0))
    rates = []
    for g in res.groups:
        c = res.test_counts(g)
        rates.append(c[SKIP] / c["total"])
    assert rates == sorted(rates) and rates[-1] > rates[0]


def test_markov_on_random_scms():
    for k in range(4):
        m = sample_scm(_discrete(5, 0.4, cardinality_range=[2, 3], noise_regions="5"), stream(5, "scm", k))
        res = verify_markov(m, 20_000, rng=stream(5, "l1", k))
        s = res.summary()
        assert s["level"] == "l1"
        assert s["total"]["composite"]["total"] == len(list(markov_triples(m)))


def test_errors():
    cont = sample_scm(edge_probability_soi(0.5, num_nodes_range=[4, 4]), stream(0, "scm", 0))
    with pytest.raises(NotDiscrete):
        verify_markov(cont, 100)
    m = _fair_scm(3, [(0, 1), (0, 2)])
    hidden = Scm(m.graph.with_hidden([0]), m.mechanisms, m.noises, m.cardinalities)
    with pytest.raises(NotMarkovian):
        verify_do_calculus(hidden, 100)
    with pytest.raises(TooFewNodes):
        verify_ctf_axioms(_fair_scm(2, []), 10, np.random.default_rng(0))


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**31))
def test_partition_invariants(n, seed):
    x, y, w = sample_partition(range(n), np.random.default_rng(seed))
    parts = x + y + w
    assert x and y and w
    assert len(set(parts)) == len(parts) and 3 <= len(parts) <= n
    assert set(parts) <= set(range(n))


def test_l3_discrete_zero_failures():
    for k in range(6):
        m = sample_scm(_discrete(5, 0.5, cardinality_range=[2, 4]), stream(6, "scm", k))
        res = verify_ctf_axioms(m, 2000, stream(6, "l3", k), n_partitions=3)
        c = res.composite_counts()
        assert c[FAIL] == 0 and c["total"] == 9
        assert res.test_counts("composition")[PASS] == 3 * 2000


def test_l3_continuous_zero_failures():
    for family in ("Linear", "NeuralNet"):
        m = sample_scm(edge_probability_soi(0.6, num_nodes_range=[5, 5], mechanism_family=family), stream(7, "scm", 0))
        res = verify_ctf_axioms(m, 1000, stream(7, "l3", 0), n_partitions=2)
        assert res.composite_counts()[FAIL] == 0


def test_l3_records_serialize():
    m = _fair_scm(3, [(0, 1), (1, 2)])
    res = verify_ctf_axioms(m, 100, np.random.default_rng(0))
    assert res.groups == ["composition", "effectiveness", "reversibility"]
    doc = res.records[0].to_json()
    assert doc["status"] == PASS and doc["strata"][0]["count"] == 100

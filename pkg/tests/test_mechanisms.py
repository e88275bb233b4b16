import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scmbench.errors import DomainError, ParamError, TableBudgetError
from scmbench.mechanisms import (
    LinearMechanism,
    NeuralMechanism,
    NoiseSpec,
    RegionalMechanism,
    all_tables,
    eval_mechanism,
    mechanism_from_json,
    sample_continuous_mechanism,
    sample_noise,
    sample_regional,
    sample_regional_exhaustive,
    sample_regional_rejection,
    sample_regional_unbiased,
)
from scmbench.soi import DiscreteSampling, MechanismFamily, NoiseMode

UNIT = (0.0, 1.0)


def _brute_tables(card, n_configs):
    return {tuple(t) for t in itertools.product(range(card), repeat=n_configs)}


def _rows(mech):
    return [tuple(int(v) for v in row) for row in mech.mappings]


def test_single_region_is_deterministic():
    f = sample_regional_rejection((2,), 3, 1, UNIT, np.random.default_rng(0))
    assert f.n_regions == 1
    pa = np.array([[0], [1]] * 50)
    u = np.random.default_rng(1).uniform(size=100)
    out = f.evaluate(pa, u)
    assert np.array_equal(out, f.mappings[0][pa[:, 0]])


def test_rejection_caps_regions_for_parentless_binary():
    f = sample_regional_rejection((), 2, 10, UNIT, np.random.default_rng(0))
    assert f.n_regions == 2
    assert sorted(_rows(f)) == [(0,), (1,)]


def test_rejection_one_binary_parent_gets_all_tables():
    f = sample_regional_rejection((2,), 2, 4, UNIT, np.random.default_rng(5))
    assert set(_rows(f)) == _brute_tables(2, 2)
    assert len(_rows(f)) == 4


def test_exhaustive_examples():
    f = sample_regional_exhaustive((), 2, UNIT, np.random.default_rng(0))
    assert sorted(_rows(f)) == [(0,), (1,)]
    g = sample_regional_exhaustive((2, 2), 2, UNIT, np.random.default_rng(0))
    assert g.n_regions == 16


@pytest.mark.parametrize("card,pcards", [(2, ()), (3, ()), (2, (2,)), (3, (2,)), (2, (2, 2)), (2, (3,)), (4, (2,)), (2, (2, 2, 2))])
def test_exhaustive_matches_enumeration(card, pcards):
    f = sample_regional_exhaustive(pcards, card, UNIT, np.random.default_rng(3))
    rows = _rows(f)
    n_configs = math.prod(pcards)
    assert len(rows) == card**n_configs
    assert set(rows) == _brute_tables(card, n_configs)


def test_all_tables_enumeration():
    assert {tuple(r) for r in all_tables(3, 2).tolist()} == _brute_tables(3, 2)


def test_exhaustive_over_budget():
    with pytest.raises(TableBudgetError):
        sample_regional_exhaustive((2, 2, 2, 2, 2), 2, UNIT, np.random.default_rng(0))
    with pytest.raises(TableBudgetError):
        sample_regional_exhaustive((2, 2), 2, UNIT, np.random.default_rng(0), budget=10)


def test_rejection_budget():
    with pytest.raises(TableBudgetError):
        sample_regional_rejection((10, 10, 10), 3, 2000, UNIT, np.random.default_rng(0))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.lists(st.integers(2, 3), max_size=3), st.integers(1, 40), st.integers(0, 2**31))
def test_rejection_never_duplicates(card, pcards, regions, seed):
    f = sample_regional_rejection(tuple(pcards), card, regions, UNIT, np.random.default_rng(seed))
    rows = _rows(f)
    assert len(set(rows)) == len(rows) == min(regions, card ** math.prod(pcards))


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(list(DiscreteSampling)),
    st.integers(2, 3),
    st.lists(st.integers(2, 3), max_size=2),
    st.integers(1, 12),
    st.integers(0, 2**31),
)
def test_boundaries_partition_support(strategy, card, pcards, regions, seed):
    f = sample_regional(strategy, tuple(pcards), card, regions, (-1.0, 1.0), np.random.default_rng(seed))
    b = f.boundaries
    assert b[0] == -1.0 and b[-1] == 1.0 and np.all(np.diff(b) > 0)
    # every point of a fine scan falls in exactly one region, and each boundary opens its region
    scan = np.linspace(-1.0, 1.0, 2001)
    r = f.region_of(scan)
    assert np.all((r >= 0) & (r < f.n_regions))
    assert np.all(b[r] <= scan) and np.all((scan < b[r + 1]) | (r == f.n_regions - 1))
    assert np.array_equal(f.region_of(b[:-1]), np.arange(f.n_regions))


def test_unbiased_duplicate_rate():
    rng = np.random.default_rng(11)
    hits = 0
    trials = 10_000
    for _ in range(trials):
        rows = _rows(sample_regional_unbiased((2,), 2, 3, UNIT, rng))
        hits += len(set(rows)) < 3
    expected = 1 - (4 * 3 * 2) / 4**3
    assert expected == pytest.approx(0.625)
    assert abs(hits / trials - expected) < 4 * math.sqrt(expected * (1 - expected) / trials)


def test_unbiased_allows_duplicates_with_three_child_values():
    rng = np.random.default_rng(0)
    seen_dup = any(len(set(_rows(sample_regional_unbiased((2,), 3, 12, UNIT, rng)))) < 12 for _ in range(20))
    assert seen_dup


def test_region_frequency():
    f = RegionalMechanism((), 2, np.array([0.0, 0.3, 1.0]), np.array([[0], [1]]))
    u = sample_noise(NoiseSpec("uniform", (0.0, 1.0)), 100_000, np.random.default_rng(0))
    out = f.evaluate(np.zeros((u.size, 0)), u)
    assert abs(out.mean() - 0.7) < 0.01
    assert np.allclose(f.conditional_probs(), [[0.3, 0.7]])


def test_conditional_probs_match_monte_carlo():
    rng = np.random.default_rng(4)
    f = sample_regional_unbiased((2, 3), 3, 7, UNIT, rng)
    n = 60_000
    pa = np.column_stack([rng.integers(0, 2, n), rng.integers(0, 3, n)])
    out = f.evaluate(pa, rng.uniform(size=n))
    probs = f.conditional_probs()
    cfg = pa[:, 0] * 3 + pa[:, 1]
    for k in range(6):
        sel = out[cfg == k]
        for v in range(3):
            p = probs[k, v]
            se = math.sqrt(max(p * (1 - p), 1e-12) / sel.size)
            assert abs(np.mean(sel == v) - p) <= 3 * se + 1e-12


def test_config_index_last_parent_fastest():
    f = RegionalMechanism((2, 3), 6, np.array([0.0, 1.0]), np.arange(6).reshape(1, 6))
    pa = np.array([[a, b] for a in range(2) for b in range(3)])
    assert f.config_index(pa).tolist() == list(range(6))
    assert f.evaluate(pa, np.full(6, 0.5)).tolist() == list(range(6))


def test_regional_rejects_out_of_support_noise():
    f = RegionalMechanism((), 2, np.array([0.0, 0.5, 1.0]), np.array([[0], [1]]))
    with pytest.raises(DomainError):
        f.evaluate(np.zeros((1, 0)), np.array([1.5]))
    assert f.evaluate(np.zeros((1, 0)), np.array([1.0])).tolist() == [1]


def test_regional_validation():
    with pytest.raises(ParamError):
        RegionalMechanism((), 2, np.array([0.0, 0.0, 1.0]), np.array([[0], [1]]))
    with pytest.raises(ParamError):
        RegionalMechanism((), 2, np.array([0.0, 1.0]), np.array([[2]]))
    with pytest.raises(ParamError):
        sample_regional_rejection((), 1, 3, UNIT, np.random.default_rng(0))


def test_constant_table_mechanism():
    f = RegionalMechanism((2,), 2, np.array([0.0, 1.0]), np.array([[1, 1]]))
    assert eval_mechanism(f, np.array([0]), 0.3) == 1
    assert eval_mechanism(f, np.array([1]), 0.9) == 1


def test_linear_arithmetic():
    f = LinearMechanism(np.array([2.0]), NoiseMode.ADDITIVE)
    assert eval_mechanism(f, np.array([3.0]), 0.5) == 6.5
    g = LinearMechanism(np.array([2.0]), NoiseMode.MULTIPLICATIVE)
    assert eval_mechanism(g, np.array([3.0]), 0.5) == 3.0


def test_root_linear_is_pure_noise():
    for mode in NoiseMode:
        f = sample_continuous_mechanism(MechanismFamily.LINEAR, 0, None, np.random.default_rng(0), mode)
        u = np.array([-0.3, 0.7])
        assert np.array_equal(f.evaluate(np.zeros((2, 0)), u), u)


@pytest.mark.parametrize("k", [0, 1, 3, 6])
def test_neural_parameter_count(k):
    f = sample_continuous_mechanism(MechanismFamily.NEURAL_NET, k, None, np.random.default_rng(k))
    assert isinstance(f, NeuralMechanism)
    assert f.n_params == (k * 8 + 8) + (8 * 8 + 8) + (8 * 1 + 1)


def test_neural_matches_manual_forward_pass():
    rng = np.random.default_rng(9)
    f = sample_continuous_mechanism(MechanismFamily.NEURAL_NET, 2, {"hidden_sizes": [4, 3]}, rng)
    x = rng.normal(size=(5, 2))
    u = rng.uniform(-1, 1, 5)
    h = x
    for i, (w, b) in enumerate(f.layers):
        h = h @ w + b
        if i < len(f.layers) - 1:
            h = np.maximum(h, 0.0)
    assert np.allclose(f.evaluate(x, u), h[:, 0] + u)


def test_weights_within_range():
    rng = np.random.default_rng(0)
    ws = np.concatenate([sample_continuous_mechanism(MechanismFamily.LINEAR, 5, None, rng).weights for _ in range(200)])
    assert ws.min() >= -1 and ws.max() <= 1
    assert abs(ws.mean()) < 0.05


def test_continuous_args_rejected():
    with pytest.raises(ParamError):
        sample_continuous_mechanism(MechanismFamily.LINEAR, 1, {"hidden_sizes": [3]}, np.random.default_rng(0))
    with pytest.raises(ParamError):
        sample_continuous_mechanism(MechanismFamily.NEURAL_NET, 1, {"hidden_sizes": [0]}, np.random.default_rng(0))


def test_noise_sampling():
    rng = np.random.default_rng(0)
    assert sample_noise(NoiseSpec("uniform", (0.0, 1.0)), 0, rng).shape == (0,)
    u = sample_noise(NoiseSpec("uniform", (0.0, 1.0)), 100_000, rng)
    assert abs(u.mean() - 0.5) < 0.005
    z = sample_noise(NoiseSpec("normal", (1.0, 2.0)), 100_000, rng)
    assert abs(z.mean() - 1.0) < 0.03 and abs(z.std() - 2.0) < 0.03


@pytest.mark.parametrize("kind", ["regional", "linear", "neural"])
def test_json_round_trip_is_exact(kind):
    rng = np.random.default_rng(2)
    if kind == "regional":
        f = sample_regional_unbiased((2, 3), 3, 5, (-1.0, 1.0), rng)
        pa = np.column_stack([rng.integers(0, 2, 50), rng.integers(0, 3, 50)])
    else:
        fam = MechanismFamily.LINEAR if kind == "linear" else MechanismFamily.NEURAL_NET
        f = sample_continuous_mechanism(fam, 2, None, rng)
        pa = rng.normal(size=(50, 2))
    u = rng.uniform(-1, 1, 50)
    g = mechanism_from_json(f.to_json())
    assert np.array_equal(f.evaluate(pa, u), g.evaluate(pa, u))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_evaluation_is_pure(seed):
    rng = np.random.default_rng(seed)
    f = sample_regional_unbiased((2,), 3, 4, UNIT, rng)
    pa = rng.integers(0, 2, size=(20, 1))
    u = rng.uniform(size=20)
    assert np.array_equal(f.evaluate(pa, u), f.evaluate(pa.copy(), u.copy()))

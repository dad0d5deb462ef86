import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssfl import InvalidInputError
from ssfl.aggregation import (
    AggregationPlan,
    fedavg,
    grouping_average,
    make_groups,
    sample_participants,
)
from ssfl.model import ModelSpec, ParameterState

TOY = ModelSpec("mlp", (1,), 2, "none", widths=())
BN = ModelSpec("mlp", (3,), 2, "batch_norm", widths=(4,))


def const(value, spec=TOY):
    from ssfl.model import network_for
    net = network_for(spec)
    return ParameterState(spec, np.full(net.n_weights, float(value)),
                          np.full(net.n_weights, float(value)), np.full(net.n_stats, float(value)))


def random_state(rng, spec=BN):
    from ssfl.model import network_for
    net = network_for(spec)
    return ParameterState(spec, rng.normal(size=net.n_weights), rng.normal(size=net.n_weights),
                          rng.normal(size=net.n_stats))


def test_sample_all_users_shuffled(rng):
    ids = sample_participants(10, 10, rng)
    assert sorted(ids) == list(range(10))


def test_sample_single(rng):
    for _ in range(20):
        (u,) = sample_participants(7, 1, rng)
        assert 0 <= u < 7


def test_sample_deterministic():
    a = sample_participants(20, 5, np.random.default_rng(3))
    b = sample_participants(20, 5, np.random.default_rng(3))
    assert a == b and len(set(a)) == 5


def test_sample_too_many():
    with pytest.raises(InvalidInputError):
        sample_participants(3, 4, np.random.default_rng(0))


def test_sample_is_uniform():
    rng = np.random.default_rng(0)
    counts = np.zeros(6)
    for _ in range(6000):
        counts[sample_participants(6, 2, rng)] += 1
    np.testing.assert_allclose(counts / 6000, 1 / 3, atol=0.025)


def test_fedavg_constants():
    out = fedavg(const(2.5), [const(2.5)] * 3)
    assert out.global_avg.equal(const(2.5)) and out.group_avgs == []


def test_fedavg_scalar_toy():
    out = fedavg(const(0), [const(1), const(2)])
    assert np.all(out.global_avg.weights == 1.0)
    assert np.all(out.global_avg.momentum == 1.0)


def test_fedavg_empty_round():
    s = const(4)
    out = fedavg(s, [])
    assert out.global_avg.equal(s) and out.global_avg is not s


def test_fedavg_layout_mismatch():
    with pytest.raises(InvalidInputError):
        fedavg(const(0), [const(0, BN)])


def test_grouping_scalar_toy():
    plan = AggregationPlan([1, 2, 3, 4], [[1, 2], [3, 4]])
    users = {1: const(3), 2: const(3), 3: const(6), 4: const(6)}
    out = grouping_average(const(0), users, plan)
    assert [g.weights[0] for g in out.group_avgs] == [2.0, 4.0]
    assert np.all(out.global_avg.weights == 3.0)
    assert fedavg(const(0), list(users.values())).global_avg.weights[0] == pytest.approx(3.6)


def test_grouping_constants():
    plan = AggregationPlan([0, 1, 2], [[0, 1], [2]])
    out = grouping_average(const(-1), [const(-1)] * 3, plan)
    assert out.global_avg.equal(const(-1))
    assert all(g.equal(const(-1)) for g in out.group_avgs)


def test_grouping_global_is_mean_of_groups(rng):
    parts = list(range(7))
    plan = make_groups(parts, 3, rng)
    out = grouping_average(random_state(rng), [random_state(rng) for _ in parts], plan)
    mean = sum(g.weights for g in out.group_avgs) / 3
    np.testing.assert_allclose(out.global_avg.weights, mean, rtol=0, atol=1e-12)


def test_grouping_plan_mismatch(rng):
    plan = AggregationPlan([0, 1], [[0, 1]])
    with pytest.raises(InvalidInputError):
        grouping_average(const(0), {0: const(0), 5: const(0)}, plan)
    with pytest.raises(InvalidInputError):
        grouping_average(const(0), [const(0)], plan)


def test_single_group_matches_fedavg_on_random_states(rng):
    for _ in range(100):
        C = int(rng.integers(1, 9))
        parts = sorted(int(u) for u in rng.choice(20, size=C, replace=False))
        server = random_state(rng)
        users = [random_state(rng) for _ in parts]
        plan = make_groups(parts, 1, rng)
        g = grouping_average(server, dict(zip(parts, users)), plan).global_avg
        f = fedavg(server, users).global_avg
        for a, b in zip(g.components(), f.components()):
            assert np.max(np.abs(a - b), initial=0.0) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.data())
def test_affine_shift(seed, C, data):
    rng = np.random.default_rng(seed)
    S = data.draw(st.integers(1, C))
    server, users = random_state(rng), [random_state(rng) for _ in range(C)]
    plan = make_groups(list(range(C)), S, rng)
    v = rng.normal(size=server.weights.shape)

    def shifted(s):
        return ParameterState(s.spec, s.weights + v, s.momentum, s.norm_stats)

    base = grouping_average(server, users, plan).global_avg.weights
    moved = grouping_average(shifted(server), [shifted(u) for u in users], plan).global_avg.weights
    np.testing.assert_allclose(moved, base + v, atol=1e-12)
    f0 = fedavg(server, users).global_avg.weights
    f1 = fedavg(shifted(server), [shifted(u) for u in users]).global_avg.weights
    np.testing.assert_allclose(f1, f0 + v, atol=1e-12)


def test_permutation_invariance(rng):
    server, users = random_state(rng), {u: random_state(rng) for u in range(6)}
    a = grouping_average(server, users, AggregationPlan(list(range(6)), [[0, 1, 2], [3, 4, 5]]))
    b = grouping_average(server, users, AggregationPlan([5, 3, 1, 0, 2, 4], [[4, 5, 3], [2, 0, 1]]))
    np.testing.assert_allclose(a.global_avg.weights, b.global_avg.weights, atol=1e-12)
    f1 = fedavg(server, list(users.values())).global_avg.weights
    f2 = fedavg(server, list(users.values())[::-1]).global_avg.weights
    np.testing.assert_allclose(f1, f2, atol=1e-12)


@pytest.mark.parametrize("C,S,sizes", [(4, 2, [2, 2]), (5, 2, [3, 2]), (7, 3, [3, 2, 2]), (3, 3, [1, 1, 1])])
def test_group_sizes(C, S, sizes, rng):
    plan = make_groups(list(range(C)), S, rng)
    assert [len(g) for g in plan.groups] == sizes
    assert sorted(u for g in plan.groups for u in g) == list(range(C))


def test_groups_deterministic():
    a = make_groups(list(range(9)), 3, np.random.default_rng(8))
    b = make_groups(list(range(9)), 3, np.random.default_rng(8))
    assert a.groups == b.groups


def test_too_many_groups(rng):
    with pytest.raises(InvalidInputError):
        make_groups([0, 1], 3, rng)


def test_invalid_plans():
    with pytest.raises(InvalidInputError):
        AggregationPlan([0, 1, 2], [[0, 1], [1, 2]])
    with pytest.raises(InvalidInputError):
        AggregationPlan([0, 1, 2, 3], [[0, 1], [2]])
    with pytest.raises(InvalidInputError):
        AggregationPlan([0, 1, 2, 3, 4], [[0, 1, 2, 3], [4]])


def test_all_pairings_appear():
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(200):
        plan = make_groups([0, 1, 2, 3], 2, rng)
        seen.add(frozenset(frozenset(g) for g in plan.groups))
    expected = {frozenset({frozenset(a), frozenset(set(range(4)) - set(a))})
                for a in itertools.combinations(range(4), 2)}
    assert seen == expected and len(expected) == 3


def test_plan_serializes():
    plan = AggregationPlan([2, 0], [[0], [2]])
    assert plan.to_dict() == {"participants": [2, 0], "groups": [[0], [2]]}
    assert plan.group_of() == {0: 0, 2: 1}

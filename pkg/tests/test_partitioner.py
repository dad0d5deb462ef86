import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssfl.errors import CapacityError, InvalidInputError
from ssfl.partitioner import (
    AssignmentPlan,
    compute_noniid_R,
    expected_user_distribution,
    integerize_counts,
    make_plan,
    rounding_slack,
    synthesize_assignment,
)


def brute_R(h):
    # direct double loop over ordered pairs, halved
    k = len(h)
    tot = 0.0
    for a in range(k):
        for b in range(k):
            if a != b:
                tot += sum(abs(x - y) for x, y in zip(h[a], h[b])) / 2
    return tot / 2 / (k * (k - 1) / 2)


class TestComputeR:
    def test_identical_uniform(self):
        assert compute_noniid_R([[0.25] * 4] * 3) == 0.0

    def test_one_hot_users_give_one(self):
        assert compute_noniid_R(np.eye(5)) == pytest.approx(1.0)

    def test_two_user_hand_value(self):
        assert compute_noniid_R([[0.75, 0.25], [0.25, 0.75]]) == pytest.approx(0.5)

    def test_needs_two_users(self):
        with pytest.raises(InvalidInputError):
            compute_noniid_R([[0.5, 0.5]])

    def test_ragged_histograms_rejected(self):
        with pytest.raises(InvalidInputError):
            compute_noniid_R([[0.5, 0.5], [1.0, 0.0, 0.0]])

    @given(st.integers(2, 6), st.integers(2, 5), st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_properties(self, k, d, seed):
        rng = np.random.default_rng(seed)
        h = rng.dirichlet(np.ones(d), size=k)
        r = compute_noniid_R(h)
        assert 0.0 <= r <= 1.0 + 1e-12
        assert r == pytest.approx(brute_R(h.tolist()), abs=1e-12)
        assert compute_noniid_R(h[rng.permutation(k)]) == pytest.approx(r, abs=1e-12)
        assert compute_noniid_R(h[:, rng.permutation(d)]) == pytest.approx(r, abs=1e-12)


class TestExpectedDistribution:
    def test_hand_value(self):
        np.testing.assert_allclose(expected_user_distribution([0.5, 0.5], 0.5, 0), [0.75, 0.25])

    def test_zero_skew_is_identity(self):
        q = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(expected_user_distribution(q, 0.0, 2), q)

    def test_full_skew_is_one_hot(self):
        np.testing.assert_allclose(expected_user_distribution([0.5, 0.5], 1.0, 1), [0.0, 1.0])

    def test_rejects_bad_R(self):
        with pytest.raises(InvalidInputError):
            expected_user_distribution([0.5, 0.5], 1.5, 0)

    @pytest.mark.parametrize("R", [i / 10 for i in range(11)])
    def test_pairwise_distance_is_twice_R(self, R):
        q = np.random.default_rng(3).dirichlet(np.ones(6))
        for j in range(6):
            for k in range(6):
                if j != k:
                    pj = expected_user_distribution(q, R, j)
                    pk = expected_user_distribution(q, R, k)
                    assert np.abs(pj - pk).sum() == pytest.approx(2 * R, abs=1e-12)
                    assert pj.sum() == pytest.approx(1.0, abs=1e-12)


class TestIntegerize:
    def test_tie_goes_to_lower_index(self):
        np.testing.assert_array_equal(integerize_counts([[2.5, 2.5]], [5]), [[3, 2]])

    def test_integers_unchanged(self):
        m = [[1.0, 4.0, 0.0], [2.0, 2.0, 2.0]]
        np.testing.assert_array_equal(integerize_counts(m, [5, 6]), m)

    def test_largest_remainder_hand_value(self):
        np.testing.assert_array_equal(integerize_counts([[1.2, 1.2, 2.6]], [5]), [[1, 1, 3]])

    def test_row_sum_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            integerize_counts([[1.0, 1.0]], [3])

    def test_stock_caps_columns(self):
        f = np.array([[1.5, 1.5], [1.5, 1.5]])
        out = integerize_counts(f, [3, 3], stock=[3, 3])
        np.testing.assert_array_equal(out.sum(axis=0), [3, 3])
        np.testing.assert_array_equal(out.sum(axis=1), [3, 3])

    def test_infeasible_stock(self):
        with pytest.raises(CapacityError):
            integerize_counts([[3.0, 0.0]], [3], stock=[2, 5])

    @given(st.integers(1, 6), st.integers(2, 6), st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_row_sums_exact(self, rows, cols, seed):
        rng = np.random.default_rng(seed)
        totals = rng.integers(0, 50, size=rows)
        f = rng.dirichlet(np.ones(cols), size=rows) * totals[:, None]
        out = integerize_counts(f, totals)
        np.testing.assert_array_equal(out.sum(axis=1), totals)
        assert (np.abs(out - f) < 1 + 1e-9).all()


def labels_for(counts):
    return np.repeat(np.arange(len(counts)), counts)


class TestSynthesize:
    def plan(self, R, n=(100, 100), m=(1, 1)):
        return AssignmentPlan(d=len(n), n=n, m=m, R=R, Ns=0)

    def counts(self, asg, labels):
        return [np.bincount(labels[ix], minlength=asg.num_classes).tolist() for ix in asg.user_indices]

    def test_two_class_half_skew(self):
        y = labels_for([100, 100])
        asg = synthesize_assignment(y, self.plan(0.5))
        assert self.counts(asg, y) == [[75, 25], [25, 75]]
        assert compute_noniid_R(asg.user_histograms) == pytest.approx(0.5)

    def test_full_skew(self):
        y = labels_for([100, 100])
        asg = synthesize_assignment(y, self.plan(1.0))
        assert self.counts(asg, y) == [[100, 0], [0, 100]]

    def test_zero_skew_matches_global(self):
        y = labels_for([60, 90, 150])
        asg = synthesize_assignment(y, AssignmentPlan(3, (60, 90, 150), (1, 1, 1), 0.0, 0))
        for h in asg.user_histograms:
            np.testing.assert_allclose(h, [0.2, 0.3, 0.5])

    def test_server_is_balanced_and_disjoint(self):
        y = labels_for([300] * 4)
        plan = make_plan(y, 4, K=6, R=0.7, Ns=42)
        asg = synthesize_assignment(y, plan, seed=5)
        srv = np.bincount(y[asg.server_indices], minlength=4)
        np.testing.assert_array_equal(srv, [11, 11, 10, 10])
        everything = np.concatenate([asg.server_indices] + asg.user_indices)
        assert len(set(everything.tolist())) == everything.size
        for ix, h in zip(asg.user_indices, asg.user_histograms):
            np.testing.assert_allclose(np.bincount(y[ix], minlength=4) / len(ix), h)

    def test_capacity_error_names_class(self):
        y = labels_for([100, 3])
        with pytest.raises(CapacityError) as err:
            make_plan(y, 2, K=2, R=0.5, Ns=10)
        assert err.value.klass == 1

    def test_seed_changes_ids_not_histograms(self):
        y = labels_for([200] * 5)
        plan = make_plan(y, 5, K=7, R=0.4, Ns=50)
        a = synthesize_assignment(y, plan, seed=1)
        b = synthesize_assignment(y, plan, seed=1)
        c = synthesize_assignment(y, plan, seed=2)
        for u, v in zip(a.user_indices, b.user_indices):
            np.testing.assert_array_equal(u, v)
        np.testing.assert_array_equal(a.user_histograms, c.user_histograms)
        assert any(not np.array_equal(u, v) for u, v in zip(a.user_indices, c.user_indices))

    def test_default_users_round_robin(self):
        y = labels_for([100] * 3)
        plan = make_plan(y, 3, K=7, R=0.5, Ns=0)
        assert plan.m == (3, 2, 2)
        assert plan.main_classes() == [0, 1, 2, 0, 1, 2, 0]

    def test_user_totals_and_realized_R(self):
        y = labels_for([1003, 998, 1000, 1001])
        plan = make_plan(y, 4, K=8, R=0.35, Ns=40)
        asg = synthesize_assignment(y, plan)
        sizes = np.array([len(ix) for ix in asg.user_indices])
        np.testing.assert_array_equal(sizes, plan.user_totals())
        nominal = np.array([plan.n[j] / plan.m[j] for j in plan.main_classes()])
        assert (np.abs(sizes - nominal) <= 1).all()
        assert abs(compute_noniid_R(asg.user_histograms) - 0.35 * 24 / 28) <= rounding_slack(plan)

    def test_json_round_trip(self):
        from ssfl.partitioner import Assignment

        y = labels_for([50] * 3)
        asg = synthesize_assignment(y, make_plan(y, 3, K=3, R=0.2, Ns=6))
        back = Assignment.from_dict(asg.to_dict())
        np.testing.assert_array_equal(back.server_indices, asg.server_indices)
        np.testing.assert_allclose(back.user_histograms, asg.user_histograms)
        assert back.main_class == asg.main_class


def test_r_accepts_raw_counts():
    counts = np.array([[30, 10], [10, 30]])
    assert compute_noniid_R(counts) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [[[1, -1], [1, 1]], [[0, 0], [1, 1]]])
def test_r_rejects_invalid_rows(bad):
    with pytest.raises(InvalidInputError):
        compute_noniid_R(bad)

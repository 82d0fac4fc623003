import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from lexbandit import (
    BanditInstance,
    LexElimIn,
    LexElimOut,
    NoiseModel,
    PolicySpec,
    SeedSpec,
    UcbBaseline,
    UniformBaseline,
    gap_matrix,
    random_instance,
    run_to_completion,
    simulate,
)
from lexbandit.policies import EliminationRecord


def _prime(policy, pulls, means):
    """Force a statistics state without simulating."""
    policy.stats.pulls[:] = pulls
    policy.stats.means[:] = np.asarray(means, dtype=float).reshape(policy.stats.means.shape)
    policy.t = int(np.sum(pulls))


# -- LexElim-Out -----------------------------------------------------------------

def test_out_first_round_eliminates_nothing():
    p = LexElimOut(3, 1, 0.1, [1])
    assert p.select_arm() == 0
    assert p.active_set() == {0, 1, 2}
    assert p.eliminations == []


def test_out_uses_pre_update_width_of_chosen_arm():
    p = LexElimOut(3, 1, 0.1, [1])
    _prime(p, [500, 500, 500], [0.9, 0.5, 0.0])
    c = p.stats.width(0)
    assert 0.4 < 2 * c < 0.9
    assert p.select_arm() == 0
    assert p.active_set() == {0, 1}
    rec = p.eliminations[-1]
    assert rec == EliminationRecord(1501, 0, frozenset({2}), 2 * c)


def test_out_plays_chosen_arm_even_if_it_was_just_eliminated():
    p = LexElimOut(3, 1, 0.1, [1])
    _prime(p, [501, 501, 500], [0.9, 0.5, 0.0])
    a = p.select_arm()
    assert a == 2 and 2 not in p.active_set()
    p.observe(a, [0.0])
    assert p.stats.pulls[2] == 501


def test_out_phase_skips_and_finishes():
    p = LexElimOut(3, 2, 0.1, [2, 2])
    _prime(p, [500, 500, 500], [[0.9, 0.5], [0.9, 0.4], [0.1, 0.9]])
    p.select_arm()
    # |A| = 2 satisfies both phases at once
    assert p.finished() and p.phase == 2
    assert p.phase_completed == [1501, 1501]
    assert p.anomalies == []


def test_out_records_over_elimination():
    p = LexElimOut(3, 2, 0.1, [2, 1])
    _prime(p, [500, 500, 500], [[0.9, 0.5], [0.1, 0.4], [0.1, 0.9]])
    p.select_arm()
    assert p.active_set() == {0}
    assert p.anomalies == [
        {"kind": "over-elimination", "round": 1501, "objective": 0, "activeSize": 1, "required": 2}
    ]
    assert p.finished()


def test_out_single_arm_is_finished_immediately():
    p = LexElimOut(1, 2, 0.1, [1, 1])
    assert p.finished() and p.recommend() == 0


def test_out_rejects_wrong_size_list():
    with pytest.raises(ValueError):
        LexElimOut(3, 2, 0.1, [1])


def test_out_two_arm_identification_over_seeds():
    inst = BanditInstance(np.array([[1.0], [0.0]]), NoiseModel(0.1))
    spec = PolicySpec("lexelim-out", delta=0.1)
    for seed in range(100):
        tr = simulate(spec, inst, SeedSpec(seed, 0).rng(), mode="bai")
        assert tr.recommended == 0 and tr.stopping_time is not None


# -- LexElim-In ------------------------------------------------------------------

def test_in_thresholds_scale_per_objective():
    p = LexElimIn(3, 3, 0.1, lam=2.0)
    np.testing.assert_allclose(p.multipliers, [2, 10, 26])
    n = 300_000
    c = math.sqrt(4 / n * math.log(6 * 3 * 3 * n / 0.1))
    # arm 2 sits inside the objective-2 threshold (10c) but outside objective 3's (26c)
    _prime(p, [n, n, n], [[0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [0.5, 0.5 - 9 * c, 0.5 - 26.5 * c]])
    assert p.stats.width(0) == pytest.approx(c)
    p.select_arm()
    assert p.active_set() == {0, 1}
    assert p.eliminations[-1].objective == 2
    assert p.eliminations[-1].threshold == pytest.approx(26 * c)


def test_in_lambda_zero_threshold_is_twice_width():
    p = LexElimIn(2, 2, 0.1, lam=0.0)
    _prime(p, [500, 500], [[0.5, 0.9], [0.5, 0.0]])
    c = p.stats.width(0)
    p.select_arm()
    assert p.active_set() == {0}
    assert p.eliminations[-1].threshold == pytest.approx(2 * c)


def test_in_filtration_is_nested():
    p = LexElimIn(4, 2, 0.1, lam=1.0)
    _prime(p, [20_000] * 4, [[0.9, 0.5], [0.9, 0.1], [0.1, 0.9], [0.9, 0.5]])
    p.select_arm()
    chain = p.last_filtration
    assert chain[0] == {0, 1, 2, 3}
    assert all(b <= a for a, b in zip(chain, chain[1:]))
    assert chain[-1] == p.active_set() == {0, 3}


def test_in_negative_lambda_rejected():
    with pytest.raises(ValueError):
        LexElimIn(3, 2, 0.1, lam=-1)


@pytest.mark.parametrize("seed", range(5))
def test_lambda_monotonicity(seed):
    """A larger lambda keeps a superset of arms until the histories diverge."""
    rng = np.random.default_rng(seed)
    inst = random_instance(5, 3, rng)
    table = rng.standard_normal((5, 4000, 3)) * inst.noise.sigma + inst.means[:, None, :]
    small, big = LexElimIn(5, 3, 0.2, 0.5), LexElimIn(5, 3, 0.2, 3.0)
    for _ in range(4000):
        if small.finished() or big.finished():
            break
        a, b = small.select_arm(), big.select_arm()
        assert small.active_set() <= big.active_set()
        if a != b:
            break
        r = table[a, small.stats.pulls[a]]
        small.observe(a, r)
        big.observe(b, r)


# -- baselines ---------------------------------------------------------------------

def test_ucb_first_rounds_in_index_order():
    p = UcbBaseline(4, 2, 0.1)
    order = []
    for _ in range(4):
        a = p.select_arm()
        order.append(a)
        p.observe(a, [0.5, 0.5])
    assert order == [0, 1, 2, 3]
    assert not p.finished()


def test_ucb_concentrates_on_best_arm():
    inst = BanditInstance(np.array([[1.0], [0.0]]), NoiseModel(0.1))
    for seed in range(10):
        tr = simulate(PolicySpec("ucb"), inst, SeedSpec(seed, 0).rng(), mode="rm", max_rounds=10_000)
        assert tr.pulls[1] < 0.05 * 10_000


def test_uniform_round_robin(tripeak10):
    p = UniformBaseline(10, 3, 0.1)
    seq = []
    for _ in range(21):
        a = p.select_arm()
        seq.append(a)
        p.observe(a, np.zeros(3))
    assert seq == list(range(10)) * 2 + [0]
    tr = simulate(PolicySpec("uniform"), tripeak10, SeedSpec(0, 0).rng(), mode="rm", max_rounds=1000)
    np.testing.assert_allclose(tr.regret[-1], 1000 * gap_matrix(tripeak10).mean(axis=0))


def test_uniform_single_arm():
    p = UniformBaseline(1, 1, 0.1)
    assert [p.select_arm() for _ in range(3)] == [0, 0, 0]


# -- drivers -----------------------------------------------------------------------

def test_single_arm_finishes_at_zero():
    inst = BanditInstance(np.array([[0.3, 0.4]]))
    for name in ("lexelim-out", "lexelim-in"):
        tr = simulate(PolicySpec(name), inst, SeedSpec(0, 0).rng(), mode="bai")
        assert tr.stopping_time == 0 and tr.rounds == 0 and tr.recommended == 0
        ref = run_to_completion(PolicySpec(name).build(inst), inst, SeedSpec(0, 0).rng(), 10)
        assert ref.stopping_time == 0 and ref.rounds == 0


def test_rm_mode_plays_exactly_horizon(small_instance):
    tr = simulate(PolicySpec("lexelim-out", delta=0.1), small_instance, SeedSpec(1, 0).rng(),
                  mode="rm", max_rounds=20_000, keep_plays=True)
    assert tr.rounds == 20_000 and tr.plays.size == 20_000
    assert tr.stopping_time is not None and tr.stopping_time < 20_000
    # after identification the recommended arm is played until the horizon
    assert np.all(tr.plays[tr.stopping_time:] == tr.recommended)


def test_budget_exhausted(tripeak10):
    tr = simulate(PolicySpec("lexelim-in"), tripeak10, SeedSpec(1, 0).rng(), mode="bai", max_rounds=500)
    assert tr.budget_exhausted and tr.rounds == 500
    assert tr.summary()["stoppingTime"] == "budget-exhausted"
    assert tr.recommended == 0


def test_driver_argument_checks(small_instance):
    with pytest.raises(ValueError):
        simulate(PolicySpec("ucb"), small_instance, np.random.default_rng(0), mode="rm")
    with pytest.raises(ValueError):
        simulate(PolicySpec("ucb"), small_instance, np.random.default_rng(0), mode="x", max_rounds=5)
    with pytest.raises(ValueError):
        PolicySpec("thompson")


def _same(a, b):
    for f in ("checkpoints", "regret", "active_sizes", "pulls"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    for f in ("rounds", "stopping_time", "recommended", "eliminations", "anomalies",
              "violations", "astar_lost_round", "coverage_held", "coverage_failed_round"):
        assert getattr(a, f) == getattr(b, f), f
    np.testing.assert_array_equal(a.plays, b.plays)


@settings(max_examples=25, suppress_health_check=[HealthCheck.too_slow])
@given(
    st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**31),
    st.sampled_from(["lexelim-out", "lexelim-in", "ucb", "uniform"]),
    st.sampled_from(["bai", "rm"]),
)
def test_compiled_driver_matches_reference(K, m, seed, name, mode):
    inst = random_instance(K, m, np.random.default_rng(seed))
    spec = PolicySpec(name, delta=0.2)
    budget = 3000
    fast = simulate(spec, inst, SeedSpec(seed, 0).rng(), mode=mode, max_rounds=budget,
                    keep_plays=True, block=257)
    slow = run_to_completion(spec.build(inst), inst, SeedSpec(seed, 0).rng(), budget,
                             mode=mode, keep_plays=True)
    _same(fast, slow)


@pytest.mark.parametrize("name", ["lexelim-out", "lexelim-in", "ucb", "uniform"])
@pytest.mark.parametrize("mode", ["bai", "rm"])
def test_compiled_driver_matches_reference_long(small_instance, name, mode):
    spec = PolicySpec(name, delta=0.1)
    fast = simulate(spec, small_instance, SeedSpec(5, 1).rng(), mode=mode, max_rounds=80_000, keep_plays=True)
    slow = run_to_completion(spec.build(small_instance), small_instance, SeedSpec(5, 1).rng(),
                             80_000, mode=mode, keep_plays=True)
    _same(fast, slow)
    if spec.eliminates:
        assert fast.violations == {"balance": 0, "shrink": 0, "nesting": 0}


def test_block_size_does_not_matter(tripeak10):
    spec = PolicySpec("lexelim-in")
    a = simulate(spec, tripeak10, SeedSpec(3, 0).rng(), mode="rm", max_rounds=5000, block=64)
    b = simulate(spec, tripeak10, SeedSpec(3, 0).rng(), mode="rm", max_rounds=5000, block=1 << 16)
    _same(a, b)


def test_explicit_checkpoint_grid(small_instance):
    tr = simulate(PolicySpec("uniform"), small_instance, SeedSpec(0, 0).rng(), mode="rm",
                  max_rounds=100, checkpoints=[10, 50, 10, 1000])
    assert tr.checkpoints.tolist() == [10, 50, 100]
    # ten round-robin plays over four arms: counts 3, 3, 2, 2
    expected = np.array([3, 3, 2, 2]) @ gap_matrix(small_instance)
    np.testing.assert_allclose(tr.regret[0], expected, atol=1e-12)

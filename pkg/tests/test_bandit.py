from fractions import Fraction

import numpy as np
import pytest

import oracles
from renewalopt.bandit import (
    BanditState,
    UserSpec,
    geometric_file_sampler,
    maxlambda_run,
    maxlambda_step,
    multi_user_queue_bound,
    multi_user_run,
    multi_user_run_nonmemoryless,
    multi_user_step,
    poisson_file_sampler,
    single_user_queue_bound,
    single_user_queue_update,
    single_user_run,
    single_user_select,
    table_one_users,
    table_two_users,
    two_queue_markov_throughput,
    uniform_file_sampler,
)


def _user(lam=0.3, mean_file=2.5, actions=((0.0, 0.0), (0.6, 2.0)), weight=1.0):
    return UserSpec(lam=lam, mean_file=mean_file, actions=actions, weight=weight)


def _index_value(user, a, q, v):
    phi, p = user.actions[a]
    return (v * user.weight * user.mean_file * phi - q * p) / (1.0 + phi / user.lam)


class TestUserSpec:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            _user(lam=0.0)
        with pytest.raises(ValueError):
            _user(lam=1.0)
        with pytest.raises(ValueError):
            _user(mean_file=0.0)
        with pytest.raises(ValueError):
            _user(actions=((0.1, 0.0), (0.6, 2.0)))  # missing zero action
        with pytest.raises(ValueError):
            _user(actions=((0.0, 0.0), (0.6, 0.0)))  # free nonzero action
        with pytest.raises(ValueError):
            _user(actions=((0.0, 0.0), (1.2, 2.0)))  # phi out of range

    def test_power_extremes(self):
        u = _user(actions=((0.0, 0.0), (0.4, 2.0), (0.9, 3.5)))
        assert u.p_min == 2.0
        assert u.p_max == 3.5


class TestSingleUser:
    def test_huge_queue_selects_zero_action(self):
        u = _user()
        assert single_user_select(u, q=1e9, v=10.0) == 0

    def test_zero_queue_selects_highest_phi(self):
        u = _user(actions=((0.0, 0.0), (0.3, 1.0), (0.8, 5.0), (0.5, 2.0)))
        assert single_user_select(u, q=0.0, v=7.0) == 2

    def test_exact_tie_prefers_lowest_index(self):
        # two copies of the same nonzero action tie exactly
        u = _user(actions=((0.0, 0.0), (0.6, 2.0), (0.6, 2.0)))
        assert single_user_select(u, q=3.0, v=5.0) == 1

    def test_matches_bruteforce_argmax(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            n_actions = int(rng.integers(2, 6))
            actions = [(0.0, 0.0)] + [
                (float(rng.uniform(0.05, 1.0)), float(rng.uniform(0.5, 4.0)))
                for _ in range(n_actions - 1)
            ]
            u = _user(
                lam=float(rng.uniform(0.05, 0.95)),
                mean_file=float(rng.uniform(1.0, 6.0)),
                actions=tuple(actions),
            )
            q = float(rng.uniform(0.0, 30.0))
            v = float(rng.uniform(0.5, 50.0))
            vals = [_index_value(u, a, q, v) for a in range(n_actions)]
            best = max(range(n_actions), key=lambda a: (vals[a], -a))
            assert single_user_select(u, q, v) == best

    def test_weight_equals_rescaled_v(self):
        base = _user(actions=((0.0, 0.0), (0.3, 1.0), (0.7, 2.5)))
        weighted = _user(
            actions=((0.0, 0.0), (0.3, 1.0), (0.7, 2.5)), weight=3.0
        )
        for q in (0.0, 2.0, 11.0):
            assert single_user_select(weighted, q, v=4.0) == single_user_select(
                base, q, v=12.0
            )

    def test_queue_update_trivia(self):
        assert single_user_queue_update(5.0, power=2.0, frame_len=1, beta=2.0) == 5.0
        assert single_user_queue_update(5.0, power=0.0, frame_len=3, beta=2.0) == 0.0
        with pytest.raises(ValueError):
            single_user_queue_update(5.0, power=1.0, frame_len=0, beta=2.0)

    def test_run_respects_queue_bound(self):
        u = _user(lam=0.4, mean_file=3.0, actions=((0.0, 0.0), (0.7, 4.0)))
        out = single_user_run(u, v=25.0, beta=1.0, n_frames=4000, seed=7)
        bound = single_user_queue_bound(u, v=25.0, beta=1.0)
        assert np.all(out["queues"] <= bound + 1e-9)
        assert np.all(out["frame_lens"] >= 1)
        again = single_user_run(u, v=25.0, beta=1.0, n_frames=4000, seed=7)
        assert np.array_equal(out["queues"], again["queues"])


class TestMultiUser:
    def test_all_active_served_when_servers_suffice(self):
        users = [_user(lam=0.3) for _ in range(4)]
        state = BanditState(file_states=[1, 0, 1, 0], q=0.0, slot=0)
        _, stats = multi_user_step(
            users, state, v=10.0, m_servers=3, beta=5.0, rng=np.random.default_rng(0)
        )
        assert sorted(n for n, _ in stats.served) == [0, 2]

    def test_huge_queue_spends_no_power(self):
        users = [_user() for _ in range(3)]
        state = BanditState(file_states=[1, 1, 1], q=1e9, slot=0)
        new_state, stats = multi_user_step(
            users, state, v=10.0, m_servers=2, beta=5.0, rng=np.random.default_rng(0)
        )
        assert stats.power == 0.0
        assert all(a == 0 for _, a in stats.served)
        assert new_state.q == 1e9 - 5.0

    def test_served_are_top_indices_with_low_user_ties(self):
        # identical users tie exactly; the two lowest numbers win
        users = [_user() for _ in range(5)]
        state = BanditState(file_states=[1, 1, 1, 1, 1], q=1.0, slot=0)
        _, stats = multi_user_step(
            users, state, v=10.0, m_servers=2, beta=5.0, rng=np.random.default_rng(0)
        )
        assert sorted(n for n, _ in stats.served) == [0, 1]

    def test_rejects_bad_server_count(self):
        users = [_user() for _ in range(3)]
        state = BanditState(file_states=[0, 0, 0], q=0.0, slot=0)
        for m in (0, 3):
            with pytest.raises(ValueError):
                multi_user_step(
                    users, state, v=1.0, m_servers=m, beta=5.0,
                    rng=np.random.default_rng(0),
                )

    def test_run_matches_step_composition(self):
        users = table_one_users()
        horizon = 600
        out = multi_user_run(
            users, v=70.0, m_servers=4, beta=5.0, horizon=horizon, seed=99
        )
        rng = np.random.default_rng(99)
        state = BanditState(file_states=[0] * 8, q=0.0, slot=0)
        for t in range(horizon):
            state, stats = multi_user_step(
                users, state, v=70.0, m_servers=4, beta=5.0, rng=rng
            )
            assert stats.throughput == out["throughput"][t]
            assert stats.power == out["power"][t]
            assert state.q == out["queue"][t]

    def test_benchmark_run_is_bounded_and_stable(self):
        users = table_one_users()
        out = multi_user_run(
            users, v=70.0, m_servers=4, beta=5.0, horizon=30_000, seed=5
        )
        bound = multi_user_queue_bound(users, v=70.0, beta=5.0)
        assert np.all(out["queue"] <= bound + 1e-9)
        assert out["throughput_avg"] > 0.0
        # the power budget is approached from below over long runs
        assert out["power_avg"] < 5.5

    def test_queue_bound_formula(self):
        users = [
            _user(mean_file=2.0, actions=((0.0, 0.0), (0.5, 1.0)), weight=3.0),
            _user(mean_file=4.0, actions=((0.0, 0.0), (0.5, 2.0)), weight=1.0),
        ]
        # c_max * B_max = max(3*2, 1*4) = 6, p_min = 1, sum p_max = 3
        assert multi_user_queue_bound(users, v=10.0, beta=2.0) == 10.0 * 6.0 + 3.0 - 2.0


class TestMaxLambda:
    def test_step_serves_largest_rate_first(self):
        rng = np.random.default_rng(1)
        states, served = maxlambda_step(
            [1, 1, 1], lambdas=[0.2, 0.5, 0.4], m_servers=2, rng=rng
        )
        # queues 1 and 2 (rates 0.5 and 0.4) are drained; queue 0 still holds
        assert served == 2
        assert states[0] == 1

    def test_step_on_empty_system_only_arrivals(self):
        rng = np.random.default_rng(0)
        states, served = maxlambda_step(
            [0, 0], lambdas=[0.9, 0.9], m_servers=1, rng=rng
        )
        assert served == 0
        assert set(states) <= {0, 1}

    def test_two_queue_chain_known_values(self):
        assert two_queue_markov_throughput(0.5, 0.25, priority=1) == pytest.approx(
            0.7, abs=1e-12
        )
        assert two_queue_markov_throughput(0.5, 0.25, priority=2) == pytest.approx(
            float(Fraction(19, 28)), abs=1e-12
        )

    def test_two_queue_chain_symmetric_rates(self):
        a = two_queue_markov_throughput(0.35, 0.35, priority=1)
        b = two_queue_markov_throughput(0.35, 0.35, priority=2)
        assert a == pytest.approx(b, abs=1e-12)

    def test_two_queue_chain_rejects_degenerate_rates(self):
        with pytest.raises(ValueError):
            two_queue_markov_throughput(0.0, 0.5, priority=1)
        with pytest.raises(ValueError):
            two_queue_markov_throughput(0.5, 1.0, priority=2)
        with pytest.raises(ValueError):
            two_queue_markov_throughput(0.5, 0.5, priority=3)

    def test_two_queue_chain_matches_bruteforce(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            lam1 = float(rng.uniform(0.05, 0.95))
            lam2 = float(rng.uniform(0.05, 0.95))
            for priority in (1, 2):
                assert two_queue_markov_throughput(
                    lam1, lam2, priority
                ) == pytest.approx(
                    oracles.two_queue_chain_bruteforce(lam1, lam2, priority),
                    abs=1e-9,
                )

    def test_simulation_agrees_with_chain(self):
        horizon = 200_000
        sim = maxlambda_run([0.5, 0.25], m_servers=1, horizon=horizon, seed=12)
        exact = two_queue_markov_throughput(0.5, 0.25, priority=1)
        # three standard errors with the crude bound se <= 0.5 / sqrt(T)
        assert abs(sim - exact) <= 3 * 0.5 / np.sqrt(horizon)
        sim_small = maxlambda_run(
            [0.5, 0.25], m_servers=1, horizon=horizon, seed=12, prefer_small=True
        )
        exact_small = two_queue_markov_throughput(0.5, 0.25, priority=2)
        assert abs(sim_small - exact_small) <= 3 * 0.5 / np.sqrt(horizon)
        assert sim > sim_small


class TestNonMemoryless:
    def test_samplers_hit_their_means(self):
        rng = np.random.default_rng(3)
        geo = [geometric_file_sampler(4.0)(rng) for _ in range(20_000)]
        uni = [uniform_file_sampler(1, 7)(rng) for _ in range(20_000)]
        poi = [poisson_file_sampler(4.0)(rng) for _ in range(20_000)]
        assert np.mean(geo) == pytest.approx(4.0, rel=0.03)
        assert np.mean(uni) == pytest.approx(4.0, rel=0.03)
        assert np.mean(poi) == pytest.approx(4.0, rel=0.03)
        assert min(geo) >= 1 and min(uni) >= 1 and min(poi) >= 1

    @pytest.mark.parametrize("dist", ["uniform", "poisson"])
    def test_benchmark_runs_within_queue_bound(self, dist):
        users = table_two_users(dist)
        out = multi_user_run_nonmemoryless(
            users, v=70.0, m_servers=4, beta=5.0, horizon=20_000, seed=21
        )
        bound = multi_user_queue_bound(users, v=70.0, beta=5.0)
        assert np.all(out["queue"] <= bound + 1e-9)
        assert out["throughput_avg"] > 0.0

    def test_geometric_packets_match_memoryless_model(self):
        users = table_two_users("geometric")
        packet = multi_user_run_nonmemoryless(
            users, v=70.0, m_servers=4, beta=5.0, horizon=120_000, seed=4
        )
        model = multi_user_run(
            users, v=70.0, m_servers=4, beta=5.0, horizon=120_000, seed=17
        )
        assert packet["throughput_avg"] == pytest.approx(
            model["throughput_avg"], rel=0.1
        )

    def test_missing_sampler_rejected(self):
        users = table_one_users()
        with pytest.raises(ValueError):
            multi_user_run_nonmemoryless(
                users, v=10.0, m_servers=4, beta=5.0, horizon=10, seed=0
            )

"""Environment dynamics and the state encoders."""

import math

import numpy as np
import pytest

from coagentrl.envs import (
    DOWN,
    LEFT,
    N_CARTPOLE_BOXES,
    RIGHT,
    UP,
    CartPole,
    CartPoleParams,
    Encoder,
    GridSpec,
    MountainCar,
    cartpole_box,
    cartpole_dynamics,
    continuous_bin,
    decode_spatiotemporal,
    encode_binary,
    encode_continuous_binned,
    encode_spatiotemporal,
    gridworld5_spec,
    make_gridworld10,
    make_gridworld5,
    mountaincar_dynamics,
)
from coagentrl.mathcore import rng_stream


class TestGridWorld:
    def test_five_by_five_layout(self):
        env = make_gridworld5()
        assert env.n_states == 23
        assert env.state_number(env.reset()) == 1
        assert env.state_number(env.spec.index[env.spec.goal]) == 23

    def test_transition_rows_sum_to_one(self):
        env = make_gridworld5()
        for s in range(env.n_states):
            for a in (UP, DOWN, LEFT, RIGHT):
                assert sum(env.transition_distribution(s, a).values()) == pytest.approx(1.0)

    def test_north_edge_keeps_intended_mass(self):
        env = make_gridworld10()
        s = env.spec.index[(0, 4)]
        dist = env.transition_distribution(s, UP)
        # intended move blocked plus the no-op mass
        assert dist[s] == pytest.approx(0.8 + 0.1)
        assert dist[env.spec.index[(0, 5)]] == pytest.approx(0.05)
        assert dist[env.spec.index[(0, 3)]] == pytest.approx(0.05)

    def test_goal_reward_and_terminal(self):
        env = make_gridworld10(rng=rng_stream(0))
        env.reset()
        env.cell = (9, 8)
        while True:
            res = env.step(RIGHT)
            if res.terminal:
                break
            assert res.reward == 0.0
            env.cell = (9, 8)
        assert res.reward == 10.0

    def test_other_transitions_zero_reward(self):
        env = make_gridworld10(rng=rng_stream(1))
        env.reset()
        for _ in range(50):
            assert env.step(DOWN).reward == 0.0 or env.cell == env.spec.goal

    def test_empirical_matches_distribution(self):
        env = make_gridworld5(rng=rng_stream(3))
        s0 = env.reset()
        exact = env.transition_distribution(s0, RIGHT)
        counts = {}
        for _ in range(20_000):
            env.reset()
            nxt = env.step(RIGHT).next_observation
            counts[nxt] = counts.get(nxt, 0) + 1
        for s, p in exact.items():
            assert abs(counts.get(s, 0) / 20_000 - p) < 0.015

    def test_truncation(self):
        env = make_gridworld5(rng=rng_stream(0), max_steps=3)
        env.reset()
        results = [env.step(UP) for _ in range(3)]
        assert results[-1].truncated and not results[-1].terminal

    def test_bad_action(self):
        env = make_gridworld5()
        env.reset()
        with pytest.raises(ValueError):
            env.step(4)

    def test_noise_probabilities_validated(self):
        with pytest.raises(ValueError):
            GridSpec(2, 2, (0, 0), (1, 1), p_intended=0.9)

    def test_water_penalty(self):
        spec = gridworld5_spec()
        assert spec.rewards[(4, 2)] == -10.0


class TestCartPole:
    def test_push_right_tips_pole_left(self):
        _, v, _, omega = cartpole_dynamics((0.0, 0.0, 0.0, 0.0), 1)
        assert v > 0
        assert omega < 0

    def test_failure_angle_terminal(self):
        env = CartPole()
        env.reset()
        limit = CartPoleParams().theta_limit
        env.state = (0.0, 0.0, limit + 0.01, 1.0)
        assert env.step(1).terminal

    def test_reward_and_truncation(self):
        env = CartPole(rng=rng_stream(0), params=CartPoleParams(max_steps=5))
        env.reset()
        res = None
        for t in range(5):
            res = env.step(t % 2)
            assert res.reward == 1.0
        assert res.truncated

    def test_reset_deterministic(self):
        a = CartPole(rng=rng_stream(9)).reset()
        b = CartPole(rng=rng_stream(9)).reset()
        np.testing.assert_array_equal(a, b)

    def test_boxes_cover_range(self):
        rng = np.random.default_rng(0)
        seen = {cartpole_box(rng.uniform([-2.4, -2, -0.2, -2], [2.4, 2, 0.2, 2])) for _ in range(20_000)}
        assert seen <= set(range(N_CARTPOLE_BOXES))
        assert len(seen) == N_CARTPOLE_BOXES


class TestMountainCar:
    def test_gravity_zero_point(self):
        x = -math.pi / 6
        _, v = mountaincar_dynamics((x, 0.01), 1)
        assert v == pytest.approx(0.01, abs=1e-15)

    def test_step_reward(self):
        env = MountainCar(rng=rng_stream(0))
        env.reset()
        assert env.step(2).reward == -1.0

    def test_left_wall_stops(self):
        p, v = mountaincar_dynamics((-1.2, -0.05), 0)
        assert p == -1.2 and v == 0.0


class TestEncoders:
    def test_binary_23(self):
        np.testing.assert_array_equal(encode_binary(23, 7).ravel(), [-1, -1, 1, -1, 1, 1, 1])

    def test_binary_extremes(self):
        assert np.all(encode_binary(0, 7) == -1)
        assert np.all(encode_binary(2**7 - 1, 7) == 1)

    def test_binary_overflow(self):
        with pytest.raises(ValueError):
            encode_binary(128, 7)

    def test_spatiotemporal_zero(self):
        e = encode_spatiotemporal(0, 3, 5)
        assert e.shape == (3, 5) and np.all(e == -1)

    def test_spatiotemporal_99(self):
        bits = [int(c) for c in format(99, "015b")]
        expected = (2 * np.array(bits) - 1).reshape(3, 5)
        np.testing.assert_array_equal(encode_spatiotemporal(99, 3, 5), expected)

    def test_spatiotemporal_roundtrip(self):
        for s in (0, 1, 57, 99, 2**15 - 1):
            assert decode_spatiotemporal(encode_spatiotemporal(s, 3, 5)) == s

    def test_binned_endpoints(self):
        assert np.all(encode_continuous_binned(-1.0, -1.0, 1.0, 4) == -1)
        assert np.all(encode_continuous_binned(1.0, -1.0, 1.0, 4) == 1)

    def test_binned_midpoint(self):
        assert continuous_bin(0.0, -1.0, 1.0, 4) == 2**3

    def test_encoder_shapes(self):
        assert Encoder("binary", n_neurons=7, offset=1)(0).shape == (7, 1)
        assert Encoder("continuous")(np.zeros(4)).shape == (4, 1)
        assert Encoder("binned", n_per_variable=10)(np.array([-0.5, 0.0])).shape == (20, 1)

    def test_offset_maps_first_state_to_one(self):
        np.testing.assert_array_equal(Encoder("binary", n_neurons=3, offset=1)(0).ravel(), [-1, -1, 1])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Encoder("onehot")

"""Single-neuron firing policies and their log-policy gradients."""

import itertools
import math

import numpy as np
import pytest

from coagentrl.mathcore import rng_stream
from coagentrl.neurons import (
    GRADED_ACTIONS,
    CoagentState,
    GLMParams,
    IsingParams,
    LifParams,
    first_to_spike_race,
    glm_fire_prob,
    glm_logprob_grad,
    glm_sample,
    glm_spiketrain_logprob,
    ising_fire_prob,
    ising_graded_logpolicy_grad,
    ising_graded_policy,
    ising_log_policy,
    ising_logpolicy_grad,
    lif_fire_grad,
    lif_fire_prob,
    lif_membrane,
    lnp_bernoulli_log_policy,
    lnp_bernoulli_update,
    lnp_gaussian_log_policy,
    lnp_gaussian_logpolicy_grad,
    lnp_poisson_sample,
    psp_sums,
)


def _fd(f, x, h=1e-6):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestIsing:
    def test_zero_params_half(self):
        assert ising_fire_prob(IsingParams(0.0, np.zeros(3)), np.ones(3)) == 0.5

    def test_ln3(self):
        p = IsingParams(math.log(3.0) / 2, np.zeros(2))
        assert ising_fire_prob(p, [1.0, -1.0]) == pytest.approx(0.75)

    def test_boltzmann_ratio(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = IsingParams(rng.normal(), rng.normal(size=4))
            x = rng.choice([-1.0, 1.0], size=4)
            u = p.bias + p.weights @ x
            assert ising_fire_prob(p, x) == pytest.approx(math.exp(u) / (math.exp(u) + math.exp(-u)))

    def test_gradient_at_zero_drive(self):
        x = np.array([1.0, -1.0, 1.0])
        p = IsingParams(0.0, np.zeros(3))
        np.testing.assert_allclose(ising_logpolicy_grad(p, x, 1)[1], x)
        np.testing.assert_allclose(ising_logpolicy_grad(p, x, -1)[1], -x)

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            b, W = rng.normal(), rng.normal(size=5)
            x, a = rng.normal(size=5), int(rng.choice([-1, 1]))
            db, dW = ising_logpolicy_grad(IsingParams(b, W), x, a)
            fd = _fd(lambda w: ising_log_policy(IsingParams(b, w), x, a), W)
            np.testing.assert_allclose(dW, fd, rtol=1e-6, atol=1e-9)
            fdb = _fd(lambda bb: ising_log_policy(IsingParams(bb[0], W), x, a), [b])[0]
            assert db == pytest.approx(fdb, rel=1e-6, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            ising_fire_prob(IsingParams(0.0, np.zeros(3)), np.ones(2))

    def test_log_policy_stable(self):
        p = IsingParams(400.0, np.zeros(1))
        assert np.isfinite(ising_log_policy(p, [0.0], -1))


class TestGraded:
    def test_uniform_at_zero(self):
        np.testing.assert_allclose(ising_graded_policy(IsingParams(0.0, np.zeros(2)), [1, 1]), 0.2)

    def test_ln2(self):
        pi = ising_graded_policy(IsingParams(math.log(2.0), np.zeros(1)), [0.0])
        ref = 2.0**GRADED_ACTIONS / np.sum(2.0**GRADED_ACTIONS)
        np.testing.assert_allclose(pi, ref)

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(2)
        for k in range(5):
            W, x = rng.normal(size=3), rng.normal(size=3)
            _, dW = ising_graded_logpolicy_grad(IsingParams(0.3, W), x, k)
            fd = _fd(lambda w: math.log(ising_graded_policy(IsingParams(0.3, w), x)[k]), W)
            np.testing.assert_allclose(dW, fd, rtol=1e-6, atol=1e-9)


class TestLif:
    def test_no_spikes_gives_bias(self):
        p = LifParams(0.7, np.array([1.0, 2.0]))
        assert lif_membrane(p, [[], []], 3.0) == 0.7

    def test_single_coincident_spike(self):
        p = LifParams(0.1, np.array([0.5]))
        assert lif_membrane(p, [[2.0]], 2.0) == pytest.approx(0.6)

    def test_two_spikes_closed_form(self):
        p = LifParams(0.0, np.array([1.5]), tau_m=2.0)
        u = lif_membrane(p, [[6.0 - 2.0, 6.0 - 4.0]], 6.0)
        assert u == pytest.approx(1.5 * (math.exp(-1) + math.exp(-2)))

    def test_future_spikes_ignored(self):
        p = LifParams(0.0, np.array([1.0]))
        np.testing.assert_allclose(psp_sums(p, [[5.0]], 1.0), [0.0])

    def test_gradient_at_threshold(self):
        p = LifParams(0.0, np.zeros(2), threshold=0.0)
        psp = np.array([1.0, 2.0])
        np.testing.assert_allclose(lif_fire_grad(p, 0.0, 1, psp), 0.5 * psp)
        np.testing.assert_allclose(lif_fire_grad(p, 0.0, 0, psp), -0.5 * psp)

    def test_saturation_guard(self):
        p = LifParams(0.0, np.zeros(1))
        np.testing.assert_array_equal(lif_fire_grad(p, 1e4, 0, [1.0]), [0.0])

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(3)
        spikes = [[0.0, 1.0], [0.5], []]
        for a in (0, 1):
            W = rng.normal(size=3)
            p = LifParams(0.2, W, tau_m=1.5, threshold=0.1)
            psp = psp_sums(p, spikes, 2.0)
            g = lif_fire_grad(p, lif_membrane(p, spikes, 2.0), a, psp)

            def logpi(w):
                q = LifParams(0.2, w, tau_m=1.5, threshold=0.1)
                s = lif_fire_prob(q, lif_membrane(q, spikes, 2.0))
                return math.log(s if a == 1 else 1 - s)

            np.testing.assert_allclose(g, _fd(logpi, W), rtol=1e-6, atol=1e-9)

    def test_race_single_winner(self):
        neurons = [LifParams(5.0, np.zeros(1)), LifParams(-5.0, np.zeros(1))]
        wins = [first_to_spike_race(neurons, [[]], [0.0, 1.0, 2.0], rng_stream(0, i))[0] for i in range(200)]
        assert wins.count(0) > 190

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            LifParams(0.0, np.zeros(1), tau_m=0.0)


class TestGLM:
    def test_zero_filters_half(self):
        p = GLMParams(k=np.zeros((2, 3)))
        s = CoagentState(x=np.ones((2, 5)))
        assert glm_fire_prob(p, s, 0) == 0.5

    def test_large_bias_saturates(self):
        p = GLMParams(k=np.zeros((1, 1)), eta=60.0)
        assert glm_fire_prob(p, CoagentState(x=np.ones((1, 1))), 0) == pytest.approx(1.0)

    def test_stimulus_matches_causal_convolution(self):
        rng = np.random.default_rng(4)
        k = rng.normal(size=(1, 3))
        x = rng.normal(size=(1, 5))
        p = GLMParams(k=k, eta=0.2)
        s = CoagentState(x=x, offset=0)
        for t in range(5):
            drive = 0.2 + sum(k[0, j] * x[0, t - j] for j in range(3) if t - j >= 0)
            assert glm_fire_prob(p, s, t) == pytest.approx(1 / (1 + math.exp(-drive)))

    def test_half_rate_logprob(self):
        p = GLMParams(k=np.zeros((1, 1)))
        s = CoagentState(x=np.zeros((1, 3)))
        assert glm_spiketrain_logprob(p, s, [1, -1, 1]) == pytest.approx(3 * math.log(0.5))

    def test_single_bin_logprob(self):
        p = GLMParams(k=np.zeros((1, 1)), eta=math.log(4.0))
        assert glm_spiketrain_logprob(p, CoagentState(x=np.zeros((1, 1))), [1]) == pytest.approx(math.log(0.8))

    def test_trains_sum_to_one(self):
        rng = np.random.default_rng(5)
        p = GLMParams(k=rng.normal(size=(2, 2)), h=rng.normal(size=2), eta=0.3)
        s = CoagentState(x=rng.choice([-1.0, 1.0], size=(2, 3)))
        total = sum(math.exp(glm_spiketrain_logprob(p, s, y)) for y in itertools.product([-1, 1], repeat=3))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_half_rate_gradient(self):
        p = GLMParams(k=np.zeros((1, 1)))
        s = CoagentState(x=np.array([[0.7]]))
        g = glm_logprob_grad(p, s, [1])
        assert g.eta == pytest.approx(0.5)
        np.testing.assert_allclose(g.k, [[0.35]])
        np.testing.assert_allclose(glm_logprob_grad(p, s, [-1]).k, [[-0.35]])

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(6)
        k, h, l = rng.normal(size=(2, 3)), rng.normal(size=2), rng.normal(size=(1, 2))
        s = CoagentState(x=rng.choice([-1.0, 1.0], size=(2, 4)), xi=rng.choice([-1.0, 1.0], size=(1, 3)))
        y = [1, -1, 1]
        g = glm_logprob_grad(GLMParams(k=k, h=h, l=l, eta=0.1), s, y)
        fk = _fd(lambda v: glm_spiketrain_logprob(GLMParams(k=v, h=h, l=l, eta=0.1), s, y), k)
        fh = _fd(lambda v: glm_spiketrain_logprob(GLMParams(k=k, h=v, l=l, eta=0.1), s, y), h)
        fl = _fd(lambda v: glm_spiketrain_logprob(GLMParams(k=k, h=h, l=v, eta=0.1), s, y), l)
        np.testing.assert_allclose(g.k, fk, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(g.h, fh, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(g.l, fl, rtol=1e-6, atol=1e-9)

    def test_sample_frequency(self):
        p = GLMParams(k=np.zeros((1, 1)), eta=math.log(4.0))
        s = CoagentState(x=np.zeros((1, 4)))
        rng = rng_stream(0)
        trains = np.array([glm_sample(p, s, 4, rng) for _ in range(5000)])
        assert abs((trains > 0).mean() - 0.8) < 0.02

    def test_filter_count_checked(self):
        with pytest.raises(ValueError):
            glm_fire_prob(GLMParams(k=np.zeros((3, 1))), CoagentState(x=np.zeros((2, 2))), 0)


class TestLNP:
    def test_gaussian_mean_matching(self):
        k, x = np.array([0.5, -1.0]), np.array([2.0, 1.0])
        np.testing.assert_allclose(lnp_gaussian_logpolicy_grad(k, 1.0, x, 0.0), 0.0)

    def test_gaussian_unit_residual(self):
        k, x = np.array([0.5, -1.0]), np.array([2.0, 1.0])
        np.testing.assert_allclose(lnp_gaussian_logpolicy_grad(k, 1.0, x, 1.0), x)

    def test_gaussian_finite_difference(self):
        rng = np.random.default_rng(7)
        k, x = rng.normal(size=3), rng.normal(size=3)
        g = lnp_gaussian_logpolicy_grad(k, 0.7, x, 0.4)
        np.testing.assert_allclose(g, _fd(lambda v: lnp_gaussian_log_policy(v, 0.7, x, 0.4), k), rtol=1e-6)

    def test_gaussian_sigma_checked(self):
        with pytest.raises(ValueError):
            lnp_gaussian_logpolicy_grad(np.zeros(1), 0.0, np.zeros(1), 0.0)

    def test_bernoulli_update_half_rate(self):
        x = np.array([1.0, -2.0])
        np.testing.assert_allclose(lnp_bernoulli_update(np.zeros(2), x, 1, 1.0, 1.0), 0.5 * x)
        np.testing.assert_allclose(lnp_bernoulli_update(np.zeros(2), x, -1, 1.0, 1.0), -0.5 * x)

    def test_bernoulli_update_is_scaled_gradient(self):
        rng = np.random.default_rng(8)
        k, x = rng.normal(size=3), rng.normal(size=3)
        fd = _fd(lambda v: lnp_bernoulli_log_policy(v, x, 1), k)
        np.testing.assert_allclose(lnp_bernoulli_update(k, x, 1, 0.1, 2.0), 0.2 * fd, rtol=1e-6)

    def test_poisson_mean(self):
        rng = rng_stream(1)
        counts = [lnp_poisson_sample(np.array([1.0]), np.array([math.log(3.0)]), rng) for _ in range(20_000)]
        assert abs(np.mean(counts) - 3.0) < 0.05

"""Network topology, layered sampling, and the population readout."""

import numpy as np
import pytest

from coagentrl.mathcore import softmax
from coagentrl.network import (
    MODULAR,
    CoagentNetwork,
    PopulationEnsemble,
    Topology,
    block_sizes,
    ensemble_act,
    module_of,
    own_actions,
    readout_probs,
)


def _net(hidden=(4,), n_out=2, members=1, seed=0, **kw):
    return CoagentNetwork(Topology((3, 1), hidden, n_out, **kw), n_members=members, seed=seed)


class TestTopology:
    def test_block_partition(self):
        topo = Topology((4, 1), (200,), 2, connectivity=MODULAR)
        assert {module_of(topo, i) for i in range(100)} == {0}
        assert {module_of(topo, i) for i in range(100, 200)} == {1}

    def test_uneven_blocks(self):
        assert block_sizes(5, 4) == [2, 1, 1, 1]

    def test_module_of_requires_modular(self):
        with pytest.raises(ValueError):
            module_of(Topology((4, 1), (10,), 2), 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            Topology((4, 1), (10,), 2, connectivity="sparse")
        with pytest.raises(ValueError):
            Topology((4, 1), (10,), 2, hidden_lengths=(1, 1))

    def test_modular_mask_blocks_cross_module_weights(self):
        net = _net(hidden=(6,), n_out=3, connectivity=MODULAR)
        W = net.layers[1].W[0]
        for o in range(3):
            for h in range(6):
                if h // 2 != o:
                    assert W[o, h] == 0.0

    def test_init_scale_per_layer(self):
        net = CoagentNetwork(Topology((3, 1), (50,), 2), init_scale=[10.0, 0.0])
        assert np.abs(net.layers[0].W).max() > 1.0
        assert np.all(net.layers[1].W == 0.0)
        with pytest.raises(ValueError):
            CoagentNetwork(Topology((3, 1), (50,), 2), init_scale=[1.0])


class TestForwardSample:
    def test_forced_probability_propagates(self):
        net = _net(hidden=(5, 3), n_out=2)
        rates, trace = net.forward_sample(np.ones((3, 1)), force_prob=1.0)
        assert all(np.all(s == 1.0) for s in trace.spikes)
        np.testing.assert_array_equal(rates, 1.0)

    def test_zero_weights_half_rate(self):
        net = CoagentNetwork(Topology((3, 1), (), 2), init_scale=0.0)
        fired = np.array([net.forward_sample(np.ones((3, 1)))[0][0] for _ in range(40_000)])
        np.testing.assert_allclose(fired.mean(axis=0), 0.5, atol=0.01)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            _net().forward_sample(np.ones((4, 1)))

    def test_seed_determinism(self):
        a = _net(members=3, seed=5).forward_sample(np.ones((3, 1)))[0]
        b = _net(members=3, seed=5).forward_sample(np.ones((3, 1)))[0]
        np.testing.assert_array_equal(a, b)

    def test_ising_score_cached(self):
        net = _net(hidden=(4,), n_out=2)
        _, trace = net.forward_sample(np.ones((3, 1)))
        cache = trace.caches[0]
        y = trace.spikes[0][..., 0]
        np.testing.assert_allclose(cache["grad"]["b"], y - np.tanh(cache["drive"]))

    def test_glm_layers(self):
        topo = Topology((3, 5), (4,), 2, hidden_lengths=(3,), neuron="glm", kernel_length=3,
                        history_length=2, lateral_length=1)
        net = CoagentNetwork(topo, n_members=2)
        rates, trace = net.forward_sample(np.ones((3, 5)))
        assert rates.shape == (2, 2)
        assert trace.spikes[0].shape == (2, 4, 3)
        assert set(trace.caches[0]["grad"]) == {"k", "h", "eta", "l"}


class TestReadout:
    def test_one_hot_members_pick_that_action(self):
        rates = np.zeros((5, 4))
        rates[:, 2] = 1.0
        np.testing.assert_array_equal(own_actions(rates), 2)
        p = readout_probs(rates.mean(axis=0), 1e-3)
        assert np.argmax(p) == 2 and p[2] > 0.999

    def test_readout_matches_softmax(self):
        np.testing.assert_allclose(readout_probs([1, 0, 0, 0], 0.5), softmax([1, 0, 0, 0], 0.5))

    def test_own_action_ties_to_lowest(self):
        assert own_actions(np.array([[0.5, 0.5]]))[0] == 0

    def test_single_member_population(self):
        pop = PopulationEnsemble(_net(members=1), tau_act=0.5)
        action, members, mean_rates, _ = ensemble_act(pop, np.ones((3, 1)))
        assert members.shape == (1,)
        assert 0 <= action < 2
        np.testing.assert_array_equal(mean_rates, pop.network.trace.rates[0])

    def test_vote_readout(self):
        pop = PopulationEnsemble(_net(members=4), readout="vote")
        action, members, _, _ = ensemble_act(pop, np.ones((3, 1)))
        counts = np.bincount(members, minlength=2)
        assert counts[action] == counts.max()

    def test_unknown_readout(self):
        with pytest.raises(ValueError):
            PopulationEnsemble(_net(), readout="max")

"""Mean and variance of coagent updates at a frozen state.

A :class:`BanditOracle` fixes the input state and the expected TD error of
every action, which removes all MDP randomness.  The expected coagent update
can then be estimated by Monte Carlo, computed exactly by enumerating every
spike configuration, and compared with the gradient of the deterministic
network in which each sampling node passes its firing probability through.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, tape_backward
from .mathcore import rng_stream, softmax, split_streams
from .network import CoagentNetwork, IsingLayer, Topology

ENUMERATION_CAP = 2 ** 20


@dataclass
class BanditOracle:
    """A single fixed state with known ``E[delta | a]`` for every action."""

    state: np.ndarray
    action_delta: np.ndarray
    tau_act: float = 1.0

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        if self.state.ndim == 1:
            self.state = self.state[:, None]
        self.action_delta = np.asarray(self.action_delta, dtype=float)
        if not self.tau_act > 0:
            raise ValueError("readout temperature must be positive")


def bandit_2_4_2(seed: int = 0, init_scale: float = 1.0) -> tuple[CoagentNetwork, BanditOracle]:
    """The reference instance: a 2-4-2 Ising network on a fixed two-input state."""
    net = CoagentNetwork(Topology((2, 1), (4,), 2), 1, seed, init_scale=init_scale)
    oracle = BanditOracle(state=[0.5, -1.0], action_delta=[1.0, -0.5])
    return net, oracle


def _check_ising(net: CoagentNetwork):
    if not all(isinstance(layer, IsingLayer) for layer in net.layers):
        raise TypeError("the analysis oracles support Ising networks only")


def _replicate(net: CoagentNetwork, n: int, seed: int, member: int = 0) -> CoagentNetwork:
    """``n`` copies of one member's parameters, each with its own random stream."""
    clone = CoagentNetwork(net.topology, n, seed, rngs=split_streams(seed, n, 4))
    for src, dst in zip(net.layers, clone.layers):
        for name, value in src.params().items():
            dst.params()[name][...] = value[member]
    return clone


def sample_updates(net: CoagentNetwork, oracle: BanditOracle, n_samples: int, alpha: float = 1.0,
                   seed: int = 0, member: int = 0, chunk: int = 10_000) -> list[dict]:
    """``n_samples`` independent single-step coagent updates ``alpha * delta(a) * grad ln pi``."""
    _check_ising(net)
    readout = rng_stream(seed, 5)
    parts = []
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        clone = _replicate(net, n, seed + done, member)
        rates, trace = clone.forward_sample(oracle.state)
        probs = softmax(rates, oracle.tau_act)
        u = readout.random(n)
        actions = np.minimum((np.cumsum(probs, axis=1) <= u[:, None]).sum(axis=1), probs.shape[1] - 1)
        delta = oracle.action_delta[actions]
        parts.append([
            {k: alpha * delta.reshape((n,) + (1,) * (g.ndim - 1)) * g for k, g in cache["grad"].items()}
            for cache in trace.caches
        ])
        done += n
    return [{k: np.concatenate([p[li][k] for p in parts]) for k in parts[0][li]} for li in range(len(parts[0]))]


def expected_coagent_update_mc(net: CoagentNetwork, oracle: BanditOracle, n_samples: int,
                               alpha: float = 1.0, seed: int = 0, member: int = 0):
    """Monte-Carlo mean and standard error of the update, per layer and parameter."""
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    samples = sample_updates(net, oracle, n_samples, alpha, seed, member)
    mean = [{k: v.mean(axis=0) for k, v in layer.items()} for layer in samples]
    se = [{k: v.std(axis=0, ddof=1) / np.sqrt(n_samples) for k, v in layer.items()} for layer in samples]
    return mean, se


def _configs(n_units: int, length: int) -> np.ndarray:
    bits = np.array(list(itertools.product((-1.0, 1.0), repeat=n_units * length)))
    return bits.reshape(-1, n_units, length)


def expected_update_analytic(net: CoagentNetwork, oracle: BanditOracle, alpha: float = 1.0,
                             member: int = 0) -> list[dict]:
    """Exact expected update by summing over every spike configuration of every layer."""
    _check_ising(net)
    n_bits = sum(layer.n_out * layer.out_length for layer in net.layers)
    if 2 ** n_bits > ENUMERATION_CAP:
        raise ValueError("enumeration cap exceeded")
    params = [(layer.W[member], layer.b[member], layer.mask) for layer in net.layers]
    configs = [_configs(layer.n_out, layer.out_length) for layer in net.layers]
    total = [{"W": np.zeros_like(W), "b": np.zeros_like(b)} for W, b, _ in params]

    def visit(li, x, weight, grads):
        if li == len(params):
            probs = softmax((x.reshape(net.n_actions, -1) > 0).mean(axis=1), oracle.tau_act)
            scale = weight * alpha * float(probs @ oracle.action_delta)
            for acc, g in zip(total, grads):
                acc["W"] += scale * g["W"]
                acc["b"] += scale * g["b"]
            return
        W, b, mask = params[li]
        u = W @ x + b
        ys = configs[li]
        # P(y) = prod sigma(2 u y) over units and bins
        logp = -np.logaddexp(0.0, -2.0 * u[None, :, None] * ys).sum(axis=(1, 2))
        for y, lp in zip(ys, logp):
            score = (y - np.tanh(u)[:, None]).sum(axis=1)
            g = {"W": score[:, None] * x[None, :] * mask, "b": score}
            visit(li + 1, y.reshape(-1), weight * np.exp(lp), grads + [g])

    visit(0, oracle.state.reshape(-1), 1.0, [])
    return total


def backprop_gradient(net: CoagentNetwork, oracle: BanditOracle, alpha: float = 1.0,
                      member: int = 0) -> list[dict]:
    """Gradient of ``sum_a pi(a) delta(a)`` for the equivalent deterministic network.

    Each sampling node is replaced by its expectation: hidden units pass
    ``E[y] = 2 sigma(2u) - 1`` on, output units report their firing
    probability as the rate.  The result is ``alpha`` times that gradient.
    """
    _check_ising(net)
    if any(layer.out_length != 1 for layer in net.layers):
        raise ValueError("pass-through gradient needs single-bin spike trains")
    tape = Tape()
    leaves = []
    x = tape.const(oracle.state.reshape(-1))
    for li, layer in enumerate(net.layers):
        W = tape.param(layer.W[member], f"W{li}")
        b = tape.param(layer.b[member], f"b{li}")
        leaves += [W, b]
        p = tape.sigmoid(tape.mul(tape.add(tape.matmul(tape.mul(W, layer.mask), x), b), 2.0))
        last = li == len(net.layers) - 1
        x = p if last else tape.add(tape.mul(p, 2.0), -1.0)
    probs = tape.softmax(tape.mul(x, 1.0 / oracle.tau_act))
    objective = tape.sum(tape.mul(probs, oracle.action_delta))
    grads = tape_backward(tape, objective, leaves)
    return [{"W": alpha * grads[f"W{li}"], "b": alpha * grads[f"b{li}"]} for li in range(len(net.layers))]


@dataclass
class VarianceRow:
    layer: int
    param: str
    index: tuple
    coagent_mean: float
    coagent_var: float
    analytic_mean: float
    backprop: float
    backprop_var: float = 0.0


def update_variance_report(net: CoagentNetwork, oracle: BanditOracle, n_samples: int,
                           alpha: float = 1.0, seed: int = 0, member: int = 0) -> list[VarianceRow]:
    """One row per parameter: coagent mean and variance, exact mean, and the backprop gradient."""
    samples = sample_updates(net, oracle, n_samples, alpha, seed, member)
    exact = expected_update_analytic(net, oracle, alpha, member)
    bp = backprop_gradient(net, oracle, alpha, member)
    rows = []
    for li, layer in enumerate(samples):
        for name, values in layer.items():
            mean, var = values.mean(axis=0), values.var(axis=0, ddof=1)
            for idx in np.ndindex(mean.shape):
                rows.append(VarianceRow(li, name, idx, float(mean[idx]), float(var[idx]),
                                        float(exact[li][name][idx]), float(bp[li][name][idx])))
    return rows


def format_report(rows: list[VarianceRow]) -> str:
    """CSV text of a variance report."""
    lines = ["layer,param,index,coagent_mean,coagent_var,analytic_mean,backprop,backprop_var"]
    for r in rows:
        idx = "-".join(str(i) for i in r.index)
        lines.append(f"{r.layer},{r.param},{idx},{r.coagent_mean:.6g},{r.coagent_var:.6g},"
                     f"{r.analytic_mean:.6g},{r.backprop:.6g},{r.backprop_var:.6g}")
    return "\n".join(lines) + "\n"


def population_variance_slope(net: CoagentNetwork, oracle: BanditOracle, sizes=(1, 2, 4, 8),
                              n_groups: int = 2000, seed: int = 0) -> tuple[float, dict]:
    """Slope of log total variance of the N-member averaged update against log N.

    Each member draws its own spikes and action, so the averaged update is a
    mean of ``N`` independent single-network updates.
    """
    variances = {}
    for n in sizes:
        samples = sample_updates(net, oracle, n_groups * n, seed=seed + 7919 * n)
        flat = np.concatenate([v.reshape(n_groups * n, -1) for layer in samples for v in layer.values()], axis=1)
        averaged = flat.reshape(n_groups, n, -1).mean(axis=1)
        variances[n] = float(averaged.var(axis=0, ddof=1).sum())
    slope = np.polyfit(np.log(list(variances)), np.log(list(variances.values())), 1)[0]
    return float(slope), variances

"""Layered coagent networks, population ensembles, and the action readout.

A :class:`CoagentNetwork` stores the parameters of ``N`` structurally
identical member networks side by side (leading axis ``N``) so that a whole
population is sampled with a handful of array operations.  Each member still
owns its own random stream; a single network is just ``N = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mathcore import RngStream, rng_stream, sigmoid, softmax, split_streams
from .neurons import ising_score

FULLY_CONNECTED = "full"
MODULAR = "modular"


@dataclass
class Topology:
    """Layer sizes, spike-train lengths and connectivity of a coagent network.

    ``input_shape`` is the ``(S, K)`` shape of the encoded state.  Hidden
    layer ``i`` has ``hidden[i]`` coagents emitting trains of
    ``hidden_lengths[i]`` bins; the output layer has one coagent per action.
    ``neuron`` is ``"ising"`` (memoryless, input trains are flattened) or
    ``"glm"`` (causal stimulus filters of ``kernel_length`` taps).
    """

    input_shape: tuple[int, int]
    hidden: tuple[int, ...]
    n_outputs: int
    hidden_lengths: tuple[int, ...] | None = None
    output_length: int = 1
    connectivity: str = FULLY_CONNECTED
    neuron: str = "ising"
    kernel_length: int = 1
    history_length: int = 0
    lateral_length: int = 0

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.hidden = tuple(self.hidden)
        if self.hidden_lengths is None:
            self.hidden_lengths = (1,) * len(self.hidden)
        self.hidden_lengths = tuple(self.hidden_lengths)
        if len(self.hidden_lengths) != len(self.hidden):
            raise ValueError("one spike-train length per hidden layer required")
        if self.connectivity not in (FULLY_CONNECTED, MODULAR):
            raise ValueError(f"unknown connectivity: {self.connectivity}")
        if self.neuron not in ("ising", "glm"):
            raise ValueError(f"unknown neuron model: {self.neuron}")
        if self.n_outputs < 1:
            raise ValueError("need at least one output coagent")

    @property
    def layer_sizes(self) -> list[int]:
        return [*self.hidden, self.n_outputs]

    @property
    def layer_lengths(self) -> list[int]:
        return [*self.hidden_lengths, self.output_length]


def block_sizes(n_units: int, n_modules: int) -> list[int]:
    """Balanced contiguous blocks; the first ``n_units % n_modules`` get one extra."""
    base, extra = divmod(n_units, n_modules)
    return [base + (1 if m < extra else 0) for m in range(n_modules)]


def module_assignment(n_units: int, n_modules: int) -> np.ndarray:
    return np.repeat(np.arange(n_modules), block_sizes(n_units, n_modules))


def module_of(topology: Topology, hidden_index: int, layer: int = -1) -> int:
    """Output module that hidden coagent ``hidden_index`` of ``layer`` belongs to."""
    if topology.connectivity != MODULAR:
        raise ValueError("module_of is only defined for modular topologies")
    n = topology.hidden[layer]
    if not 0 <= hidden_index < n:
        raise IndexError(hidden_index)
    return int(module_assignment(n, topology.n_outputs)[hidden_index])


def unit_modules(topology: Topology) -> list[np.ndarray]:
    """Module id of every coagent, per layer (output coagent ``m`` is module ``m``)."""
    m = topology.n_outputs
    return [module_assignment(n, m) for n in topology.hidden] + [np.arange(m)]


def _connection_masks(topology: Topology) -> list[np.ndarray]:
    """``mask[l][o, i]`` is 1 where unit ``o`` of layer ``l`` listens to input ``i``."""
    masks = []
    n_in = topology.input_shape[0]
    prev_modules = None
    for n_out, modules in zip(topology.layer_sizes, unit_modules(topology)):
        if topology.connectivity == MODULAR and prev_modules is not None:
            mask = (modules[:, None] == prev_modules[None, :]).astype(float)
        else:
            mask = np.ones((n_out, n_in))
        masks.append(mask)
        n_in, prev_modules = n_out, modules
    return masks


# --- layers ------------------------------------------------------------------


class IsingLayer:
    """Memoryless +-1 coagents; every bin of the output train is an independent draw."""

    kind = "ising"

    def __init__(self, n_members, n_out, n_in, in_length, out_length, mask, init_rng, init_scale):
        self.n_out, self.out_length = n_out, out_length
        d = n_in * in_length
        self.mask = np.repeat(mask, in_length, axis=1)
        scale = init_scale / np.sqrt(max(d, 1))
        self.W = init_rng.normal(0.0, scale, size=(n_members, n_out, d)) * self.mask
        self.b = np.zeros((n_members, n_out))

    def params(self):
        return {"W": self.W, "b": self.b}

    def drive(self, x):
        flat = x.reshape(x.shape[0], -1)
        return np.einsum("nod,nd->no", self.W, flat) + self.b

    def sample(self, x, rngs, force_prob=None):
        flat = x.reshape(x.shape[0], -1)
        u = self.drive(x)
        p = sigmoid(2.0 * u) if force_prob is None else np.full_like(u, force_prob)
        noise = np.stack([r.random((self.n_out, self.out_length)) for r in rngs])
        y = np.where(noise < p[:, :, None], 1.0, -1.0)
        score = ising_score(u[:, :, None], y).sum(axis=2)
        grads = {"W": score[:, :, None] * flat[:, None, :] * self.mask, "b": score}
        post = y.sum(axis=2)
        hebb = {"W": post[:, :, None] * flat[:, None, :] * self.mask, "b": post}
        return y, {"input": flat, "drive": u, "prob": p, "grad": grads, "hebb": hebb}

    def mean_activity(self, x_mean):
        """Expected +-1 output when the input is replaced by its expectation."""
        return np.tanh(self.drive(x_mean))[:, :, None].repeat(self.out_length, axis=2)


class GLMLayer:
    """Bernoulli-GLM coagents with causal stimulus filters and optional history/lateral filters.

    Output bin ``t`` is aligned with stimulus time ``t + (K_in - K_out)``.
    """

    kind = "glm"

    def __init__(self, n_members, n_out, n_in, in_length, out_length, mask, init_rng, init_scale,
                 kernel_length=1, history_length=0, lateral_length=0):
        self.n_out, self.out_length = n_out, out_length
        self.mask = mask
        self.offset = in_length - out_length
        scale = init_scale / np.sqrt(max(n_in * kernel_length, 1))
        self.k = init_rng.normal(0.0, scale, size=(n_members, n_out, n_in, kernel_length)) * mask[None, :, :, None]
        self.h = np.zeros((n_members, n_out, history_length))
        self.l = np.zeros((n_members, n_out, n_out, lateral_length)) if lateral_length else None
        self.eta = np.zeros((n_members, n_out))

    def params(self):
        p = {"k": self.k, "h": self.h, "eta": self.eta}
        if self.l is not None:
            p["l"] = self.l
        return p

    def _lagged_stimulus(self, x):
        # X[n, t, i, j] = x[n, i, t + offset - j]
        K_in, L = x.shape[2], self.k.shape[3]
        idx = (np.arange(self.out_length) + self.offset)[:, None] - np.arange(L)[None, :]
        valid = (idx >= 0) & (idx < K_in)
        X = x[:, :, np.clip(idx, 0, K_in - 1)]  # n, i, t, j
        return np.where(valid[None, None], X, 0.0).transpose(0, 2, 1, 3)

    def sample(self, x, rngs, force_prob=None):
        N = x.shape[0]
        K, H = self.out_length, self.h.shape[2]
        X = self._lagged_stimulus(x)
        stim = np.einsum("noij,ntij->not", self.k, X) + self.eta[:, :, None]
        noise = np.stack([r.random((self.n_out, K)) for r in rngs])
        y = np.zeros((N, self.n_out, K))
        lam = np.zeros_like(y)
        Z = np.zeros((N, self.n_out, K, H))
        Xi = None if self.l is None else np.zeros((N, K, self.n_out, self.l.shape[3]))
        for t in range(K):
            drive = stim[:, :, t].copy()
            for j in range(min(H, t)):
                Z[:, :, t, j] = y[:, :, t - 1 - j]
            if H:
                drive += np.einsum("noj,noj->no", self.h, Z[:, :, t, :])
            if Xi is not None:
                for j in range(min(self.l.shape[3], t)):
                    Xi[:, t, :, j] = y[:, :, t - 1 - j]
                drive += np.einsum("noij,nij->no", self.l, Xi[:, t])
            lam[:, :, t] = sigmoid(drive) if force_prob is None else force_prob
            y[:, :, t] = np.where(noise[:, :, t] < lam[:, :, t], 1.0, -1.0)
        e = (y > 0) - lam
        grads = {
            "k": np.einsum("not,ntij->noij", e, X) * self.mask[None, :, :, None],
            "h": np.einsum("not,notj->noj", e, Z),
            "eta": e.sum(axis=2),
        }
        post = y.sum(axis=2)
        hebb = {
            "k": np.einsum("not,ntij->noij", y, X) * self.mask[None, :, :, None],
            "h": np.einsum("not,notj->noj", y, Z),
            "eta": post,
        }
        if Xi is not None:
            grads["l"] = np.einsum("not,ntij->noij", e, Xi)
            hebb["l"] = np.einsum("not,ntij->noij", y, Xi)
        return y, {"input": x, "prob": lam, "grad": grads, "hebb": hebb}


# --- network -----------------------------------------------------------------


@dataclass
class Trace:
    """Everything recorded by one ``forward_sample``: per-layer spikes and caches."""

    spikes: list
    caches: list
    rates: np.ndarray


class CoagentNetwork:
    """``n_members`` independent coagent networks sharing one :class:`Topology`."""

    def __init__(self, topology: Topology, n_members: int = 1, seed: int = 0, init_scale=1.0,
                 rngs: list[RngStream] | None = None):
        if n_members < 1:
            raise ValueError("population must be non-empty")
        self.topology = topology
        self.n_members = n_members
        self.seed = seed
        self.rngs = rngs if rngs is not None else split_streams(seed, n_members, 0)
        init_rng = rng_stream(seed, 3)
        masks = _connection_masks(topology)
        self.modules = unit_modules(topology)
        n_in, k_in = topology.input_shape
        n_layers = len(topology.layer_sizes)
        scales = list(init_scale) if np.ndim(init_scale) else [init_scale] * n_layers
        if len(scales) != n_layers:
            raise ValueError("init_scale needs one entry per layer")
        self.layers = []
        for n_out, k_out, mask, init_scale in zip(topology.layer_sizes, topology.layer_lengths, masks, scales):
            if topology.neuron == "ising":
                layer = IsingLayer(n_members, n_out, n_in, k_in, k_out, mask, init_rng, init_scale)
            else:
                layer = GLMLayer(n_members, n_out, n_in, k_in, k_out, mask, init_rng, init_scale,
                                 topology.kernel_length, topology.history_length, topology.lateral_length)
            self.layers.append(layer)
            n_in, k_in = n_out, k_out
        self.trace: Trace | None = None
        self.velocity = None

    @property
    def n_actions(self) -> int:
        return self.topology.n_outputs

    def parameters(self) -> list[dict]:
        return [layer.params() for layer in self.layers]

    def copy_parameters(self) -> list[dict]:
        return [{k: v.copy() for k, v in p.items()} for p in self.parameters()]

    def forward_sample(self, encoded, force_prob=None) -> tuple[np.ndarray, Trace]:
        """Sample every member's spike trains layer by layer.

        ``encoded`` is an ``(S, K)`` state shared by all members (or
        ``(N, S, K)``).  Returns output firing rates ``(N, n_actions)`` in
        ``[0, 1]`` and the trace, which is also kept on ``self.trace``.
        """
        x = np.asarray(encoded, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim == 2:
            x = np.broadcast_to(x, (self.n_members, *x.shape))
        if x.shape[1:] != self.topology.input_shape:
            raise ValueError(f"encoded state shape {x.shape[1:]} != {self.topology.input_shape}")
        spikes, caches = [], []
        for layer in self.layers:
            x, cache = layer.sample(x, self.rngs, force_prob)
            spikes.append(x)
            caches.append(cache)
        rates = (x > 0).mean(axis=2)
        self.trace = Trace(spikes, caches, rates)
        return rates, self.trace


def own_actions(rates: np.ndarray) -> np.ndarray:
    """Each member's preferred action: argmax of its own rates, ties to the lowest index."""
    return np.argmax(rates, axis=-1)


@dataclass
class PopulationEnsemble:
    """A population of member networks plus the stream used for the final action."""

    network: CoagentNetwork
    tau_act: float = 1.0
    readout: str = "mean-rate"
    rng: RngStream = field(default=None)

    def __post_init__(self):
        if self.rng is None:
            self.rng = rng_stream(self.network.seed, 1)
        if self.readout not in ("mean-rate", "vote"):
            raise ValueError(f"unknown readout: {self.readout}")

    @property
    def size(self) -> int:
        return self.network.n_members


def ensemble_act(pop: PopulationEnsemble, encoded):
    """Forward every member, pick the executed action, and report member actions.

    ``mean-rate`` readout samples from softmax(mean rates / tau_act) and each
    member's own action is its argmax.  ``vote`` lets every member sample from
    softmax of its own rates; the most voted action (lowest index on ties)
    is executed.
    Returns ``(action, member_actions, mean_rates, trace)``.
    """
    rates, trace = pop.network.forward_sample(encoded)
    mean_rates = rates.mean(axis=0)
    if pop.readout == "mean-rate":
        probs = softmax(mean_rates, pop.tau_act)
        action = int(min(np.searchsorted(np.cumsum(probs), pop.rng.random(), side="right"), len(probs) - 1))
        members = own_actions(rates)
    else:
        probs = softmax(rates, pop.tau_act)
        u = pop.rng.random(rates.shape[0])
        members = np.minimum((np.cumsum(probs, axis=1) <= u[:, None]).sum(axis=1), rates.shape[1] - 1)
        action = int(np.argmax(np.bincount(members, minlength=rates.shape[1])))
    return action, members, mean_rates, trace


def readout_probs(mean_rates, tau_act: float) -> np.ndarray:
    return softmax(mean_rates, tau_act)

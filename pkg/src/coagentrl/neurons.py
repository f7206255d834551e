"""Stochastic firing policies of single neurons and their log-policy gradients.

Spikes use the +-1 convention (+1 fired, -1 silent) except for the LIF model,
whose action set is ``{1 fire, 0 silent}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mathcore import RngStream, sigmoid

PROB_CLAMP = 1e-12
GRADED_ACTIONS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


def _check_fan_in(weights, inputs):
    if np.shape(weights)[-1] != np.shape(inputs)[-1]:
        raise ValueError(
            f"dimension mismatch: {np.shape(weights)[-1]} weights, {np.shape(inputs)[-1]} inputs"
        )


# --- Ising -----------------------------------------------------------------


@dataclass
class IsingParams:
    bias: float
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)


def ising_drive(params: IsingParams, inputs) -> float:
    inputs = np.asarray(inputs, dtype=float)
    _check_fan_in(params.weights, inputs)
    return float(params.bias + params.weights @ inputs)


def ising_fire_prob(params: IsingParams, inputs) -> float:
    """P(fire) = e^u / (e^u + e^-u) = sigmoid(2u) with u = b + W.x."""
    return float(sigmoid(2.0 * ising_drive(params, inputs)))


def ising_log_policy(params: IsingParams, inputs, action: int) -> float:
    u = ising_drive(params, inputs)
    # log sigmoid(2 a u), written to stay finite for large |u|
    return float(-np.logaddexp(0.0, -2.0 * action * u))


def ising_score(u, action):
    """d ln pi / du for the binary Ising policy: ``a - tanh(u)``.

    Equals 2e^-u/(e^u+e^-u) when a=+1 and -2e^u/(e^u+e^-u) when a=-1.
    Vectorised over ``u`` and ``action``.
    """
    return np.asarray(action, dtype=float) - np.tanh(u)


def ising_logpolicy_grad(params: IsingParams, inputs, action: int) -> tuple[float, np.ndarray]:
    """Gradient of ``ln pi(action)`` with respect to ``(bias, weights)``."""
    if action not in (-1, 1):
        raise ValueError("action must be +1 or -1")
    inputs = np.asarray(inputs, dtype=float)
    coef = float(ising_score(ising_drive(params, inputs), action))
    return coef, coef * inputs


def ising_graded_policy(params: IsingParams, inputs) -> np.ndarray:
    """Categorical policy over graded activity levels -2..2 with logits ``a_k * A``."""
    A = ising_drive(params, inputs)
    z = GRADED_ACTIONS * A
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def ising_graded_logpolicy_grad(params: IsingParams, inputs, action_index: int):
    """Gradient of ``ln pi(a_k)`` for the graded policy; returns ``(d_bias, d_weights)``."""
    inputs = np.asarray(inputs, dtype=float)
    pi = ising_graded_policy(params, inputs)
    coef = float(GRADED_ACTIONS[action_index] - pi @ GRADED_ACTIONS)
    return coef, coef * inputs


# --- stochastic leaky integrate-and-fire -----------------------------------


@dataclass
class LifParams:
    bias: float
    weights: np.ndarray
    tau_m: float = 1.0
    threshold: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not self.tau_m > 0:
            raise ValueError("tau_m must be positive")


def psp_kernel(delta, tau_m: float):
    """Post-synaptic potential ``exp(-delta / tau_m)`` for ``delta >= 0``, zero before."""
    delta = np.asarray(delta, dtype=float)
    return np.where(delta >= 0, np.exp(-np.maximum(delta, 0.0) / tau_m), 0.0)


def psp_sums(params: LifParams, presyn_spike_times, t: float) -> np.ndarray:
    """Per-input sum of PSPs at time ``t``; one spike-time list per input."""
    if len(presyn_spike_times) != params.weights.size:
        raise ValueError("need one spike-time list per input")
    return np.array(
        [float(np.sum(psp_kernel(t - np.asarray(times, dtype=float), params.tau_m))) if len(times) else 0.0
         for times in presyn_spike_times]
    )


def lif_membrane(params: LifParams, presyn_spike_times, t: float) -> float:
    return float(params.bias + params.weights @ psp_sums(params, presyn_spike_times, t))


def lif_fire_prob(params: LifParams, u: float) -> float:
    return float(sigmoid(u - params.threshold))


def lif_fire_grad(params: LifParams, u: float, action: int, psp) -> np.ndarray:
    """Gradient of ``ln pi(action)`` over the weights; ``action`` is 1 (fire) or 0."""
    psp = np.asarray(psp, dtype=float)
    s = float(sigmoid(u - params.threshold))
    ds = s * (1.0 - s)
    if action == 1:
        if s == 0.0:
            return np.zeros_like(psp)
        return ds / s * psp
    if action == 0:
        if s == 1.0:
            return np.zeros_like(psp)
        return -ds / (1.0 - s) * psp
    raise ValueError("action must be 1 (fire) or 0 (silent)")


def first_to_spike_race(neurons, presyn_spike_times, t_grid, rng: RngStream):
    """Laterally inhibiting race: the first neuron to fire ends the episode for all.

    Returns ``(winner, t_fire, grads)`` where ``grads[i]`` is the summed
    log-policy gradient of neuron ``i`` over the bins it lived through; the
    winner's last bin counts as a fire, every other bin as silence.  ``winner``
    is ``None`` when nobody fires on the grid.
    """
    grads = [np.zeros_like(n.weights) for n in neurons]
    for t in t_grid:
        us = [lif_membrane(n, presyn_spike_times, t) for n in neurons]
        fired = [rng.random() < lif_fire_prob(n, u) for n, u in zip(neurons, us)]
        winner = next((i for i, f in enumerate(fired) if f), None)
        for i, (n, u) in enumerate(zip(neurons, us)):
            a = 1 if i == winner else 0
            grads[i] += lif_fire_grad(n, u, a, psp_sums(n, presyn_spike_times, t))
        if winner is not None:
            return winner, t, grads
    return None, None, grads


# --- GLM spiking coagent ---------------------------------------------------


@dataclass
class GLMParams:
    """Filters of one GLM coagent.

    ``k`` has one row of taps per presynaptic neuron, ``h`` filters the
    coagent's own spike history and ``l`` (one row per lateral neighbour)
    filters neighbour activity from the previous bin onward.
    """

    k: np.ndarray
    h: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l: np.ndarray | None = None
    eta: float = 0.0

    def __post_init__(self):
        self.k = np.atleast_2d(np.asarray(self.k, dtype=float))
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.l is not None:
            self.l = np.atleast_2d(np.asarray(self.l, dtype=float))


@dataclass
class CoagentState:
    """What a GLM coagent conditions on during one MDP step.

    ``x`` holds the presynaptic spike trains (``n_in x K_in``); ``xi`` the
    lateral neighbours' trains in this step (``n_lat x K_out``) or ``None``.
    The own history is the spike train being scored/generated.
    ``offset`` aligns output bin ``t`` with stimulus time ``t + offset``;
    by default output and stimulus trains are aligned at their last bin.
    """

    x: np.ndarray
    xi: np.ndarray | None = None
    offset: int | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))


def _lagged(trains: np.ndarray, times, n_taps: int) -> np.ndarray:
    """``out[t, i, j] = trains[i, times[t] - j]`` with zeros outside the train."""
    n, T = trains.shape
    times = np.asarray(times)
    idx = times[:, None] - np.arange(n_taps)[None, :]
    valid = (idx >= 0) & (idx < T)
    out = np.where(valid[:, None, :], trains[:, np.clip(idx, 0, T - 1)].transpose(1, 0, 2), 0.0)
    return out


def _glm_inputs(params: GLMParams, state: CoagentState, y: np.ndarray):
    """Lagged input windows for every bin of a length-``len(y)`` response."""
    K = len(y)
    K_in = state.x.shape[1]
    offset = K_in - K if state.offset is None else state.offset
    if params.k.shape[0] != state.x.shape[0]:
        raise ValueError("one stimulus filter per presynaptic neuron required")
    X = _lagged(state.x, np.arange(K) + offset, params.k.shape[1])
    H = (
        _lagged(np.asarray(y, dtype=float)[None, :], np.arange(K) - 1, params.h.size)[:, 0, :]
        if params.h.size
        else np.zeros((K, 0))
    )
    if params.l is not None and state.xi is not None:
        L = _lagged(state.xi, np.arange(K) - 1, params.l.shape[1])
    else:
        L = None
    return X, H, L


def _glm_lambdas(params, X, H, L):
    drive = np.einsum("tij,ij->t", X, params.k) + H @ params.h + params.eta
    if L is not None:
        drive = drive + np.einsum("tij,ij->t", L, params.l)
    return sigmoid(np.atleast_1d(drive))


def glm_fire_prob(params: GLMParams, state: CoagentState, t: int, history=()) -> float:
    """Firing probability at bin ``t`` given the realised own history ``history[:t]``."""
    y = np.zeros(t + 1)
    past = np.asarray(history, dtype=float)[:t]
    y[: past.size] = past
    X, H, L = _glm_inputs(params, state, y)
    return float(_glm_lambdas(params, X, H, L)[t])


def glm_lambdas(params: GLMParams, state: CoagentState, y) -> np.ndarray:
    """Per-bin firing probabilities conditioned on the realised train ``y``."""
    y = np.asarray(y, dtype=float)
    return _glm_lambdas(params, *_glm_inputs(params, state, y))


def glm_sample(params: GLMParams, state: CoagentState, K: int, rng: RngStream) -> np.ndarray:
    """Generate a length-``K`` +-1 train bin by bin (history fed back)."""
    y = np.zeros(K)
    for t in range(K):
        lam = glm_fire_prob(params, state, t, y[:t])
        y[t] = 1.0 if rng.random() < lam else -1.0
    return y


def glm_spiketrain_logprob(params: GLMParams, state: CoagentState, y) -> float:
    y = np.asarray(y, dtype=float)
    lam = np.clip(glm_lambdas(params, state, y), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.sum(np.where(y > 0, np.log(lam), np.log1p(-lam))))


def glm_logprob_grad(params: GLMParams, state: CoagentState, y) -> GLMParams:
    """Gradient of the train log-probability, packaged as a :class:`GLMParams`."""
    y = np.asarray(y, dtype=float)
    X, H, L = _glm_inputs(params, state, y)
    lam = _glm_lambdas(params, X, H, L)
    e = (y > 0).astype(float) - lam
    dk = np.einsum("t,tij->ij", e, X)
    dh = e @ H if params.h.size else np.zeros(0)
    dl = np.einsum("t,tij->ij", e, L) if L is not None else None
    return GLMParams(k=dk, h=dh, l=dl, eta=float(e.sum()))


# --- LNP simplifications ---------------------------------------------------


def lnp_rate(k, x, link=None):
    lin = float(np.dot(k, x))
    return lin if link is None else float(link(lin))


def lnp_poisson_sample(k, x, rng: RngStream, link=np.exp) -> int:
    """Spike count drawn from Poisson(f(k.x))."""
    return int(rng.poisson(lnp_rate(k, x, link)))


def lnp_gaussian_log_policy(k, sigma: float, x, y: float) -> float:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    lam = lnp_rate(k, x)
    return float(-0.5 * np.log(2 * np.pi) - np.log(sigma) - (y - lam) ** 2 / (2 * sigma**2))


def lnp_gaussian_logpolicy_grad(k, sigma: float, x, y: float) -> np.ndarray:
    """d/dk of log N(y; k.x, sigma^2) with identity link."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    return (y - lnp_rate(k, x)) / sigma**2 * x


def lnp_bernoulli_log_policy(k, x, y: int) -> float:
    lam = float(np.clip(sigmoid(np.dot(k, x)), PROB_CLAMP, 1 - PROB_CLAMP))
    return float(np.log(lam) if y > 0 else np.log1p(-lam))


def lnp_bernoulli_update(k, x, y: int, alpha: float, delta: float) -> np.ndarray:
    """Parameter change ``alpha * delta * ((1 - lam) x  if y = +1 else -lam x)``."""
    x = np.asarray(x, dtype=float)
    lam = float(sigmoid(np.dot(k, x)))
    factor = (1.0 - lam) if y > 0 else -lam
    return alpha * delta * factor * x

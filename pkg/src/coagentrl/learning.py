"""Global TD(lambda) critic and the coagent (PGCN) actor update.

Every coagent climbs its own log-policy gradient scaled by a TD error that the
critic broadcasts.  Population and modular variants only change which signed
copy of that error each coagent receives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import MODULAR, PopulationEnsemble, ensemble_act

TABULAR, LINEAR = "tabular", "linear"


class Critic:
    """State-value estimator with an accumulating eligibility trace.

    ``TABULAR`` critics are indexed by integer states ``0..n-1``; ``LINEAR``
    critics take a feature vector (a constant bias feature is appended).
    """

    def __init__(self, mode: str, size: int, alpha: float, gamma: float, lam: float,
                 init_value: float = 0.0):
        if mode not in (TABULAR, LINEAR):
            raise ValueError(f"unknown critic mode: {mode}")
        if not alpha > 0:
            raise ValueError("critic step size must be positive")
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        self.mode = mode
        self.size = size
        self.alpha, self.gamma, self.lam = alpha, gamma, lam
        dim = size if mode == TABULAR else size + 1
        self.theta = np.zeros(dim)
        # optimistic start: every tabular state, or the bias weight of a linear critic
        if mode == TABULAR:
            self.theta[:] = init_value
        else:
            self.theta[-1] = init_value
        self.trace = np.zeros(dim)

    def reset_trace(self):
        self.trace[:] = 0.0

    def features(self, s) -> np.ndarray:
        """dV/dtheta at ``s``: an indicator (tabular) or the feature vector (linear)."""
        if self.mode == TABULAR:
            s = int(s)
            if not 0 <= s < self.size:
                raise KeyError(f"unknown tabular state: {s}")
            phi = np.zeros(self.size)
            phi[s] = 1.0
            return phi
        phi = np.asarray(s, dtype=float).ravel()
        if phi.size != self.size:
            raise ValueError(f"expected {self.size} features, got {phi.size}")
        return np.append(phi, 1.0)

    def value(self, s) -> float:
        if self.mode == TABULAR:
            s = int(s)
            if not 0 <= s < self.size:
                raise KeyError(f"unknown tabular state: {s}")
            return float(self.theta[s])
        return float(self.features(s) @ self.theta)


def td_error(critic: Critic, s, reward: float, s_next, terminal: bool) -> float:
    """``r + gamma V(s') [not terminal] - V(s)``."""
    v_next = 0.0 if terminal else critic.value(s_next)
    return float(reward + critic.gamma * v_next - critic.value(s))


def critic_update(critic: Critic, delta: float, s) -> None:
    """TD(lambda): decay-and-accumulate the trace, then move along it."""
    if not np.isfinite(delta):
        raise ValueError("TD error must be finite")
    critic.trace *= critic.gamma * critic.lam
    critic.trace += critic.features(s)
    critic.theta += critic.alpha * delta * critic.trace


def population_delta(delta, member_action, ensemble_action):
    """``delta`` when the member agrees with the ensemble, ``-delta`` otherwise (vectorised)."""
    return np.where(np.asarray(member_action) == ensemble_action, delta, -delta)


def modular_delta(delta, chosen_action: int, output_fired, kappa=None, kappa_scale: float = 1.0) -> np.ndarray:
    """TD signal per action module.

    The chosen module gets ``delta``; every other module is pushed toward
    silence: ``+|kappa|`` if its output stayed silent, ``-|kappa|`` if it
    fired.  ``kappa`` defaults to ``kappa_scale * |delta|``.  ``delta`` and ``output_fired``
    may carry a leading member axis.
    """
    fired = np.asarray(output_fired, dtype=bool)
    d = np.asarray(delta, dtype=float)[..., None]
    k = kappa_scale * np.abs(d) if kappa is None else abs(kappa)
    out = np.where(fired, -k, k) * np.ones(np.broadcast_shapes(fired.shape, d.shape))
    out[..., chosen_action] = d[..., 0]
    return out


def hebbian_update(pre, post, alpha: float):
    """Plain Hebbian change ``alpha * pre * post``."""
    return alpha * np.asarray(pre, dtype=float) * np.asarray(post, dtype=float)


RULES = ("pgcn", "hebbian", "hebbian-td")


@dataclass
class LearnerConfig:
    alpha: float = 0.01
    critic_alpha: float = 0.1
    gamma: float = 0.9
    lam: float = 0.8
    population: int = 10
    rule: str = "pgcn"  # pgcn | hebbian | hebbian-td
    kappa: float | None = None
    kappa_scale: float = 1.0
    delta_clip: float | None = None
    lr_decay: float = 1.0  # multiplied into alpha after each episode
    momentum: float = 0.0
    weight_clip: float | None = None

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if not self.critic_alpha > 0:
            raise ValueError("critic step size must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.rule not in RULES:
            raise ValueError(f"unknown learning rule: {self.rule}")


def _per_unit(net, delta):
    """Expand a TD signal to ``(N, n_units)`` per layer.

    Accepts a scalar, a per-member ``(N,)`` array, a per-module ``(N, M)``
    array (expanded through the module map), or an explicit per-layer list.
    """
    if isinstance(delta, list):
        return delta
    d = np.asarray(delta, dtype=float)
    N = net.n_members
    if d.ndim == 0:
        d = np.full(N, float(d))
    if d.ndim == 1:
        return [np.repeat(d[:, None], layer.n_out, axis=1) for layer in net.layers]
    return [d[:, modules] for modules in net.modules]


def coagent_update(net, delta, alpha: float, rule: str = "pgcn", momentum: float = 0.0,
                   weight_clip: float | None = None) -> None:
    """Apply ``theta_c += alpha * delta_c * grad ln pi_c`` to every coagent and clear the trace.

    With ``rule="hebbian"`` the recorded pre/post products replace the
    log-policy gradient and ``delta`` is ignored (plain Hebbian).  With
    ``rule="hebbian-td"`` the products are scaled by ``delta`` as usual.
    """
    if net.trace is None:
        raise RuntimeError("no trace: call forward_sample before coagent_update")
    key = "grad" if rule == "pgcn" else "hebb"
    if rule == "hebbian":
        delta = np.ones_like(np.asarray(delta, dtype=float))
    per_unit = _per_unit(net, delta)
    alphas = list(alpha) if np.ndim(alpha) else [alpha] * len(net.layers)
    if momentum and net.velocity is None:
        net.velocity = [{k: np.zeros_like(v) for k, v in layer.params().items()} for layer in net.layers]
    for li, (layer, cache, d) in enumerate(zip(net.layers, net.trace.caches, per_unit)):
        params = layer.params()
        for name, g in cache[key].items():
            scale = d.reshape(d.shape + (1,) * (g.ndim - 2))
            step = alphas[li] * scale * g
            if momentum:
                vel = net.velocity[li][name]
                vel *= momentum
                vel += step
                step = vel
            params[name] += step
            if weight_clip is not None:
                np.clip(params[name], -weight_clip, weight_clip, out=params[name])
    net.trace = None


@dataclass
class EpisodeRecord:
    ret: float
    steps: int
    seed: int
    terminal: bool
    deltas: list = field(default_factory=list)


def pgcn_deltas(pop: PopulationEnsemble, delta: float, action: int, members, trace, kappa=None,
                kappa_scale: float = 1.0):
    """Per-coagent TD signals for one step: population sign rule, then modular split."""
    d_member = population_delta(delta, members, action)
    if pop.network.topology.connectivity == MODULAR:
        fired = trace.rates > 0
        return modular_delta(d_member, action, fired, kappa, kappa_scale)
    return d_member


def run_episode_pgcn(env, pop: PopulationEnsemble, critic: Critic, config: LearnerConfig, encoder,
                     critic_input=None, seed: int = 0, alpha: float | None = None) -> EpisodeRecord:
    """One training episode of the population coagent actor with the global critic.

    ``encoder`` maps observations to network input; ``critic_input`` maps
    observations to what the critic sees (defaults to the raw observation).
    """
    alpha = config.alpha if alpha is None else alpha
    critic_input = critic_input or (lambda o: o)
    obs = env.reset()
    critic.reset_trace()
    total, steps, deltas = 0.0, 0, []
    while True:
        x = encoder(obs)
        action, members, _, trace = ensemble_act(pop, x)
        res = env.step(action)
        s, s_next = critic_input(obs), critic_input(res.next_observation)
        delta = td_error(critic, s, res.reward, s_next, res.terminal)
        critic_update(critic, delta, s)
        if config.delta_clip is not None:
            delta = float(np.clip(delta, -config.delta_clip, config.delta_clip))
        d = pgcn_deltas(pop, delta, action, members, trace, config.kappa, config.kappa_scale)
        coagent_update(pop.network, d, alpha, config.rule, config.momentum, config.weight_clip)
        total += res.reward
        steps += 1
        deltas.append(delta)
        obs = res.next_observation
        if res.done:
            return EpisodeRecord(total, steps, seed, res.terminal, deltas)

"""Gumbel-softmax spiking layers and a shared-trunk advantage actor-critic.

Each hidden neuron is a graded categorical policy over ``{-2..2}`` with logits
``a_k (b + W x)``.  Sampling is reparameterized as a softmax of perturbed
log-probabilities, so gradients flow through the stochastic spikes and the
whole network trains by ordinary backpropagation on the tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, Tape, tape_backward
from .mathcore import gumbel_sample, log_softmax, softmax

GRADED = np.arange(-2.0, 3.0)


def gumbel_softmax_layer(tape: Tape, log_probs: Node, g, tau: float) -> Node:
    """``softmax((log_probs + g) / tau)`` on the tape; ``g`` is constant noise."""
    if not tau > 0:
        raise ValueError("temperature must be positive")
    g = np.asarray(g, dtype=float)
    if g.shape != log_probs.shape:
        raise ValueError(f"noise shape {g.shape} does not match log-probs {log_probs.shape}")
    return tape.softmax(tape.mul(tape.add(log_probs, g), 1.0 / tau))


def spiking_policy_layer(tape: Tape, inputs: Node, W: Node, b: Node, tau: float, noise=None,
                         rng=None) -> Node:
    """Soft graded spikes for a layer of neurons; returns the expected action per neuron.

    ``W`` has shape ``(n_in, n_neurons)``.  Pass frozen ``noise`` of shape
    ``inputs.shape[:-1] + (n_neurons, 5)`` or an ``rng`` to draw it.
    """
    drive = tape.add(tape.matmul(inputs, W), b)
    logits = tape.mul(tape.reshape(drive, drive.shape + (1,)), GRADED)
    logp = tape.log_softmax(logits)
    if noise is None:
        if rng is None:
            raise ValueError("need either noise or an rng")
        noise = gumbel_sample(rng, size=logp.shape)
    y = gumbel_softmax_layer(tape, logp, noise, tau)
    return tape.sum(tape.mul(y, GRADED), axis=-1)


def spiking_layer_numpy(x, W, b, tau, noise):
    """Forward pass of :func:`spiking_policy_layer` without a tape."""
    drive = x @ W + b
    logp = log_softmax(drive[..., None] * GRADED)
    return softmax((logp + noise) / tau) @ GRADED


@dataclass
class A2CModel:
    """One shared spiking hidden layer feeding a policy head and a value head."""

    W1: np.ndarray
    b1: np.ndarray
    Wa: np.ndarray
    ba: np.ndarray
    Wv: np.ndarray
    bv: np.ndarray
    tau: float = 1.0
    velocity: dict = field(default_factory=dict, repr=False)

    PARAMS = ("W1", "b1", "Wa", "ba", "Wv", "bv")

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def create(cls, n_in: int, n_hidden: int, n_actions: int, rng, tau: float = 1.0,
               init_scale: float = 1.0) -> "A2CModel":
        return cls(
            W1=rng.normal(0.0, init_scale / np.sqrt(n_in), size=(n_in, n_hidden)),
            b1=np.zeros(n_hidden),
            Wa=np.zeros((n_hidden, n_actions)),
            ba=np.zeros(n_actions),
            Wv=np.zeros(n_hidden),
            bv=np.zeros(()),
            tau=tau,
        )

    @property
    def n_hidden(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict:
        return {k: getattr(self, k) for k in self.PARAMS}

    def noise(self, rng, batch=()):
        return gumbel_sample(rng, size=tuple(batch) + (self.n_hidden, GRADED.size))

    def forward(self, x, noise):
        """Numpy forward: ``(action probabilities, value)``."""
        h = spiking_layer_numpy(np.asarray(x, dtype=float), self.W1, self.b1, self.tau, noise)
        return softmax(h @ self.Wa + self.ba), h @ self.Wv + self.bv

    def act(self, x, rng):
        """Sample an action; returns ``(action, noise used)``."""
        g = self.noise(rng)
        probs, _ = self.forward(x, g)
        return int(rng.choice(probs.size, p=probs)), g


@dataclass
class Batch:
    obs: np.ndarray
    noise: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    next_noise: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.actions)


def a2c_losses(model: A2CModel, batch: Batch, gamma: float, value_coef: float = 0.5):
    """Build the loss on a fresh tape; returns ``(tape, loss node, leaves, info)``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    _, v_next = model.forward(batch.next_obs, batch.next_noise)
    v_next = np.where(np.asarray(batch.terminal, dtype=bool), 0.0, v_next)

    tape = Tape()
    leaves = {k: tape.param(v, k) for k, v in model.params().items()}
    h = spiking_policy_layer(tape, tape.const(batch.obs), leaves["W1"], leaves["b1"], model.tau,
                             noise=batch.noise)
    logp = tape.log_softmax(tape.add(tape.matmul(h, leaves["Wa"]), leaves["ba"]))
    v = tape.add(tape.matmul(h, leaves["Wv"]), leaves["bv"])

    target = np.asarray(batch.rewards, dtype=float) + gamma * v_next
    adv = target - v.value
    actor = tape.neg(tape.sum(tape.mul(tape.gather(logp, batch.actions), adv)))
    err = tape.add(tape.neg(v), target)
    critic = tape.sum(tape.mul(err, err))
    loss = tape.add(actor, tape.mul(critic, value_coef))
    info = {"actor_loss": float(actor.value), "critic_loss": float(critic.value),
            "advantage": adv}
    return tape, loss, leaves, info


def a2c_step(model: A2CModel, batch: Batch, gamma: float, alpha: float, value_coef: float = 0.5,
             momentum: float = 0.0, grad_clip: float | None = None) -> dict:
    """One synchronous advantage actor-critic gradient step, in place."""
    tape, loss, leaves, info = a2c_losses(model, batch, gamma, value_coef)
    grads = tape_backward(tape, loss, list(leaves.values()))
    if grad_clip is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if norm > grad_clip:
            grads = {k: g * (grad_clip / norm) for k, g in grads.items()}
    for name, g in grads.items():
        step = -alpha * g
        if momentum:
            vel = model.velocity.setdefault(name, np.zeros_like(g))
            vel *= momentum
            vel += step
            step = vel
        setattr(model, name, getattr(model, name) + step)
    info["grads"] = grads
    return info


@dataclass
class A2CConfig:
    hidden: int = 64
    tau: float = 1.0
    alpha: float = 0.03
    gamma: float = 0.99
    value_coef: float = 0.5
    rollout: int = 32
    momentum: float = 0.0
    grad_clip: float | None = 5.0
    init_scale: float = 1.0


def run_episode_a2c(env, model: A2CModel, config: A2CConfig, encode, rng) -> tuple[float, int]:
    """Train for one episode, updating every ``config.rollout`` steps and at episode end."""
    obs = encode(env.reset())
    action, g = model.act(obs, rng)
    rows = []
    total, steps = 0.0, 0
    while True:
        res = env.step(action)
        nxt = encode(res.next_observation)
        total += res.reward
        steps += 1
        next_action, next_g = model.act(nxt, rng)
        rows.append((obs, g, action, res.reward, nxt, next_g, res.terminal))
        if res.done or len(rows) >= config.rollout:
            cols = list(zip(*rows))
            batch = Batch(*(np.array(c) for c in cols))
            a2c_step(model, batch, config.gamma, config.alpha, config.value_coef, config.momentum,
                     config.grad_clip)
            rows = []
        if res.done:
            return total, steps
        obs, action, g = nxt, next_action, next_g

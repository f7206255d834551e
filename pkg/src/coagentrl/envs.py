"""Gridworlds, cart-pole, mountain car, and the state-to-spike encoders.

Every environment follows the same small protocol: ``reset()`` returns the
first observation and ``step(action)`` returns a :class:`StepResult`.  The
gridworlds sample their action noise from the stream passed at construction;
cart-pole and mountain car only use it for the start state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .mathcore import RngStream, rng_stream

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
# (right-of, left-of) each heading
_VEER = {UP: (RIGHT, LEFT), RIGHT: (DOWN, UP), DOWN: (LEFT, RIGHT), LEFT: (UP, DOWN)}


@dataclass
class StepResult:
    next_observation: Any
    reward: float
    terminal: bool
    truncated: bool = False

    @property
    def done(self) -> bool:
        return self.terminal or self.truncated


@dataclass
class GridSpec:
    """Layout of a rectangular gridworld; cells are ``(row, col)``, 0-based."""

    rows: int
    cols: int
    start: tuple[int, int]
    goal: tuple[int, int]
    obstacles: frozenset = frozenset()
    rewards: dict = field(default_factory=dict)  # cell -> reward on entering
    p_intended: float = 0.8
    p_veer_right: float = 0.05
    p_veer_left: float = 0.05
    p_stay: float = 0.1

    def __post_init__(self):
        total = self.p_intended + self.p_veer_right + self.p_veer_left + self.p_stay
        if abs(total - 1.0) > 1e-12:
            raise ValueError("action-noise probabilities must sum to 1")
        self.obstacles = frozenset(tuple(c) for c in self.obstacles)
        if self.start in self.obstacles or self.goal in self.obstacles:
            raise ValueError("start/goal cannot be an obstacle")
        self.cells = [
            (r, c)
            for r in range(self.rows)
            for c in range(self.cols)
            if (r, c) not in self.obstacles
        ]
        self.index = {cell: i for i, cell in enumerate(self.cells)}


class GridWorld:
    """Stochastic gridworld with veering and no-op noise.

    Observations are 0-based indices into ``spec.cells``.  ``state_number``
    converts to the 1-based numbering where the start is state 1.
    """

    n_actions = 4

    def __init__(self, spec: GridSpec, rng: RngStream | None = None, max_steps: int = 1000):
        self.spec = spec
        self.rng = rng if rng is not None else rng_stream(0)
        self.max_steps = max_steps
        self.n_states = len(spec.cells)
        self.cell = spec.start
        self.t = 0

    def reset(self) -> int:
        self.cell = self.spec.start
        self.t = 0
        return self.spec.index[self.cell]

    def _move(self, cell, direction):
        dr, dc = _MOVES[direction]
        r, c = cell[0] + dr, cell[1] + dc
        if not (0 <= r < self.spec.rows and 0 <= c < self.spec.cols):
            return cell
        if (r, c) in self.spec.obstacles:
            return cell
        return (r, c)

    def transition_distribution(self, state: int, action: int) -> dict[int, float]:
        """Exact next-state distribution for ``(state, action)``."""
        if action not in _MOVES:
            raise ValueError(f"action out of range: {action}")
        s = self.spec
        cell = s.cells[state]
        right, left = _VEER[action]
        out: dict[int, float] = {}
        for direction, p in ((action, s.p_intended), (right, s.p_veer_right), (left, s.p_veer_left)):
            nxt = s.index[self._move(cell, direction)]
            out[nxt] = out.get(nxt, 0.0) + p
        out[state] = out.get(state, 0.0) + s.p_stay
        return out

    def step(self, action: int) -> StepResult:
        if action not in _MOVES:
            raise ValueError(f"action out of range: {action}")
        if self.cell == self.spec.goal:
            raise RuntimeError("step() called on a terminal state")
        s = self.spec
        right, left = _VEER[action]
        u = self.rng.random()
        if u < s.p_intended:
            nxt = self._move(self.cell, action)
        elif u < s.p_intended + s.p_veer_right:
            nxt = self._move(self.cell, right)
        elif u < s.p_intended + s.p_veer_right + s.p_veer_left:
            nxt = self._move(self.cell, left)
        else:
            nxt = self.cell
        self.cell = nxt
        self.t += 1
        terminal = nxt == s.goal
        reward = float(s.rewards.get(nxt, 0.0))
        truncated = not terminal and self.t >= self.max_steps
        return StepResult(s.index[nxt], reward, terminal, truncated)

    def state_number(self, state: int) -> int:
        return state + 1


def gridworld5_spec(
    obstacles=((2, 2), (3, 2)),
    water=((4, 2),),
    goal_reward: float = 10.0,
    water_reward: float = -10.0,
) -> GridSpec:
    """5x5 maze: 23 open cells, start at state 1, goal (state 23) in the far corner.

    The obstacle and water placement is a non-canonical default; override it
    through the arguments.
    """
    rewards = {tuple(w): water_reward for w in water}
    rewards[(4, 4)] = goal_reward
    return GridSpec(5, 5, start=(0, 0), goal=(4, 4), obstacles=frozenset(obstacles), rewards=rewards)


def gridworld10_spec(goal_reward: float = 10.0) -> GridSpec:
    return GridSpec(10, 10, start=(0, 0), goal=(9, 9), rewards={(9, 9): goal_reward})


def make_gridworld5(rng=None, max_steps=1000, **kw) -> GridWorld:
    return GridWorld(gridworld5_spec(**kw), rng, max_steps)


def make_gridworld10(rng=None, max_steps=1000, **kw) -> GridWorld:
    return GridWorld(gridworld10_spec(**kw), rng, max_steps)


@dataclass
class CartPoleParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    force: float = 10.0
    dt: float = 0.02
    theta_limit: float = 12 * 2 * math.pi / 360
    x_limit: float = 2.4
    max_steps: int = 200


def cartpole_dynamics(state, action: int, p: CartPoleParams = CartPoleParams()):
    """One Euler step of the classic cart-pole; returns the new ``(x, v, theta, omega)``.

    ``action`` 0 pushes left (-force), 1 pushes right (+force).
    """
    x, v, theta, omega = state
    f = p.force if action == 1 else -p.force
    total = p.cart_mass + p.pole_mass
    polemass_length = p.pole_mass * p.half_length
    cos, sin = math.cos(theta), math.sin(theta)
    temp = (f + polemass_length * omega * omega * sin) / total
    theta_acc = (p.gravity * sin - cos * temp) / (
        p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total)
    )
    x_acc = temp - polemass_length * theta_acc * cos / total
    return (
        x + p.dt * v,
        v + p.dt * x_acc,
        theta + p.dt * omega,
        omega + p.dt * theta_acc,
    )


class CartPole:
    """Balance task; reward 1 for every step after which the pole is still up."""

    n_actions = 2

    def __init__(self, rng: RngStream | None = None, params: CartPoleParams | None = None):
        self.rng = rng if rng is not None else rng_stream(0)
        self.params = params or CartPoleParams()
        self.max_steps = self.params.max_steps
        self.state = (0.0, 0.0, 0.0, 0.0)
        self.t = 0

    def reset(self):
        self.state = tuple(float(s) for s in self.rng.uniform(-0.05, 0.05, size=4))
        self.t = 0
        return np.array(self.state)

    def failed(self, state) -> bool:
        return abs(state[0]) > self.params.x_limit or abs(state[2]) > self.params.theta_limit

    def step(self, action: int) -> StepResult:
        if action not in (0, 1):
            raise ValueError(f"action out of range: {action}")
        self.state = cartpole_dynamics(self.state, action, self.params)
        self.t += 1
        terminal = self.failed(self.state)
        reward = 0.0 if terminal else 1.0
        truncated = not terminal and self.t >= self.max_steps
        return StepResult(np.array(self.state), reward, terminal, truncated)


@dataclass
class MountainCarParams:
    min_position: float = -1.2
    max_position: float = 0.6
    max_speed: float = 0.07
    goal_position: float = 0.5
    power: float = 0.001
    gravity: float = 0.0025
    max_steps: int = 5000


def mountaincar_dynamics(state, action: int, p: MountainCarParams = MountainCarParams()):
    """``action`` 0/1/2 = reverse/neutral/forward."""
    position, velocity = state
    velocity += p.power * (action - 1) - p.gravity * math.cos(3 * position)
    velocity = min(max(velocity, -p.max_speed), p.max_speed)
    position += velocity
    position = min(max(position, p.min_position), p.max_position)
    if position == p.min_position and velocity < 0:
        velocity = 0.0
    return position, velocity


class MountainCar:
    n_actions = 3

    def __init__(self, rng: RngStream | None = None, params: MountainCarParams | None = None):
        self.rng = rng if rng is not None else rng_stream(0)
        self.params = params or MountainCarParams()
        self.max_steps = self.params.max_steps
        self.state = (-0.5, 0.0)
        self.t = 0

    def reset(self):
        self.state = (float(self.rng.uniform(-0.6, -0.4)), 0.0)
        self.t = 0
        return np.array(self.state)

    def step(self, action: int) -> StepResult:
        if action not in (0, 1, 2):
            raise ValueError(f"action out of range: {action}")
        self.state = mountaincar_dynamics(self.state, action, self.params)
        self.t += 1
        terminal = self.state[0] >= self.params.goal_position
        truncated = not terminal and self.t >= self.max_steps
        return StepResult(np.array(self.state), -1.0, terminal, truncated)


# --- encoders -------------------------------------------------------------


def encode_binary(state_index: int, n_neurons: int) -> np.ndarray:
    """Big-endian binary code of ``state_index`` as a ``(n_neurons, 1)`` array of +-1."""
    return encode_spatiotemporal(state_index, n_neurons, 1)


def encode_spatiotemporal(state_index: int, S: int, K: int) -> np.ndarray:
    """``S*K``-bit big-endian code reshaped row-major to ``S`` trains of ``K`` bins."""
    n_bits = S * K
    if state_index < 0 or state_index >= 1 << n_bits:
        raise ValueError(f"state index {state_index} does not fit in {n_bits} bits")
    bits = [(state_index >> (n_bits - 1 - i)) & 1 for i in range(n_bits)]
    return (2.0 * np.array(bits, dtype=float) - 1.0).reshape(S, K)


def decode_spatiotemporal(encoded) -> int:
    bits = (np.asarray(encoded).ravel() > 0).astype(int)
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def continuous_bin(value: float, low: float, high: float, n_neurons: int) -> int:
    if not low < high:
        raise ValueError("low must be below high")
    n_bins = 1 << n_neurons
    v = min(max(value, low), high)
    return min(int((v - low) / (high - low) * n_bins), n_bins - 1)


def encode_continuous_binned(value: float, low: float, high: float, n_neurons: int) -> np.ndarray:
    """Clamp, cut ``[low, high]`` into ``2**n_neurons`` equal bins, binary-code the bin."""
    return encode_binary(continuous_bin(value, low, high, n_neurons), n_neurons)


# Scales applied to cart-pole state variables before they reach the network.
CARTPOLE_SCALES = (2.4, 3.0, 0.2094, 3.0)
MOUNTAINCAR_BOUNDS = ((-1.2, 0.6), (-0.07, 0.07))


class Encoder:
    """Observation -> network input (``(S, K)`` array) for one environment kind."""

    def __init__(self, kind: str, **kw):
        self.kind = kind
        self.kw = kw
        if kind == "binary":
            self.shape = (kw["n_neurons"], 1)
        elif kind == "spatiotemporal":
            self.shape = (kw["S"], kw["K"])
        elif kind == "continuous":
            self.scales = np.asarray(kw.get("scales", CARTPOLE_SCALES), dtype=float)
            self.shape = (len(self.scales), 1)
        elif kind == "binned":
            self.bounds = kw.get("bounds", MOUNTAINCAR_BOUNDS)
            self.n_per = kw.get("n_per_variable", 10)
            self.shape = (self.n_per * len(self.bounds), 1)
        else:
            raise ValueError(f"unknown encoder kind: {kind}")

    def __call__(self, obs) -> np.ndarray:
        if self.kind == "binary":
            return encode_binary(int(obs) + self.kw.get("offset", 0), self.kw["n_neurons"])
        if self.kind == "spatiotemporal":
            return encode_spatiotemporal(int(obs), self.kw["S"], self.kw["K"])
        if self.kind == "continuous":
            return (np.asarray(obs, dtype=float) / self.scales).reshape(-1, 1)
        parts = [
            encode_continuous_binned(float(v), lo, hi, self.n_per)
            for v, (lo, hi) in zip(obs, self.bounds)
        ]
        return np.concatenate(parts, axis=0)


_ONE_DEG = math.pi / 180


def cartpole_box(state) -> int:
    """Index (0..161) of the classic 3x3x6x3 cart-pole state partition."""
    x, v, theta, omega = state
    bx = 0 if x < -0.8 else (1 if x < 0.8 else 2)
    bv = 0 if v < -0.5 else (1 if v < 0.5 else 2)
    if theta < -6 * _ONE_DEG:
        bt = 0
    elif theta < -_ONE_DEG:
        bt = 1
    elif theta < 0:
        bt = 2
    elif theta < _ONE_DEG:
        bt = 3
    elif theta < 6 * _ONE_DEG:
        bt = 4
    else:
        bt = 5
    bo = 0 if omega < -50 * _ONE_DEG else (1 if omega < 50 * _ONE_DEG else 2)
    return ((bx * 3 + bv) * 6 + bt) * 3 + bo


N_CARTPOLE_BOXES = 162

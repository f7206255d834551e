"""Experiment orchestration: build everything from a config, train per seed, write curves.

Curve files are CSV with the fixed header ``seed,episode,return,steps,moving_avg_100``.
Episodes are numbered from 1 and the moving average covers the trailing
``min(episode, 100)`` returns.  Output is flushed after every episode; if a run
fails, a ``# truncated`` marker row is appended before the error propagates.
"""

from __future__ import annotations

import copy
import csv
import io
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, _assign, validate
from .envs import (CartPole, CartPoleParams, Encoder, MountainCar, MountainCarParams, N_CARTPOLE_BOXES,
                   cartpole_box, make_gridworld5, make_gridworld10)
from .learning import Critic, LearnerConfig, run_episode_pgcn
from .mathcore import rng_stream
from .network import CoagentNetwork, PopulationEnsemble, Topology
from .reparam import A2CConfig, A2CModel, run_episode_a2c

HEADER = ("seed", "episode", "return", "steps", "moving_avg_100")
WINDOW = 100


def build_env(config: ExperimentConfig, seed: int):
    rng = rng_stream(seed, 2)
    name, cap = config.env.name, config.env.max_steps
    if name == "gridworld5":
        return make_gridworld5(rng=rng, max_steps=cap)
    if name == "gridworld10":
        return make_gridworld10(rng=rng, max_steps=cap)
    if name == "cartpole":
        return CartPole(rng=rng, params=CartPoleParams(max_steps=cap))
    return MountainCar(rng=rng, params=MountainCarParams(max_steps=cap))


def build_encoder(config: ExperimentConfig) -> Encoder:
    e = config.encoder
    if e.kind == "binary":
        return Encoder("binary", n_neurons=e.n_neurons, offset=e.offset)
    if e.kind == "spatiotemporal":
        return Encoder("spatiotemporal", S=e.S, K=e.K)
    if e.kind == "binned":
        return Encoder("binned", n_per_variable=e.n_per_variable)
    return Encoder("continuous")


def build_topology(config: ExperimentConfig, encoder: Encoder, n_actions: int) -> Topology:
    n = config.network
    return Topology(encoder.shape, tuple(n.hidden), n_actions, tuple(n.hidden_lengths), n.output_length,
                    n.connectivity, n.neuron, n.kernel_length, n.history_length, n.lateral_length)


def build_critic(config: ExperimentConfig, env, encoder: Encoder):
    """The critic and the map from raw observations to what it sees."""
    lc = config.learner
    args = (lc.critic_alpha, lc.gamma, lc.lam, lc.critic_init)
    if lc.critic_input == "boxes":
        if config.env.name != "cartpole":
            raise ValueError("box critic input is only defined for cart-pole")
        return Critic("tabular", N_CARTPOLE_BOXES, *args), cartpole_box
    if lc.critic_input == "encoded":
        size = int(np.prod(encoder.shape))
        if lc.critic == "tabular":
            raise ValueError("a tabular critic needs critic_input = state or boxes")
        return Critic("linear", size, *args), lambda o: encoder(o).ravel()
    if lc.critic == "tabular":
        if not hasattr(env, "n_states"):
            raise ValueError("a tabular critic needs a discrete environment")
        return Critic("tabular", env.n_states, *args), None
    return Critic("linear", int(np.size(env.reset())), *args), None


def learner_config(config: ExperimentConfig) -> LearnerConfig:
    lc = config.learner
    return LearnerConfig(alpha=lc.alpha, critic_alpha=lc.critic_alpha, gamma=lc.gamma, lam=lc.lam,
                         population=config.network.population, rule=lc.rule, kappa=lc.kappa,
                         kappa_scale=lc.kappa_scale, delta_clip=lc.delta_clip, lr_decay=lc.lr_decay,
                         momentum=lc.momentum, weight_clip=lc.weight_clip)


def train_pgcn(config: ExperimentConfig, seed: int):
    """Yield ``(return, steps)`` for each training episode of one seed."""
    env = build_env(config, seed)
    encoder = build_encoder(config)
    topology = build_topology(config, encoder, env.n_actions)
    init = config.network.layer_init_scale or config.network.init_scale
    net = CoagentNetwork(topology, config.network.population, seed, init_scale=init)
    pop = PopulationEnsemble(net, tau_act=config.network.tau_act, readout=config.network.readout)
    critic, critic_input = build_critic(config, env, encoder)
    lc = learner_config(config)
    alpha = np.array(config.learner.layer_alpha or [lc.alpha] * len(topology.layer_sizes), dtype=float)
    for _ in range(config.episodes):
        rec = run_episode_pgcn(env, pop, critic, lc, encoder, critic_input, seed, alpha=list(alpha))
        alpha *= lc.lr_decay
        yield rec.ret, rec.steps


def train_a2c(config: ExperimentConfig, seed: int):
    env = build_env(config, seed)
    encoder = build_encoder(config)
    a = config.a2c
    cfg = A2CConfig(a.hidden, a.tau, a.alpha, a.gamma, a.value_coef, a.rollout, a.momentum, a.grad_clip,
                    a.init_scale)
    n_in = int(np.prod(encoder.shape))
    model = A2CModel.create(n_in, a.hidden, env.n_actions, rng_stream(seed, 3), a.tau, a.init_scale)
    rng = rng_stream(seed, 1)
    encode = lambda o: encoder(o).ravel()
    for _ in range(config.episodes):
        yield run_episode_a2c(env, model, cfg, encode, rng)


def train_seed(config: ExperimentConfig, seed: int):
    """Episode stream for one seed, honouring ``stop_at``."""
    trainer = train_a2c if config.trainer == "a2c" else train_pgcn
    recent = deque(maxlen=WINDOW)
    for ret, steps in trainer(config, seed):
        yield ret, steps
        recent.append(steps if config.env.name == "cartpole" else ret)
        if config.stop_at is not None and len(recent) == WINDOW and np.mean(recent) >= config.stop_at:
            return


def random_baseline(config: ExperimentConfig, episodes: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Mean return and mean length of the uniform-random policy on the configured environment."""
    env = build_env(config, seed)
    rng = rng_stream(seed, 1)
    returns, lengths = [], []
    for _ in range(episodes):
        env.reset()
        total, steps = 0.0, 0
        while True:
            res = env.step(int(rng.integers(env.n_actions)))
            total += res.reward
            steps += 1
            if res.done:
                break
        returns.append(total)
        lengths.append(steps)
    return float(np.mean(returns)), float(np.mean(lengths))


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def write_curves(config: ExperimentConfig, stream) -> None:
    """Train every seed and write rows to ``stream`` as they arrive."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER)
    stream.flush()
    try:
        for seed in config.seeds:
            recent = deque(maxlen=WINDOW)
            for episode, (ret, steps) in enumerate(train_seed(config, seed), start=1):
                recent.append(ret)
                writer.writerow((seed, episode, _fmt(ret), steps, _fmt(sum(recent) / len(recent))))
                stream.flush()
    except BaseException as exc:
        stream.write(f"# truncated: {type(exc).__name__}: {exc}\n")
        stream.flush()
        raise


def variants(config: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """One ``(label, config)`` pair per sweep value (or the config itself without a sweep)."""
    sweep = config.sweep
    if not sweep.key:
        return [("", config)]
    out = []
    labels = sweep.labels or [str(v) for v in sweep.values]
    for label, value in zip(labels, sweep.values):
        variant = copy.deepcopy(config)
        variant.sweep.key = ""
        _assign(variant, sweep.key, value)
        validate(variant)
        out.append((label, variant))
    return out


def variant_path(output: Path, label: str) -> Path:
    return output if not label else output.with_name(f"{output.stem}_{label}{output.suffix}")


def run_experiment(config: ExperimentConfig, output: str | Path | None = None, svg: bool = False) -> list[Path]:
    """Run every variant and seed; returns the CSV paths written."""
    output = Path(output or config.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for label, variant in variants(config):
        path = variant_path(output, label)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write_curves(variant, fh)
        if svg:
            path.with_suffix(".svg").write_text(curve_svg(read_curves(path), title=path.stem), encoding="utf-8")
        paths.append(path)
    return paths


def curves_text(config: ExperimentConfig) -> str:
    """The CSV a single-variant config would produce, as a string."""
    buf = io.StringIO()
    write_curves(config, buf)
    return buf.getvalue()


# --- reading and summarising --------------------------------------------------


class SchemaError(ValueError):
    pass


@dataclass
class Curve:
    label: str
    rows: dict  # seed -> array of (episode, return, steps)
    truncated: bool = False

    def metric(self, seed: int, name: str) -> np.ndarray:
        col = {"return": 1, "steps": 2}[name]
        return self.rows[seed][:, col]


def read_curves(path: str | Path) -> Curve:
    path = Path(path)
    rows: dict[int, list] = {}
    truncated = False
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(lines[0].split(",")) != HEADER:
        raise SchemaError(f"{path}: expected header {','.join(HEADER)}")
    for line in lines[1:]:
        if line.startswith("#"):
            truncated = True
            continue
        parts = line.split(",")
        if len(parts) != len(HEADER):
            raise SchemaError(f"{path}: malformed row {line!r}")
        seed, episode = int(parts[0]), int(parts[1])
        seed_rows = rows.setdefault(seed, [])
        if episode != len(seed_rows) + 1:
            raise SchemaError(f"{path}: episodes of seed {seed} are not contiguous")
        seed_rows.append((episode, float(parts[2]), float(parts[3])))
    return Curve(path.stem, {s: np.array(r, dtype=float) for s, r in rows.items()}, truncated)


def moving_average(values, window: int = WINDOW) -> np.ndarray:
    """Trailing mean over ``min(i + 1, window)`` entries."""
    values = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def episodes_to_threshold(values, threshold: float, window: int = WINDOW) -> int | None:
    """First episode (1-based) whose trailing moving average reaches ``threshold``."""
    ma = moving_average(values, window)
    hit = np.nonzero(ma >= threshold)[0]
    return int(hit[0]) + 1 if hit.size else None


@dataclass
class SummaryRow:
    label: str
    n_seeds: int
    final_mean: float
    final_std: float
    to_threshold: float  # mean over seeds; seeds that never reach it count as their episode total
    reached: int


def summarize(curve: Curve, metric: str = "return", threshold: float = 100.0, final: int = 100) -> SummaryRow:
    finals, hits, reached = [], [], 0
    for seed in sorted(curve.rows):
        v = curve.metric(seed, metric)
        finals.append(float(np.mean(v[-final:])))
        h = episodes_to_threshold(v, threshold)
        reached += h is not None
        hits.append(len(v) if h is None else h)
    return SummaryRow(curve.label, len(finals), float(np.mean(finals)), float(np.std(finals)),
                      float(np.mean(hits)), reached)


def compare(paths, metric: str = "return", threshold: float = 100.0) -> list[SummaryRow]:
    if len(paths) < 2:
        raise ValueError("compare needs at least two curve files")
    return [summarize(read_curves(p), metric, threshold) for p in paths]


def format_summary(rows: list[SummaryRow], metric: str = "return", threshold: float = 100.0) -> str:
    lines = [f"{'curve':<28} {'seeds':>5} {'final-100 ' + metric:>20} {'to ' + _fmt(threshold):>10} "
             f"{'reached':>7} {'ratio':>7}"]
    base = rows[0].final_mean
    for r in rows:
        ratio = r.final_mean / base if base else float("nan")
        lines.append(f"{r.label:<28} {r.n_seeds:>5} {r.final_mean:>11.2f} +- {r.final_std:<6.2f} "
                     f"{r.to_threshold:>10.1f} {r.reached:>7} {ratio:>7.2f}")
    return "\n".join(lines) + "\n"


# --- SVG ------------------------------------------------------------------------


def curve_svg(curve: Curve, title: str = "", width: int = 640, height: int = 360) -> str:
    """Moving-average return per seed (thin) and their mean (thick) as an SVG line chart."""
    series = [moving_average(curve.metric(s, "return")) for s in sorted(curve.rows)]
    n = max(len(s) for s in series)
    padded = np.full((len(series), n), np.nan)
    for i, s in enumerate(series):
        padded[i, : len(s)] = s
    mean = np.nanmean(padded, axis=0)
    lo, hi = float(np.nanmin(padded)), float(np.nanmax(padded))
    if hi == lo:
        hi = lo + 1.0
    m = 40

    def points(values):
        xs = m + (width - 2 * m) * np.arange(len(values)) / max(n - 1, 1)
        ys = height - m - (height - 2 * m) * (np.asarray(values) - lo) / (hi - lo)
        return " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{m}" y="20" font-family="sans-serif" font-size="14">{title}</text>',
             f'<text x="4" y="{m}" font-family="sans-serif" font-size="10">{hi:.4g}</text>',
             f'<text x="4" y="{height - m}" font-family="sans-serif" font-size="10">{lo:.4g}</text>']
    for s in series:
        parts.append(f'<polyline fill="none" stroke="#9bb" stroke-width="1" points="{points(s)}"/>')
    parts.append(f'<polyline fill="none" stroke="#036" stroke-width="2.5" points="{points(mean)}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

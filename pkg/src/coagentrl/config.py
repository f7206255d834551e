"""Experiment configuration: typed defaults per experiment and a fail-closed parser.

Config documents are TOML.  Keys may be written flat with dotted sections
(``learner.alpha = 0.02``) or under ``[learner]`` tables; both flatten to the
same dotted names.  Unknown keys and type mismatches raise :class:`ConfigError`.
"""

from __future__ import annotations

import copy
import dataclasses
import sys
import typing
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration document or override."""


@dataclass
class EnvSection:
    name: str = "gridworld5"  # gridworld5 | gridworld10 | cartpole | mountaincar
    max_steps: int = 1000


@dataclass
class EncoderSection:
    kind: str = "binary"  # binary | spatiotemporal | continuous | binned
    n_neurons: int = 7
    offset: int = 1
    S: int = 3
    K: int = 5
    n_per_variable: int = 10


@dataclass
class NetworkSection:
    hidden: list[int] = field(default_factory=lambda: [10])
    hidden_lengths: list[int] = field(default_factory=lambda: [1])
    output_length: int = 1
    connectivity: str = "full"
    neuron: str = "ising"
    kernel_length: int = 1
    history_length: int = 0
    lateral_length: int = 0
    init_scale: float = 1.0
    layer_init_scale: list[float] = field(default_factory=list)  # per-layer; overrides init_scale
    population: int = 10
    tau_act: float = 1.0
    readout: str = "mean-rate"


@dataclass
class LearnerSection:
    rule: str = "pgcn"  # pgcn | hebbian | hebbian-td
    alpha: float = 0.01
    layer_alpha: list[float] = field(default_factory=list)  # per-layer step sizes; overrides alpha
    critic: str = "tabular"  # tabular | linear
    critic_input: str = "state"  # state | encoded | boxes
    critic_alpha: float = 0.1
    critic_init: float = 0.0
    gamma: float = 0.9
    lam: float = 0.8
    kappa: float | None = None
    kappa_scale: float = 1.0
    delta_clip: float | None = None
    lr_decay: float = 1.0
    momentum: float = 0.0
    weight_clip: float | None = None


@dataclass
class A2CSection:
    hidden: int = 64
    tau: float = 1.0
    alpha: float = 0.03
    gamma: float = 0.99
    value_coef: float = 0.5
    rollout: int = 32
    momentum: float = 0.0
    grad_clip: float | None = 5.0
    init_scale: float = 1.0


@dataclass
class SweepSection:
    """Run the experiment once per value of ``key``; each variant gets its own CSV."""

    key: str = ""
    values: list = field(default_factory=list)
    labels: list[str] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    experiment: str
    episodes: int = 300
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output: str = "curves.csv"
    trainer: str = "pgcn"  # pgcn | a2c
    threshold: float = 100.0  # episodes-to-threshold in summaries
    stop_at: float | None = None  # end a seed once the trailing-100 mean reaches this
    env: EnvSection = field(default_factory=EnvSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    a2c: A2CSection = field(default_factory=A2CSection)
    sweep: SweepSection = field(default_factory=SweepSection)


def _cartpole_pgcn(**learner) -> dict:
    base = {
        "episodes": 500, "threshold": 100.0, "output": "cartpole.csv",
        "env.name": "cartpole", "env.max_steps": 200,
        "encoder.kind": "continuous",
        "network.hidden": [200], "network.hidden_lengths": [1], "network.connectivity": "modular",
        "network.layer_init_scale": [40.0, 1.0], "network.population": 10, "network.tau_act": 0.1,
        "learner.layer_alpha": [0.0, 0.00003], "learner.critic_input": "boxes",
        "learner.critic_alpha": 0.5, "learner.gamma": 0.95, "learner.lam": 0.8,
        "learner.kappa_scale": 0.1,
    }
    base.update(learner)
    return base


EXPERIMENTS: dict[str, dict] = {
    "gridworld5-ising": {
        "episodes": 300, "output": "gridworld5.csv", "threshold": 0.0,
        "env.name": "gridworld5", "env.max_steps": 1000,
        "encoder.kind": "binary", "encoder.n_neurons": 7, "encoder.offset": 1,
        "network.hidden": [10], "network.init_scale": 0.2, "network.population": 10,
        "network.tau_act": 0.2,
        "learner.alpha": 0.01, "learner.critic_alpha": 0.2, "learner.critic_init": 5.0,
        "learner.gamma": 0.9, "learner.lam": 0.8,
    },
    "gridworld10-glm": {
        "episodes": 200, "seeds": [0, 1, 2], "output": "gridworld10.csv", "threshold": 0.0,
        "env.name": "gridworld10", "env.max_steps": 1000,
        "encoder.kind": "spatiotemporal", "encoder.S": 3, "encoder.K": 5,
        "network.hidden": [5], "network.hidden_lengths": [3], "network.output_length": 1,
        "network.connectivity": "modular", "network.neuron": "glm", "network.kernel_length": 3,
        "network.init_scale": 0.2, "network.population": 10, "network.tau_act": 0.2,
        "learner.alpha": 0.05, "learner.critic_alpha": 0.2, "learner.critic_init": 5.0,
        "learner.gamma": 0.9, "learner.lam": 0.8, "learner.kappa_scale": 0.1,
    },
    "mountaincar-ising": {
        "episodes": 100, "seeds": [0, 1, 2], "output": "mountaincar.csv", "threshold": -1000.0,
        "env.name": "mountaincar", "env.max_steps": 5000,
        "encoder.kind": "binned", "encoder.n_per_variable": 10,
        "network.hidden": [50], "network.connectivity": "modular", "network.init_scale": 1.0,
        "network.population": 10, "network.tau_act": 0.2,
        "learner.alpha": 0.001, "learner.critic": "linear", "learner.critic_input": "encoded",
        "learner.critic_alpha": 0.01, "learner.gamma": 0.99, "learner.lam": 0.8,
        "learner.kappa_scale": 0.1,
    },
    "cartpole-ising": _cartpole_pgcn(output="cartpole_ising.csv"),
    "cartpole-hebbian": _cartpole_pgcn(**{
        "output": "cartpole_hebbian.csv",
        "sweep.key": "learner.rule", "sweep.values": ["pgcn", "hebbian"], "sweep.labels": ["pgcn", "hebbian"],
    }),
    "cartpole-modular-vs-full": _cartpole_pgcn(**{
        "output": "cartpole_connectivity.csv",
        "sweep.key": "network.connectivity", "sweep.values": ["modular", "full"],
        "sweep.labels": ["modular", "full"],
    }),
    "cartpole-population-sweep": _cartpole_pgcn(**{
        "output": "cartpole_population.csv",
        "sweep.key": "network.population", "sweep.values": [1, 5, 10, 20],
        "sweep.labels": ["N1", "N5", "N10", "N20"],
    }),
    "cartpole-reparam-a2c": {
        "episodes": 2000, "output": "cartpole_a2c.csv", "trainer": "a2c", "threshold": 150.0,
        "stop_at": 150.0,
        "env.name": "cartpole", "env.max_steps": 200, "encoder.kind": "continuous",
    },
}


# --- flattening and type checking ---------------------------------------------


def _flatten(obj, prefix="") -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(value):
            out.update(_flatten(value, key + "."))
        else:
            out[key] = value
    return out


def flatten_config(config: ExperimentConfig) -> dict:
    return _flatten(config)


def _field_type(key: str):
    cls, parts = ExperimentConfig, key.split(".")
    for i, part in enumerate(parts):
        hints = typing.get_type_hints(cls)
        if part not in hints:
            raise ConfigError(f"unknown key: {key}")
        tp = hints[part]
        if i < len(parts) - 1:
            if not (isinstance(tp, type) and dataclasses.is_dataclass(tp)):
                raise ConfigError(f"unknown key: {key}")
            cls = tp
        elif isinstance(tp, type) and dataclasses.is_dataclass(tp):
            raise ConfigError(f"key {key} names a section, not a value")
    return tp


def _coerce(key: str, value, tp):
    origin, args = typing.get_origin(tp), typing.get_args(tp)
    if origin in (typing.Union, getattr(__import__("types"), "UnionType", None)):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(key, value, inner[0])
    if origin is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {type(value).__name__}")
        return [_coerce(key, v, args[0]) for v in value] if args else list(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {type(value).__name__}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {type(value).__name__}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {type(value).__name__}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {type(value).__name__}")
        return value
    return value


def _assign(config: ExperimentConfig, key: str, value) -> None:
    tp = _field_type(key)
    value = _coerce(key, value, tp)
    obj, parts = config, key.split(".")
    for part in parts[:-1]:
        obj = getattr(obj, part)
    setattr(obj, parts[-1], value)


def _flatten_doc(doc: dict, prefix="") -> dict:
    out = {}
    for k, v in doc.items():
        if isinstance(v, dict):
            out.update(_flatten_doc(v, prefix + k + "."))
        else:
            out[prefix + k] = v
    return out


def defaults_for(experiment: str) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment id: {experiment!r}")
    config = ExperimentConfig(experiment=experiment)
    for key, value in EXPERIMENTS[experiment].items():
        _assign(config, key, copy.deepcopy(value))
    return config


def build_config(values: dict) -> ExperimentConfig:
    """Defaults of ``values["experiment"]`` with every other dotted key applied on top."""
    values = dict(values)
    experiment = values.pop("experiment", None)
    if experiment is None:
        raise ConfigError("missing required key: experiment")
    if not isinstance(experiment, str):
        raise ConfigError("experiment: expected a string")
    config = defaults_for(experiment)
    for key, value in values.items():
        _assign(config, key, value)
    validate(config)
    return config


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a TOML document (plus optional dotted overrides) into a full config."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = _flatten_doc(doc)
    values.update(overrides or {})
    return build_config(values)


def parse_override(item: str) -> tuple[str, object]:
    """``key=value`` with a TOML value (bare words are taken as strings)."""
    if "=" not in item:
        raise ConfigError(f"override must look like key=value: {item!r}")
    key, raw = (s.strip() for s in item.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def validate(config: ExperimentConfig) -> None:
    choices = {
        "env.name": ("gridworld5", "gridworld10", "cartpole", "mountaincar"),
        "encoder.kind": ("binary", "spatiotemporal", "continuous", "binned"),
        "network.connectivity": ("full", "modular"),
        "network.neuron": ("ising", "glm"),
        "network.readout": ("mean-rate", "vote"),
        "learner.rule": ("pgcn", "hebbian", "hebbian-td"),
        "learner.critic": ("tabular", "linear"),
        "learner.critic_input": ("state", "encoded", "boxes"),
        "trainer": ("pgcn", "a2c"),
    }
    flat = flatten_config(config)
    for key, allowed in choices.items():
        if flat[key] not in allowed:
            raise ConfigError(f"{key}: {flat[key]!r} is not one of {', '.join(allowed)}")
    if config.episodes < 1:
        raise ConfigError("episodes must be positive")
    if not config.seeds:
        raise ConfigError("seeds must be non-empty")
    if config.network.population < 1:
        raise ConfigError("network.population must be positive")
    if len(config.network.hidden_lengths) != len(config.network.hidden):
        raise ConfigError("network.hidden_lengths needs one entry per hidden layer")
    n_layers = len(config.network.hidden) + 1
    if config.learner.layer_alpha and len(config.learner.layer_alpha) != n_layers:
        raise ConfigError("learner.layer_alpha needs one step size per layer")
    if config.network.layer_init_scale and len(config.network.layer_init_scale) != n_layers:
        raise ConfigError("network.layer_init_scale needs one scale per layer")
    sweep = config.sweep
    if sweep.key:
        _field_type(sweep.key)
        if not sweep.values:
            raise ConfigError("sweep.values must be non-empty")
        if sweep.labels and len(sweep.labels) != len(sweep.values):
            raise ConfigError("sweep.labels needs one label per value")


def to_toml(config: ExperimentConfig) -> str:
    """Flat dotted-key TOML text that parses back to ``config``."""
    lines = []
    for key, value in flatten_config(config).items():
        if value is None:
            continue
        lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return str(v)

"""Spiking coagent networks trained by policy-gradient coagent updates or reparameterized A2C."""

from .autodiff import Tape, tape_backward
from .config import ExperimentConfig, parse_config
from .experiments import compare, run_experiment
from .learning import Critic, LearnerConfig, coagent_update, modular_delta, population_delta
from .network import CoagentNetwork, PopulationEnsemble, Topology, ensemble_act
from .reparam import A2CModel, a2c_step, gumbel_softmax_layer, spiking_policy_layer

__version__ = "0.1.0"

__all__ = [
    "A2CModel", "CoagentNetwork", "Critic", "ExperimentConfig", "LearnerConfig", "PopulationEnsemble",
    "Tape", "Topology", "a2c_step", "coagent_update", "compare", "ensemble_act", "gumbel_softmax_layer",
    "modular_delta", "parse_config", "population_delta", "run_experiment", "spiking_policy_layer",
    "tape_backward",
]

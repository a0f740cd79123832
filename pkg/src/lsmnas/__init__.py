"""Liquid state machines with a three-step simulated-annealing architecture search."""
from .encoding import load_idx, poisson_encode
from .genome import (
    LiquidSpec,
    LsmGenome,
    connection_reduction,
    enumerate_layerings,
    potential_connection_count,
    scale_neuron_counts,
    uniform_genome,
)
from .netgen import TopologyConfig, WeightInitConfig, instantiate
from .objective import LsmObjective
from .readout import ReadoutConfig, evaluate, train
from .reference import reference_genome
from .search import SaConfig, minimize_neurons, run_sa, three_step_search
from .simulator import LifParams, SimConfig, run_batch, run_example

__version__ = "0.1.0"

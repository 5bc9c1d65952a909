"""Liquid state machine with a dendritically enhanced, rewiring-trained readout."""
from .capacity import CellShape, bn_capacity, capacity_sweep
from .config import ExperimentConfig, load_config, task_defaults
from .der_readout import DendriticCell, NonlinearityParams, ReadoutPair, pair_output
from .nrw_trainer import TrainerConfig, train
from .ppr_readout import PDeltaParams, PerceptronBank, pdelta_train, pdelta_update
from .spike_core import KernelParams, SpikeTrain, sample_states

__version__ = "0.1.0"

__all__ = [
    "CellShape", "bn_capacity", "capacity_sweep", "ExperimentConfig", "load_config", "task_defaults",
    "DendriticCell", "NonlinearityParams", "ReadoutPair", "pair_output", "TrainerConfig", "train",
    "PDeltaParams", "PerceptronBank", "pdelta_train", "pdelta_update", "KernelParams", "SpikeTrain",
    "sample_states",
]

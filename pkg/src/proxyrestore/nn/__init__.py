from . import backend
from .adam import AdamState, ExpSchedule, adam_step
from .mlp import MlpSpec, ParamSet, Tape, backward, elu, forward, init_params

__all__ = [
    "AdamState",
    "ExpSchedule",
    "MlpSpec",
    "ParamSet",
    "Tape",
    "adam_step",
    "backend",
    "backward",
    "elu",
    "forward",
    "init_params",
]

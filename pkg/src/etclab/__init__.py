"""Simulation and analysis of event-triggered and self-triggered control."""
from . import consistency, datarate, errors, plants, sampling, stc, triggers
from .errors import EtcError
from .kernels import BACKEND as KERNEL_BACKEND
from .plants import LinearPlant, VectorField, get_plant, transition_matrix
from .simulation import EventLog, SimConfig, Trajectory, simulate

__version__ = "0.1.0"

__all__ = [
    "consistency", "datarate", "errors", "plants", "sampling", "stc", "triggers",
    "EtcError", "KERNEL_BACKEND", "LinearPlant", "VectorField", "get_plant", "transition_matrix",
    "EventLog", "SimConfig", "Trajectory", "simulate",
]

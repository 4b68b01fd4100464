"""Stochastic wind/demand models and fossil-minimising storage dispatch."""

from .approximator import ApproximatorParams, init_params
from .calibrate import CalibrationHyperparams, SdeCalibrator, TrainingLog
from .dispatch import DispatchProblem, DynamicProgrammingDispatcher
from .power import PowerParams
from .sde import SdeModel, SimulationGrid, TimeSeries

__version__ = "0.1.0"

__all__ = [
    "ApproximatorParams", "CalibrationHyperparams", "DispatchProblem",
    "DynamicProgrammingDispatcher", "PowerParams", "SdeCalibrator", "SdeModel",
    "SimulationGrid", "TimeSeries", "TrainingLog", "init_params",
]

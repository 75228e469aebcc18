"""Simulation and analytic oracles for Markov-modulated continuous-time random walks."""

__version__ = "0.1.0"

from .chain import (
    ChainStructure,
    StateDistribution,
    TransitionMatrix,
    closed_classes,
    decompose,
    equilibrium,
    msd_exponent,
)
from .distributions import JumpLaw, WaitingTimeLaw, fourier_jump, laplace_wtd, sample_jump, sample_waiting
from .engine import (
    EnsembleStats,
    FirstPassageResult,
    ProcessSpec,
    Trajectory,
    first_passage_ensemble,
    msd_ensemble,
    occupation_fraction_ensemble,
    path_functional,
    simulate_path,
)
from .errors import FcpError
from .transforms import LaplaceField, invert_laplace, montroll_weiss, msd_exact, msd_laplace

__all__ = [
    "ChainStructure", "StateDistribution", "TransitionMatrix", "closed_classes", "decompose",
    "equilibrium", "msd_exponent", "JumpLaw", "WaitingTimeLaw", "fourier_jump", "laplace_wtd",
    "sample_jump", "sample_waiting", "EnsembleStats", "FirstPassageResult", "ProcessSpec",
    "Trajectory", "first_passage_ensemble", "msd_ensemble", "occupation_fraction_ensemble",
    "path_functional", "simulate_path", "FcpError", "LaplaceField", "invert_laplace",
    "montroll_weiss", "msd_exact", "msd_laplace",
]

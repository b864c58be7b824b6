"""Monitored transverse-field Ising chains: trajectories, no-click dynamics,
non-Hermitian spectra, free-fermion solution and master-equation averages."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    MonitoredIsingError,
    NumericalError,
)
from .hilbert import BoundaryCondition
from .trajectory import ProtocolParams, run_ensemble, run_trajectory

__all__ = [
    "BoundaryCondition",
    "CapacityError",
    "ConfigError",
    "ContractError",
    "MonitoredIsingError",
    "NumericalError",
    "ProtocolParams",
    "run_ensemble",
    "run_trajectory",
]

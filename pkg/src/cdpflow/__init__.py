"""Pseudo-spectral simulation and verification of concentration-dependent power-law flow on the torus."""

from .constitutive import ExponentFn, StressConstants, StressModel, stress
from .energies import EnergyReport, GronwallParams, energy_report, gronwall_bound, gronwall_zeta
from .errors import (BlowUpBeforeT, BlowUpDetected, CdpflowError, ConfigError, InvalidGrid,
                     InvalidParameter)
from .solver import (RunReport, SingleModeForcing, SolverConfig, State, TimeRampForcing, ZeroForcing,
                     init_state, recover_pressure, run, step, twin_run)
from .torus import GridSpec, ScalarField, SymTensorField, VectorField, make_grid

__version__ = "0.1.0"

__all__ = [
    "BlowUpBeforeT", "BlowUpDetected", "CdpflowError", "ConfigError", "EnergyReport", "ExponentFn",
    "GridSpec", "GronwallParams", "InvalidGrid", "InvalidParameter", "RunReport", "ScalarField",
    "SingleModeForcing", "SolverConfig", "State", "StressConstants", "StressModel", "SymTensorField",
    "TimeRampForcing", "VectorField", "ZeroForcing", "energy_report", "gronwall_bound", "gronwall_zeta",
    "init_state", "make_grid", "recover_pressure", "run", "step", "stress", "twin_run",
]

"""Simulation and analysis of repetitive, error-corrected NV spin readout."""

from .analysis import (
    FidelityCurve,
    ImprovementResult,
    Model,
    SaturationFit,
    bootstrap_se,
    brightness_equivalent,
    calibrate_contrast,
    calibrate_kappa,
    cumulative_signal,
    fidelity_vs_N,
    fit_saturation,
    ideal_ec_model,
    improvement,
    readout_fidelity,
)
from .physics import PhysicsParams, dnp_steady_state, eslac_field, flip_flop_probabilities
from .protocols import PulseSequence, TimingBudget, build_error_corrected, build_repetitive_readout
from .pulses import GateParams, ReadoutParams
from .simulator import InitialCondition, initial_state, propagate, sample

__version__ = "0.1.0"

"""Simulation and estimation toolkit for absolute quantum-efficiency
calibration of photon counters by conditioned polarization rotation."""

from calib.analytic import (
    RateParams,
    expected_coincidence_rate,
    expected_rate_d2,
    visibility_from_extrema,
)
from calib.estimate import (
    EfficiencyEstimate,
    FitResult,
    compare_methods,
    dead_time_correction_factor,
    estimate_background,
    eta_from_visibility,
    eta_klyshko,
    fit_modulation,
    pump_drift_normalize,
    subtract_background,
    visibility_from_fit,
)
from calib.kernels import BACKEND
from calib.model import (
    ChannelModel,
    ConfigError,
    CountRecord,
    DetectorModel,
    ExperimentConfig,
    LinearDrift,
    PockelsModel,
    Polarization,
    Quantity,
    SourceModel,
    malus_transmission,
    validate_config,
)
from calib.simulate import apply_dead_time, generate_pair_events, pockels_flip_decision, simulate_run, sweep

__version__ = "0.1.0"

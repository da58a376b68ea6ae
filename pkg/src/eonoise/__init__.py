"""Simulation and analysis of pulsed light-induced microwave noise in electro-optic transducers."""

from .chain import (
    CalibrationSweep,
    ChainCalibration,
    ExcessNoiseSpectrum,
    chain_output_power,
    compute_sdev,
    device_output_power,
    fit_calibration,
    input_attenuation,
)
from .config import ExperimentConfig, load_config
from .datasets import Dataset, load_dataset, save_dataset
from .errors import *  # noqa: F401,F403
from .extraction import (
    Decomposition,
    MultiExpFit,
    NoiseSliceFit,
    NoiseTrace,
    PowerLawFit,
    decompose_nidiff,
    detect_drive_edges,
    extract_nidiff_trace,
    fit_multiexponential,
    fit_noise_slice,
    fit_powerlaw,
    fit_resonance,
    fit_resonance_trace,
    multiexponential,
)
from .heat import (
    OpticalInterface,
    ThermalLink,
    equilibrium_temperature,
    heat_dissipated,
    heat_reduction_factor,
    occupancy_powerlaw_consistency,
)
from .numfit import FitProblem, FitResult, Tolerances, linear_least_squares, nonlinear_least_squares
from .physics import (
    CONSTANTS,
    PhysConstants,
    ResonatorParams,
    bose_einstein_occupancy,
    coherent_reflection,
    noise_reflection,
    noise_transmission,
)
from .pipeline import STAGES, run_pipeline
from .simulate import (
    BathModel,
    BathTrajectory,
    CoherentHeatMap,
    NoiseHeatMap,
    PulseTrain,
    ResonatorResponse,
    ResonatorTrajectory,
    bath_trajectory,
    lockin_filter,
    pulse_waveform,
    resonator_trajectory,
    synthesize_calibration_sweep,
    synthesize_coherent_heatmap,
    synthesize_heatmap,
)

__version__ = "0.1.0"

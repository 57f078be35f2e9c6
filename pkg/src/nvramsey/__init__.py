"""Simulation and analysis of double-quantum 4-Ramsey magnetometry with NV-diamond cameras."""
__version__ = "0.1.0"

from .analysis import (AllanCurve, CalibrationResult, DecileStats, SensitivityMap,
                       SensitivityReport, allan_deviation, calibrate, camera_field_slope,
                       improvement_ratio, measured_sensitivity, photons_for_sensitivity, ridr,
                       ridr_from_deciles, sensitivity_report, shot_noise_sensitivity,
                       volume_normalized)
from .camera_model import (CameraConfig, FrameResult, FrameSeries, TimingBudget, acquire_average,
                           acquire_frame, acquire_series, exposure_quarters, timing_budget)
from .config import ExperimentConfig, config_schema, load_config, parse_config
from .estimators import FringeMapTransformer, RamseyFringeRegressor
from .exceptions import (CalibrationError, ConfigError, FileFormatError, InvalidArgumentError,
                         NumericError, NVRamseyError, ShapeMismatchError, TimingViolationError)
from .fileio import read_map, read_series, read_tau_axis, write_map, write_series, write_tau_axis
from .fit_engine import (PARAM_NAMES, FitResult, FringeParams, GridFitResult, fit_fringe, fit_grid,
                         fringe_model, jacobian)
from .protocols import (PhaseTable, ProtocolSpec, SweepResult, builtin_protocol, detuning_sweep,
                        execute_protocol, find_operating_point, four_to_two, suppression_factor,
                        validate_phase_table)
from .pulse_engine import (DephasingModel, MWPulse, QuantumState, RamseySequence, TonePulse,
                           calibrate_pulse, free_evolution, pulse_propagator, run_sequence)
from .sample_model import (GridConfig, PixelEnvironment, PixelGrid, generate_grid,
                           load_stress_maps)
from .spin_core import (NVConstants, SpinHamiltonian, StressTerms, build_hamiltonian,
                        effective_rabi, eigenenergies, transition_frequencies,
                        transverse_stress_shift, transverse_stress_suppression)

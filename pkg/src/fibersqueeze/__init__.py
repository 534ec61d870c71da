"""Quantum-correlated pulse-pair simulator for dispersion-modulated birefringent fiber.

Classical two-polarization envelopes are propagated with a symmetric
split-step spectral method; linearized quantum fluctuations are carried by an
exact discrete-adjoint backpropagation engine; squeezing ratios and
photon-number correlation matrices are assembled from backpropagated,
slot-filtered local oscillators.
"""

from .errors import (
    ConfigError,
    EmptySlotWarning,
    FiberSimError,
    InvalidArgumentError,
    InvalidParameterError,
    NumericalBlowupError,
    UndefinedMeasurementError,
)
from .lattice import (
    FiberProfile,
    ModulationSpec,
    MODULATION_NONE,
    PolarizedField,
    TemporalGrid,
    birefringent_profile,
    default_grid,
    field_energy,
    field_intensity,
    make_initial_pair,
    make_initial_single,
    manakov_profile,
    monotone_spectrum,
)
from .nlse import (
    Trajectory,
    default_step_count,
    load_trajectory,
    output_spectrum,
    propagate_classical,
    save_field_csv,
    save_trajectory,
    split_spectra,
)
from .fluct import (
    AdjointField,
    PerturbationField,
    backpropagate_adjoint,
    backpropagate_adjoint_many,
    inner_product,
    propagate_fluctuation,
    propagate_fluctuation_many,
)
from .measure import (
    CorrelationMatrix,
    SlotSpec,
    ThetaOptimum,
    correlation_matrix,
    filtered_lo,
    load_matrix_binary,
    load_matrix_text,
    make_lo,
    optimize_theta,
    quadrant_extrema,
    save_matrix_binary,
    save_matrix_text,
    spectral_correlation_matrix,
    squeezing_distance_curve,
    squeezing_ratio,
)
from .scenarios import (
    SCENARIOS,
    PhysicalParams,
    ScaleReport,
    Scenario,
    denormalize,
    normalize,
    run_scenario,
    scenario_names,
    scenario_runconfig,
)
from .config import RunConfig, parse_config, serialize_config
from .cli import cli_main

__version__ = "0.1.0"

"""Continuous-time active disturbance rejection control (ADRC) and a closed-loop simulator."""

from .analysis import (
    MetricsReport,
    PoleCheck,
    check_b_ratio,
    metrics,
    ramp_disturbance_steady_state,
    verify_controller_poles,
    verify_observer_poles,
)
from .core import (
    AdrcBlock,
    AdrcConfig,
    CanonicalMatrices,
    EsoState,
    GainVectors,
    adrc_update,
    admissible_gain_ratio_bounds,
    apply_anti_peaking,
    apply_saturation,
    canonical_matrices,
    controller_gains,
    eso_derivative,
    eso_step,
    observer_gains,
    raw_control,
)
from .engine import NoiseModel, Scenario, Trace, gaussian_sample, rk4_plant_step, run, true_total_disturbance
from .errors import AdrcError, ConfigError, DivergenceError, UnsupportedPlantError
from .plants import (
    BuckConverter,
    CoupledTanks,
    DcMotor,
    GenericLinearPlant,
    LinearPlant,
    PlantModel,
    TcLabThermal,
    buck_load_disturbance,
    make_plant,
)
from .scenario_io import builtin, emit_csv, parse_scenario, read_csv, serialize_scenario

__version__ = "0.1.0"

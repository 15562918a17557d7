"""Radical-pair reaction kinetics as an open quantum walk on a reaction graph."""

__version__ = "0.1.0"

from .channels import (
    Channel,
    CoherentParams,
    DampingParams,
    DephasingParams,
    closed_form_unitary,
    make_damping,
    make_dephasing,
    make_unitary,
    transition_probability,
)
from .dynamics import (
    Trajectory,
    classical_evolve,
    classical_step_matrix,
    count_inflections,
    count_local_maxima,
    crossing_time,
    evolve,
    mc_sample_hitting,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    NoArrival,
    SingularOperator,
    TailTooHeavy,
    ThresholdNotReached,
    TimeStepTooLarge,
    WalkError,
)
from .hitting import (
    HittingResult,
    generating_function,
    hitting_distribution,
    hitting_stats,
    mean_hitting_steps,
    mean_hitting_time,
)
from .linalg import Superoperator, superop_from_kraus
from .reaction import ReactionGraph, StepMap, compile_graph, cryptochrome_preset, load_config, parse_config
from .scenarios import SweepSpec, run_sweep, scenario_presets

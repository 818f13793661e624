"""Delay-compensated networked control: simulation, MPC and robustness bounds."""
from .bounds import ErrorBoundModel, auxiliary_replay, check_theorem_bound, epsilon_eval, eta_eval, extract_v
from .compensation import Controller, PredictionLedger, StaticFeedbackGenerator, reconcile_consistency
from .dynamics import PlantModel, Trajectory, double_integrator, iterate_approx, iterate_exact, scalar_plant
from .errors import (
    ConfigurationError,
    ConsistencyError,
    GenerationError,
    NoMeasurementError,
    NumericalBlowupError,
    PredcompError,
    SingularityError,
    StarvationError,
)
from .mpc import MpcConfig, MpcGenerator, solve_ocp, stage_cost
from .transport import ActuatorBuffer, ChannelModel, ControlSequencePacket, MeasurementPacket

__version__ = "0.1.0"

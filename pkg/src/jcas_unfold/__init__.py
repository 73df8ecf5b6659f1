"""Constant-modulus waveform design for joint communication and sensing.

Classical solvers (projected gradient descent, a phase-grid oracle) and a
trainable unfolded network that approximates them at a fixed cost.
"""

from .errors import (
    ConfigurationError,
    ConsistencyError,
    ConstraintError,
    DimensionError,
    JcasError,
    MissingModelError,
    ModelFileError,
    NumericError,
    ParameterError,
    SizeError,
    TrainingError,
)
from .kernels import BACKEND
from .metrics import (
    BeamPattern,
    EvalReport,
    Waveform,
    beam_mse,
    beam_pattern,
    default_angle_grid,
    evaluate_waveform,
    modulus_error,
    mui_power,
    per_user_sinr,
    sum_rate,
)
from .modelfile import load_model, save_model
from .network import UnfoldModel, forward, infer_waveform, pgd_init, random_init, training_loss
from .problem import (
    ColumnBatch,
    JcasProblem,
    RealColumnProblem,
    decompose_columns,
    frame_objective,
    gradient,
    make_column_problem,
    objective,
    project_cm,
)
from .signals import chirp_benchmark, sample_channel, sample_qpsk_frame, steering_vector
from .solvers import PgdConfig, PhaseGridConfig, pgd_batch, pgd_solve, phase_grid_solve, solve_frame
from .training import Scenario, TrainConfig, train

__version__ = "0.1.0"

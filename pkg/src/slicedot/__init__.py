"""Sliced optimal-transport distances with exact 1D transport, a minimal
gradient tape, and desk-scale generative training."""

from .core import (
    ConfigError,
    DegenerateMap,
    DomainError,
    EmpiricalMeasure,
    NonScalarRoot,
    NumericError,
    ParseError,
    RngStream,
    ShapeError,
    SizeError,
    SlicedotError,
    as_tensor,
    load_measure,
    load_tensors,
    sample_standard_normal,
    save_measure,
    save_tensors,
)
from .distances import (
    DswConfig,
    DswResult,
    SlicedConfig,
    dgsw,
    dsw,
    ds_value,
    gsw,
    max_gsw_nn,
    max_sw,
    per_direction_costs,
    sliced_from_dirs,
    sphere_map_ascent_step,
    sw,
)
from .grad import Adam, Node, Tape, backward, central_difference, gradient_mismatch
from .mede import (
    Encoder,
    Generator,
    TrainConfig,
    TrainLog,
    evaluate_model,
    reconstruction_error,
    train_jci,
    train_mede,
)
from .slicing import (
    LINEAR,
    DefiningFunction,
    SphereMap,
    circular,
    concentration_statistic,
    offdiag_coherence,
    project,
    sample_uniform_sphere,
)
from .transport import (
    Coupling,
    Measure1D,
    exact_wasserstein,
    sorted_matching_cost,
    wasserstein_1d,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "ConfigError",
    "Coupling",
    "DefiningFunction",
    "DegenerateMap",
    "DomainError",
    "DswConfig",
    "DswResult",
    "EmpiricalMeasure",
    "Encoder",
    "Generator",
    "LINEAR",
    "Measure1D",
    "Node",
    "NonScalarRoot",
    "NumericError",
    "ParseError",
    "RngStream",
    "ShapeError",
    "SizeError",
    "SlicedConfig",
    "SlicedotError",
    "SphereMap",
    "Tape",
    "TrainConfig",
    "TrainLog",
    "as_tensor",
    "backward",
    "central_difference",
    "circular",
    "concentration_statistic",
    "dgsw",
    "ds_value",
    "dsw",
    "evaluate_model",
    "exact_wasserstein",
    "gradient_mismatch",
    "gsw",
    "load_measure",
    "load_tensors",
    "max_gsw_nn",
    "max_sw",
    "offdiag_coherence",
    "per_direction_costs",
    "project",
    "reconstruction_error",
    "sample_standard_normal",
    "sample_uniform_sphere",
    "save_measure",
    "save_tensors",
    "sliced_from_dirs",
    "sorted_matching_cost",
    "sphere_map_ascent_step",
    "sw",
    "train_jci",
    "train_mede",
    "wasserstein_1d",
]

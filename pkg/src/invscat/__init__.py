"""Inverse medium scattering in 2D: simulation, reconstruction, learning.

The package recovers the contrast m of an inhomogeneous acoustic medium
from noisy far-field measurements.  Modules:

  core        grids, contrasts, far fields, configs, residual logs
  fileio      CTR1 contrast and FFD1 far-field binary files
  forward     Lippmann-Schwinger solver and far-field operator
  diskseries  separable series solution for a disk contrast (oracle)
  linearize   derivative of the far-field map, its adjoint, norms
  invert      Landweber, IRGNM, combined and learned-combined methods
  projector   U-Net inference from LPW1 weight files
  dataset     digit-based contrast/far-field dataset synthesis
  cli         one command-line entry point over all of it
"""

from .core import (
    ContrastGrid,
    FarField,
    Grid,
    ResidualLog,
    ScatterConfig,
    direction_set,
    downscale,
    normalize,
    relative_error,
    upscale,
)
from .dataset import (
    DigitSource,
    draw_amplitudes,
    emit_training_pairs,
    generate_dataset,
    load_digit_source,
    read_idx,
    read_manifest,
    synthesize_contrast,
    write_idx,
)
from .diskseries import disk_oracle, disk_total_field
from .errors import (
    BadMagic,
    ConfigError,
    DimensionMismatch,
    InvscatError,
    MissingWeights,
    NoConvergence,
    SeriesDivergence,
    ShapeMismatch,
    TruncatedFile,
)
from .fileio import read_contrast, read_far_field, write_contrast, write_far_field
from .forward import (
    GreenKernel,
    LippmannSolver,
    TotalFieldSet,
    add_noise,
    apply_volume_potential,
    born_far_field,
    far_field,
    far_field_constant,
    get_kernel,
    incident_fields,
    solve_forward,
)
from .invert import (
    CombinedParams,
    CombinedResult,
    IrgnmParams,
    LandweberParams,
    LearnedParams,
    LearnedResult,
    combined,
    irgnm,
    landweber,
    learned_combined,
    multi_frequency_landweber,
    simplified_learned_combined,
)
from .linearize import (
    LinearizedMap,
    NormEstimate,
    jacobian_adjoint,
    jacobian_apply,
    operator_norm,
)
from .projector import (
    ProjectorWeights,
    architecture_manifest,
    infer,
    load_weights,
    project_contrast,
    save_weights,
    zero_weights,
)

__all__ = [
    "ContrastGrid",
    "FarField",
    "Grid",
    "ResidualLog",
    "ScatterConfig",
    "direction_set",
    "downscale",
    "normalize",
    "relative_error",
    "upscale",
    "DigitSource",
    "draw_amplitudes",
    "emit_training_pairs",
    "generate_dataset",
    "load_digit_source",
    "read_idx",
    "read_manifest",
    "synthesize_contrast",
    "write_idx",
    "disk_oracle",
    "disk_total_field",
    "BadMagic",
    "ConfigError",
    "DimensionMismatch",
    "InvscatError",
    "MissingWeights",
    "NoConvergence",
    "SeriesDivergence",
    "ShapeMismatch",
    "TruncatedFile",
    "read_contrast",
    "read_far_field",
    "write_contrast",
    "write_far_field",
    "GreenKernel",
    "LippmannSolver",
    "TotalFieldSet",
    "add_noise",
    "apply_volume_potential",
    "born_far_field",
    "far_field",
    "far_field_constant",
    "get_kernel",
    "incident_fields",
    "solve_forward",
    "CombinedParams",
    "CombinedResult",
    "IrgnmParams",
    "LandweberParams",
    "LearnedParams",
    "LearnedResult",
    "combined",
    "irgnm",
    "landweber",
    "learned_combined",
    "multi_frequency_landweber",
    "simplified_learned_combined",
    "LinearizedMap",
    "NormEstimate",
    "jacobian_adjoint",
    "jacobian_apply",
    "operator_norm",
    "ProjectorWeights",
    "architecture_manifest",
    "infer",
    "load_weights",
    "project_contrast",
    "save_weights",
    "zero_weights",
]

__version__ = "0.1.0"

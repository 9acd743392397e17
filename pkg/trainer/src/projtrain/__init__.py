"""Training pipeline for the learned contrast projector.

Produces LPW1 weight files for the invscat solver package, which it
drives only through its command line and file formats.
"""

from .desk import evaluate_methods, prepare_datasets, run_desk
from .export import FIXTURE_COUNT, export_weights
from .formats import FormatError, Weights, read_contrast, read_weights, write_contrast, write_weights
from .materials import (
    OrchestrationError,
    emit_stage,
    generate_dataset,
    load_pairs,
    reconstruct,
    relative_error,
    run_cli,
    write_config,
    write_idx_corpus,
)
from .network import (
    Unet,
    evaluate,
    export_tensors,
    from_weights,
    load_tensors,
    to_weights,
    weight_manifest,
    xavier_init,
)
from .train import (
    MissingMaterials,
    Part1Result,
    Part2Result,
    TrainConfig,
    TrainingDiverged,
    train_part1,
    train_part2,
)

__all__ = [
    "FIXTURE_COUNT",
    "FormatError",
    "MissingMaterials",
    "OrchestrationError",
    "Part1Result",
    "Part2Result",
    "TrainConfig",
    "TrainingDiverged",
    "Unet",
    "Weights",
    "emit_stage",
    "evaluate",
    "evaluate_methods",
    "export_tensors",
    "export_weights",
    "from_weights",
    "generate_dataset",
    "load_pairs",
    "load_tensors",
    "prepare_datasets",
    "read_contrast",
    "read_weights",
    "reconstruct",
    "relative_error",
    "run_cli",
    "run_desk",
    "to_weights",
    "train_part1",
    "train_part2",
    "weight_manifest",
    "write_config",
    "write_contrast",
    "write_idx_corpus",
    "write_weights",
    "xavier_init",
]

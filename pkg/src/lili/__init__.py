"""lili: a desk-scale lab for learning logic relations from digit images.

Generate image-encoded datasets for six integer relations, train dense
pixel-regression networks on them, and reproduce the carry/non-carry
decomposition advantage on multiplication, all with deterministic,
bit-exact data handling.
"""

__version__ = "0.1.0"

from .codec import FieldSpec, binarize, decode, export_pgm, normalize, render
from .datagen import Dataset, DatasetConfig, TaskShape, build_dataset, read_dataset, write_dataset
from .harness import ExperimentConfig, MetricsReport, compare, evaluate, run_experiment
from .models import BaselineModel, DcmModel, train_baseline, train_dcm
from .nn import NetworkSpec, TrainConfig, fit, grad_check
from .oracle import Relation, RelationKind, SampleRecord, apply_relation, carry_split, digits

__all__ = [
    "FieldSpec",
    "binarize",
    "decode",
    "export_pgm",
    "normalize",
    "render",
    "Dataset",
    "DatasetConfig",
    "TaskShape",
    "build_dataset",
    "read_dataset",
    "write_dataset",
    "ExperimentConfig",
    "MetricsReport",
    "compare",
    "evaluate",
    "run_experiment",
    "BaselineModel",
    "DcmModel",
    "train_baseline",
    "train_dcm",
    "NetworkSpec",
    "TrainConfig",
    "fit",
    "grad_check",
    "Relation",
    "RelationKind",
    "SampleRecord",
    "apply_relation",
    "carry_split",
    "digits",
]

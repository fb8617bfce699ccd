"""Semi-supervised video classification with pseudo-labels and a frame teacher, in numpy."""

from .config import RunConfig, load_config, save_config
from .data import (
    SynthDataset,
    SynthVideoSpec,
    build_dataset,
    generate_dataset,
    read_dataset,
    split_labels,
    write_dataset,
)
from .errors import (
    BadMagicError,
    ConfigError,
    FormatError,
    NonFiniteLossError,
    ShapeError,
    TruncatedFileError,
    VersionMismatchError,
)
from .evaluation import ClipGeometry, clip_top1, evaluate, per_class_delta, video_top1
from .losses import (
    LossSchedule,
    PseudoLabelRule,
    combined_loss,
    distill_soft_ce,
    lambda_u,
    pseudo_assign,
    pseudo_ce,
    supervised_ce,
)
from .models import TeacherNet2D, VideoNet3D, VideoNetConfig, load_teacher, save_teacher
from .optim import OptState, SgdConfig, lr_at, sgd_step
from .trainer import Method, TrainConfig, load_state, pretrain_teacher, train, train_step

__version__ = "0.1.0"

__all__ = [
    "BadMagicError", "ClipGeometry", "ConfigError", "FormatError", "LossSchedule", "Method",
    "NonFiniteLossError", "OptState", "PseudoLabelRule", "RunConfig", "SgdConfig", "ShapeError",
    "SynthDataset", "SynthVideoSpec", "TeacherNet2D", "TrainConfig", "TruncatedFileError",
    "VersionMismatchError", "VideoNet3D", "VideoNetConfig", "build_dataset", "clip_top1",
    "combined_loss", "distill_soft_ce", "evaluate", "generate_dataset", "lambda_u", "load_config",
    "load_state", "load_teacher", "lr_at", "per_class_delta", "pretrain_teacher", "pseudo_assign",
    "pseudo_ce", "read_dataset", "save_config", "save_teacher", "sgd_step", "split_labels",
    "supervised_ce", "train", "train_step", "video_top1", "write_dataset",
]

"""Test-time adaptation via learnable batch-norm statistic mixing."""

from .adaptation import (
    AdaptConfig,
    AdaptReport,
    KlHistory,
    SampleRecord,
    adapt_step,
    kl_filter_decision,
    run_dual_stage,
)
from .baselines import adabn_forward, ema_adapt_step, tent_adapt_step
from .bn import (
    BnState,
    bn_forward_inference,
    bn_forward_mix,
    bn_forward_present,
    phi_constrain,
    reset_phi,
    secondary_correct,
)
from .checkpoint_io import load_checkpoint, save_checkpoint
from .datagen import (
    CorruptionSpec,
    Dataset,
    DatasetSpec,
    apply_corruption,
    gen_dataset,
    sample_stream,
)
from .estimators import (
    AdaBNAdapter,
    EmaBNAdapter,
    FrozenAdapter,
    LearnableBNAdapter,
    SourceClassifier,
    TentAdapter,
)
from .losses import em_loss, gs_loss, gsem_loss, kl_divergence
from .model import (
    Checkpoint,
    ModelSpec,
    accuracy,
    forward,
    init_checkpoint,
    predict_labels,
    train_source,
)
from .tensor import DiffTape, Tensor, backward, batch_stats, finite_diff, matmul, softmax

__version__ = "0.1.0"

__all__ = [
    "AdaBNAdapter",
    "AdaptConfig",
    "AdaptReport",
    "BnState",
    "Checkpoint",
    "CorruptionSpec",
    "Dataset",
    "DatasetSpec",
    "DiffTape",
    "EmaBNAdapter",
    "FrozenAdapter",
    "KlHistory",
    "LearnableBNAdapter",
    "ModelSpec",
    "SampleRecord",
    "SourceClassifier",
    "Tensor",
    "TentAdapter",
    "accuracy",
    "adabn_forward",
    "adapt_step",
    "apply_corruption",
    "backward",
    "batch_stats",
    "bn_forward_inference",
    "bn_forward_mix",
    "bn_forward_present",
    "em_loss",
    "ema_adapt_step",
    "finite_diff",
    "forward",
    "gen_dataset",
    "gs_loss",
    "gsem_loss",
    "init_checkpoint",
    "kl_divergence",
    "kl_filter_decision",
    "load_checkpoint",
    "matmul",
    "phi_constrain",
    "predict_labels",
    "reset_phi",
    "run_dual_stage",
    "sample_stream",
    "save_checkpoint",
    "secondary_correct",
    "softmax",
    "tent_adapt_step",
    "train_source",
]

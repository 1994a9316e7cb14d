"""Online continual learning at desk scale: a deterministic stream-training
engine with prior-adjusted softmax losses, replay memory, and a benchmark
harness."""

from .buffer import MemoryBuffer
from .data import (Dataset, IdxFormatError, LabeledExample, load_idx,
                   synthetic_gaussians, synthetic_superclass_domains,
                   write_dataset_idx, write_idx)
from .losses import LossResult, kd_loss, las_ce, las_ce_tau_inf, softmax_ce
from .metrics import (AccuracyMatrix, BiasHistogram, auc_accuracy,
                      class_balanced_accuracy, final_averages,
                      prediction_bias_histogram, predict_classes, task_accuracy)
from .network import (Activations, Gradients, MlpModel, SgdConfig, backward,
                      clone_model, expand_head, forward, load_model,
                      models_equal, new_model, save_model, sgd_step)
from .priors import (PriorVector, SlidingWindowEstimator, macro_priors,
                     random_priors)
from .stream import (StreamBatch, StreamCursor, TaskDescriptor, TaskSchedule,
                     blurry_schedule, class_il_schedule, manifest_json,
                     manifest_sha256, next_batch, schedule_manifest,
                     stream_batches, sum_class_domain_schedule)
from .training import (ALGORITHMS, ESTIMATORS, RunResult, TrainerConfig,
                       TrainState, init_state, on_task_boundary, run,
                       seed_streams, stream_seed_int, train_step)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "ESTIMATORS", "Activations", "AccuracyMatrix",
    "BiasHistogram", "Dataset", "Gradients", "IdxFormatError",
    "LabeledExample", "LossResult", "MemoryBuffer", "MlpModel", "PriorVector",
    "RunResult", "SgdConfig", "SlidingWindowEstimator", "StreamBatch",
    "StreamCursor", "TaskDescriptor", "TaskSchedule", "TrainState",
    "TrainerConfig", "auc_accuracy", "backward", "blurry_schedule",
    "class_balanced_accuracy", "class_il_schedule", "clone_model",
    "expand_head", "final_averages", "forward", "init_state", "kd_loss",
    "las_ce", "las_ce_tau_inf", "load_idx", "load_model", "macro_priors",
    "manifest_json", "manifest_sha256", "models_equal", "new_model",
    "next_batch", "on_task_boundary", "prediction_bias_histogram",
    "predict_classes", "random_priors", "run", "save_model",
    "schedule_manifest", "seed_streams", "sgd_step", "softmax_ce",
    "stream_batches", "stream_seed_int", "sum_class_domain_schedule",
    "synthetic_gaussians", "synthetic_superclass_domains", "task_accuracy",
    "train_step", "write_dataset_idx", "write_idx",
]

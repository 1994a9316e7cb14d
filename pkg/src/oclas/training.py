"""Online training loop: one gradient step per incoming batch, single pass.

Algorithms
  fine_tune         plain cross-entropy, no memory
  er                replay buffer + cross-entropy
  er_las            replay buffer + prior-adjusted cross-entropy
  er_las_tau_inf    replay buffer + coefficient-zeroing adjusted loss
  las_no_rehearsal  prior-adjusted cross-entropy, no memory
  kd_las            er_las plus distillation against a boundary snapshot

Only kd_las may consume task-boundary flags; every other algorithm treats the
stream as boundary-free. All randomness (weight init, buffer updates,
retrieval, evaluation subsets, random priors) flows from independent
sub-streams of master_seed, so changing one concern never perturbs another.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .buffer import MemoryBuffer
from .losses import LossResult, kd_loss, las_ce, las_ce_tau_inf, softmax_ce
from .metrics import AccuracyMatrix, class_balanced_accuracy, task_accuracy
from .network import (MlpModel, SgdConfig, backward, clone_model, expand_head,
                      forward, new_model, sgd_step)
from .priors import PriorVector, SlidingWindowEstimator, macro_priors, random_priors
from .stream import StreamBatch, TaskSchedule, manifest_sha256, stream_batches

ALGORITHMS = ("fine_tune", "er", "er_las", "er_las_tau_inf",
              "las_no_rehearsal", "kd_las")
ESTIMATORS = ("sliding", "random", "macro")

_USES_BUFFER = {"er", "er_las", "er_las_tau_inf", "kd_las"}
_USES_PRIORS = {"er_las", "er_las_tau_inf", "las_no_rehearsal", "kd_las"}


@dataclass
class TrainerConfig:
    algorithm: str
    learning_rate: float = 0.03
    incoming_batch_size: int = 32
    buffer_batch_size: int = 32
    memory_capacity: int = 500
    tau: float = 1.0
    window_length: int = 1
    epsilon_floor: float = 1e-8
    kd_temperature: float = 2.0
    kd_weight: float = 1.0
    master_seed: int = 0
    hidden_sizes: tuple[int, ...] = (400, 400)
    estimator: str = "sliding"
    probe_interval: int = 0        # accuracy-trace spacing in steps; 0 disables
    probe_subset_size: int = 1000
    retrieval_with_replacement: bool = False
    record_prior_trace: bool = False

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.estimator not in ESTIMATORS:
            raise ValueError(
                f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}"
            )
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.incoming_batch_size < 1:
            raise ValueError("incoming_batch_size must be >= 1")
        if self.buffer_batch_size < 0 or self.memory_capacity < 0:
            raise ValueError("buffer_batch_size and memory_capacity must be >= 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")
        if self.epsilon_floor <= 0:
            raise ValueError("epsilon_floor must be positive")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)


@dataclass
class TrainState:
    model: MlpModel
    buffer: MemoryBuffer
    estimator: SlidingWindowEstimator
    rngs: dict[str, np.random.Generator]
    observed_labels: list[int] = field(default_factory=list)
    label_to_column: dict[int, int] = field(default_factory=dict)
    teacher: MlpModel | None = None
    teacher_snapshots: int = 0
    step: int = 0
    macro_stream_counts: dict[int, int] | None = None
    prior_trace: list[tuple[int, int, float]] = field(default_factory=list)


@dataclass
class RunResult:
    model: MlpModel
    matrix: AccuracyMatrix
    trace: list[tuple[int, float]]
    observed_labels: list[int]
    total_steps: int
    wall_clock_s: float
    manifest_sha256: str
    teacher_snapshots: int
    buffer: MemoryBuffer
    prior_trace: list[tuple[int, int, float]]


_STREAM_NAMES = ("schedule_class_order", "schedule_shuffle", "init", "buffer",
                 "retrieval", "probe", "priors")


def seed_streams(master_seed: int) -> dict[str, np.random.SeedSequence]:
    """Independent sub-streams of master_seed, one per randomness concern."""
    children = np.random.SeedSequence(master_seed).spawn(len(_STREAM_NAMES))
    return dict(zip(_STREAM_NAMES, children))


def stream_seed_int(ss: np.random.SeedSequence) -> int:
    """Collapse a sub-stream to a plain integer seed."""
    return int(ss.generate_state(1, np.uint64)[0])


def _spawn_rngs(master_seed: int) -> dict[str, np.random.Generator]:
    streams = seed_streams(master_seed)
    return {n: np.random.default_rng(streams[n])
            for n in ("init", "buffer", "retrieval", "probe", "priors")}


def init_state(config: TrainerConfig, feature_dim: int) -> TrainState:
    rngs = _spawn_rngs(config.master_seed)
    model = new_model(feature_dim, config.hidden_sizes, 0, rngs["init"])
    return TrainState(model=model,
                      buffer=MemoryBuffer(config.memory_capacity),
                      estimator=SlidingWindowEstimator(config.window_length),
                      rngs=rngs)


def _compute_priors(state: TrainState, config: TrainerConfig,
                    incoming_size: int, buffer_size: int) -> PriorVector:
    observed = state.observed_labels
    if config.estimator == "sliding":
        return state.estimator.priors(observed, config.epsilon_floor)
    if config.estimator == "random":
        return random_priors(observed, state.rngs["priors"], config.epsilon_floor)
    if state.macro_stream_counts is None:
        raise RuntimeError("macro estimator needs the current task's label counts")
    base = macro_priors(state.macro_stream_counts, state.buffer.label_histogram(),
                        incoming_size, buffer_size, config.epsilon_floor)
    # Observed classes absent from both sources get the epsilon floor.
    weights = {c: base.entries.get(c, 0.0) for c in observed}
    return PriorVector.from_weights(weights, config.epsilon_floor)


def train_step(state: TrainState, batch: StreamBatch,
               config: TrainerConfig) -> TrainState:
    """One full online step for the configured algorithm."""
    if not batch.examples:
        raise ValueError("empty stream batch")
    algo = config.algorithm
    uses_buffer = algo in _USES_BUFFER

    new_labels = sorted({ex.label for ex in batch.examples} -
                        set(state.label_to_column))
    for c in new_labels:
        state.label_to_column[c] = len(state.observed_labels)
        state.observed_labels.append(c)
    if new_labels:
        expand_head(state.model, len(state.observed_labels), state.rngs["init"])

    memory_batch = []
    if uses_buffer:
        memory_batch = state.buffer.random_retrieve(
            config.buffer_batch_size, state.rngs["retrieval"],
            config.retrieval_with_replacement)

    inputs = batch.examples + memory_batch
    features = np.stack([ex.features for ex in inputs])
    label_cols = np.array([state.label_to_column[ex.label] for ex in inputs],
                          dtype=np.int64)

    column_priors = None
    if algo in _USES_PRIORS:
        if config.estimator == "sliding":
            state.estimator.observe_batch([ex.label for ex in inputs])
        by_class = _compute_priors(state, config, len(batch.examples),
                                   len(memory_batch))
        column_priors = PriorVector(
            {state.label_to_column[c]: p for c, p in by_class.entries.items()})
        if config.record_prior_trace:
            state.prior_trace.extend(
                (state.step + 1, c, p) for c, p in sorted(by_class.entries.items()))

    logits, acts = forward(state.model, features)
    if algo in ("fine_tune", "er"):
        loss = softmax_ce(logits, label_cols)
    elif algo in ("er_las", "las_no_rehearsal"):
        loss = las_ce(logits, label_cols, column_priors, config.tau)
    elif algo == "er_las_tau_inf":
        loss = las_ce_tau_inf(logits, label_cols, column_priors)
    else:  # kd_las
        loss = las_ce(logits, label_cols, column_priors, config.tau)
        if state.teacher is not None:
            teacher_logits, _ = forward(state.teacher, features)
            distill = kd_loss(logits, teacher_logits, config.kd_temperature)
            loss = LossResult(loss.value + config.kd_weight * distill.value,
                              loss.dlogits + config.kd_weight * distill.dlogits)

    grads = backward(state.model, acts, loss.dlogits)
    sgd_step(state.model, grads, SgdConfig(config.learning_rate))

    if uses_buffer:
        state.buffer.reservoir_update(batch.examples, state.rngs["buffer"])
    state.step += 1
    return state


def on_task_boundary(state: TrainState, config: TrainerConfig) -> TrainState:
    """Freeze the current model as the distillation teacher (kd_las only)."""
    if config.algorithm != "kd_las":
        raise RuntimeError(
            f"algorithm {config.algorithm!r} must not consume task boundaries"
        )
    state.teacher = clone_model(state.model)
    state.teacher_snapshots += 1
    return state


def _evaluate_row(state: TrainState, schedule: TaskSchedule,
                  up_to_task: int) -> tuple[list[float], list[float]]:
    accs, bals = [], []
    for j in range(up_to_task + 1):
        examples = [schedule.test_data.examples[i]
                    for i in schedule.tasks[j].test_indices]
        if not examples:
            raise ValueError(f"test partition for task {j} is empty")
        accs.append(task_accuracy(state.model, examples, state.observed_labels))
        bals.append(class_balanced_accuracy(state.model, examples,
                                            state.observed_labels))
    return accs, bals


def run(schedule: TaskSchedule, config: TrainerConfig,
        eval_hook=None) -> RunResult:
    """Stream every scheduled batch exactly once through train_step.

    After each task the accuracy matrix gains a row; if probe_interval is
    set, a seeded seen-classes test subset is scored every probe_interval
    steps for the accuracy-versus-steps trace. eval_hook, when given, is
    called as eval_hook(state, task_id, accuracies, balanced) after each row.
    """
    start = time.perf_counter()
    state = init_state(config, schedule.train_data.feature_dim)
    matrix = AccuracyMatrix()
    trace: list[tuple[int, float]] = []

    batches = list(stream_batches(schedule, config.incoming_batch_size))
    test_data = schedule.test_data

    probe_pool: list[int] = []
    probe_pool_classes: set[int] = set()

    for idx, batch in enumerate(batches):
        if batch.is_task_boundary:
            if config.algorithm == "kd_las" and state.step > 0:
                on_task_boundary(state, config)
            if config.estimator == "macro":
                task = schedule.tasks[batch.task_id]
                state.macro_stream_counts = dict(Counter(
                    schedule.train_data.examples[i].label
                    for i in task.train_indices))

        train_step(state, batch, config)

        if config.probe_interval and state.step % config.probe_interval == 0:
            observed = set(state.observed_labels)
            if observed != probe_pool_classes:
                probe_pool = [i for i, ex in enumerate(test_data.examples)
                              if ex.label in observed]
                probe_pool_classes = set(observed)
            if probe_pool:
                k = min(config.probe_subset_size, len(probe_pool))
                picks = state.rngs["probe"].choice(len(probe_pool), size=k,
                                                   replace=False)
                subset = [test_data.examples[probe_pool[int(i)]] for i in picks]
                trace.append((state.step, task_accuracy(
                    state.model, subset, state.observed_labels)))

        last_of_task = (idx + 1 == len(batches)
                        or batches[idx + 1].task_id != batch.task_id)
        if last_of_task:
            while matrix.num_tasks <= batch.task_id:
                accs, bals = _evaluate_row(state, schedule, matrix.num_tasks)
                task_id = matrix.num_tasks
                matrix.add_row(accs, bals)
                if eval_hook is not None:
                    eval_hook(state, task_id, accs, bals)

    for p in state.model.parameters():
        if not np.all(np.isfinite(p)):
            raise RuntimeError("non-finite parameter after training run")

    return RunResult(model=state.model, matrix=matrix, trace=trace,
                     observed_labels=list(state.observed_labels),
                     total_steps=state.step,
                     wall_clock_s=time.perf_counter() - start,
                     manifest_sha256=manifest_sha256(schedule),
                     teacher_snapshots=state.teacher_snapshots,
                     buffer=state.buffer,
                     prior_trace=list(state.prior_trace))

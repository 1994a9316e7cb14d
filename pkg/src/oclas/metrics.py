"""Evaluation: per-task accuracy, class-balanced accuracy, final averages,
forgetting, accuracy-AUC, and the prediction-bias histogram.

The head columns of a model correspond, in order, to the class ids the run
observed; every function here takes that ordered id list. Argmax ties break
toward the smallest class id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, LabeledExample
from .network import MlpModel, forward
from .stream import TaskSchedule


@dataclass
class AccuracyMatrix:
    """Lower-triangular accuracy grids: rows[i][j] is the accuracy on task j
    after training task i (defined only for j <= i)."""

    rows: list[list[float]] = field(default_factory=list)
    cbl_rows: list[list[float]] = field(default_factory=list)

    @property
    def num_tasks(self) -> int:
        return len(self.rows)

    def add_row(self, accuracies: list[float], balanced: list[float]) -> None:
        if len(accuracies) != len(self.rows) + 1 or len(balanced) != len(accuracies):
            raise ValueError("row i must contain exactly i+1 entries")
        for v in list(accuracies) + list(balanced):
            if not 0.0 <= v <= 1.0:
                raise ValueError("accuracy outside [0, 1]")
        self.rows.append(list(accuracies))
        self.cbl_rows.append(list(balanced))


@dataclass
class BiasHistogram:
    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def share(self, task_id: int) -> float:
        return self.counts.get(task_id, 0) / self.total if self.total else 0.0


def predict_classes(model: MlpModel, features: np.ndarray,
                    observed_labels) -> np.ndarray:
    """Predicted class ids; ties go to the smallest class id."""
    observed = list(observed_labels)
    if len(observed) != model.num_classes:
        raise ValueError("observed label list does not match head width")
    logits, _ = forward(model, features)
    # Argmax in class-id order so numpy's first-max rule picks the lowest id.
    id_order = np.argsort(np.array(observed, dtype=np.int64), kind="stable")
    sorted_ids = np.array(observed, dtype=np.int64)[id_order]
    winners = np.argmax(logits[:, id_order], axis=1)
    return sorted_ids[winners]


def _examples_to_arrays(examples: list[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    feats = np.stack([ex.features for ex in examples])
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    return feats, labels


def task_accuracy(model: MlpModel, examples: list[LabeledExample],
                  observed_labels) -> float:
    """Fraction of examples whose predicted class equals the true label."""
    if not examples:
        raise ValueError("empty test partition")
    feats, labels = _examples_to_arrays(examples)
    preds = predict_classes(model, feats, observed_labels)
    return float((preds == labels).mean())


def class_balanced_accuracy(model: MlpModel, examples: list[LabeledExample],
                            observed_labels,
                            missing_as_zero: bool = False) -> float:
    """Mean per-class recall over the observed label set.

    Observed classes with no test example in the partition are excluded from
    the average by default; missing_as_zero counts them as zero recall
    instead.
    """
    if not examples:
        raise ValueError("empty test partition")
    feats, labels = _examples_to_arrays(examples)
    preds = predict_classes(model, feats, observed_labels)
    recalls = []
    for c in observed_labels:
        mask = labels == c
        if mask.any():
            recalls.append(float((preds[mask] == c).mean()))
        elif missing_as_zero:
            recalls.append(0.0)
    if not recalls:
        raise ValueError("no observed class has test examples in this partition")
    return float(np.mean(recalls))


def final_averages(matrix: AccuracyMatrix) -> tuple[float, float, float | None]:
    """(final average accuracy, its class-balanced variant, final forgetting).

    Forgetting averages, over the non-final tasks, how far the final accuracy
    sits below the task's best pre-final accuracy. A task that only improves
    after its own training contributes negatively (backward transfer), so the
    average can drop below zero. None for single-task runs.
    """
    t = matrix.num_tasks
    if t == 0:
        raise ValueError("empty accuracy matrix")
    for i, row in enumerate(matrix.rows):
        if len(row) != i + 1:
            raise ValueError("accuracy matrix incomplete")
    a_t = float(np.mean(matrix.rows[-1]))
    a_t_cbl = float(np.mean(matrix.cbl_rows[-1]))
    if t < 2:
        return a_t, a_t_cbl, None
    drops = []
    for j in range(t - 1):
        best_earlier = max(matrix.rows[i][j] for i in range(j, t - 1))
        drops.append(best_earlier - matrix.rows[-1][j])
    return a_t, a_t_cbl, float(np.mean(drops))


def auc_accuracy(trace: list[tuple[int, float]], delta_n: int,
                 total_steps: int) -> float:
    """Riemann-sum area under the accuracy-versus-steps curve, probed every
    delta_n steps, normalized by the total step count."""
    if not trace:
        raise ValueError("empty accuracy trace")
    if delta_n < 1 or total_steps < 1:
        raise ValueError("delta_n and total_steps must be >= 1")
    for k, (step, _) in enumerate(trace):
        if step != (k + 1) * delta_n:
            raise ValueError("trace is not probed every delta_n steps")
    return float(sum(acc for _, acc in trace) * delta_n / total_steps)


def prediction_bias_histogram(model: MlpModel, test_data: Dataset,
                              schedule: TaskSchedule,
                              observed_labels) -> BiasHistogram:
    """Count test predictions by the task that owns each predicted class."""
    owner = schedule.task_of_class()
    if set(observed_labels) - set(owner):
        raise AssertionError("model predicts classes no task owns")
    feats = test_data.feature_matrix()
    preds = predict_classes(model, feats, observed_labels)
    counts: dict[int, int] = {}
    for p in preds:
        t = owner[int(p)]
        counts[t] = counts.get(t, 0) + 1
    return BiasHistogram(counts)

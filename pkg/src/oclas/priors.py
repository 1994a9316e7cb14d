"""Time-varying class-prior estimation.

The sliding-window estimator tracks label frequencies over the last l input
batches. Random and macro estimators exist as ablation references. Labels
from the queried set that have zero observed mass are floored to a small
epsilon (the loss takes log priors, so exact zeros are not representable).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True)
class PriorVector:
    entries: dict[int, float]

    def __post_init__(self) -> None:
        if any(p <= 0.0 or p > 1.0 for p in self.entries.values()):
            raise ValueError("priors must lie in (0, 1]")

    def __getitem__(self, label: int) -> float:
        return self.entries[label]

    def __contains__(self, label: int) -> bool:
        return label in self.entries

    def as_array(self, labels) -> np.ndarray:
        """Priors aligned to the given label order; every label must be present."""
        missing = [l for l in labels if l not in self.entries]
        if missing:
            raise KeyError(f"no prior for labels {missing}")
        return np.array([self.entries[l] for l in labels], dtype=np.float64)

    @staticmethod
    def from_weights(weights: dict[int, float],
                     epsilon: float = DEFAULT_EPSILON) -> "PriorVector":
        """Normalize non-negative weights; zero weights are floored to epsilon.

        Renormalization happens only when a floor was applied, so exact
        rational frequencies stay exact.
        """
        if not weights:
            raise ValueError("empty weight map")
        if any(w < 0 for w in weights.values()):
            raise ValueError("negative weight")
        total = sum(weights.values())
        if total <= 0:
            raise ValueError("all weights are zero")
        probs = {l: w / total for l, w in weights.items()}
        if any(p == 0.0 for p in probs.values()):
            probs = {l: max(p, epsilon) for l, p in probs.items()}
            norm = sum(probs.values())
            probs = {l: p / norm for l, p in probs.items()}
        return PriorVector(probs)


class SlidingWindowEstimator:
    """Label frequencies over the last window_length input batches."""

    def __init__(self, window_length: int):
        if window_length < 1:
            raise ValueError("window_length must be >= 1")
        self.window_length = window_length
        self.recent: deque[tuple[dict[int, int], int]] = deque(maxlen=window_length)

    def observe_batch(self, labels) -> "SlidingWindowEstimator":
        counts: dict[int, int] = {}
        for l in labels:
            l = int(l)
            counts[l] = counts.get(l, 0) + 1
        self.recent.append((counts, len(labels)))  # deque evicts the oldest
        return self

    def window_counts(self) -> tuple[dict[int, int], int]:
        """Aggregated integer counts and total batch size over the window."""
        agg: dict[int, int] = {}
        total = 0
        for counts, size in self.recent:
            total += size
            for l, c in counts.items():
                agg[l] = agg.get(l, 0) + c
        return agg, total

    def priors(self, label_set, epsilon: float = DEFAULT_EPSILON) -> PriorVector:
        if not self.recent:
            raise ValueError("no batches observed yet")
        labels = set(label_set)
        if not labels:
            raise ValueError("empty label set")
        agg, total = self.window_counts()
        if total == 0:
            raise ValueError("window contains only empty batches")
        # Integer weights make the no-floor case an exact count/total division.
        weights = {l: agg.get(l, 0) for l in labels}
        return PriorVector.from_weights(weights, epsilon)


def random_priors(label_set, rng: np.random.Generator,
                  epsilon: float = DEFAULT_EPSILON) -> PriorVector:
    """Each prior drawn uniform on [0, 1], then normalized to sum 1."""
    labels = sorted(set(label_set))
    if not labels:
        raise ValueError("empty label set")
    while True:
        draws = rng.uniform(0.0, 1.0, size=len(labels))
        if draws.sum() > 0.0:
            break
    return PriorVector.from_weights(dict(zip(labels, draws)), epsilon)


def macro_priors(stream_class_counts: dict[int, int],
                 buffer_histogram: dict[int, int],
                 incoming_batch_size: int, buffer_batch_size: int,
                 epsilon: float = DEFAULT_EPSILON) -> PriorVector:
    """Expected label distribution of a concatenated incoming + buffer batch.

    The incoming share mixes the stream's label frequencies weighted by the
    incoming batch size; the buffer share does the same with the buffer
    histogram; shares are summed and normalized.
    """
    stream_total = sum(stream_class_counts.values())
    buffer_total = sum(buffer_histogram.values())
    if stream_total == 0 and buffer_total == 0:
        raise ValueError("all counts are zero")
    if incoming_batch_size < 0 or buffer_batch_size < 0:
        raise ValueError("batch sizes must be >= 0")
    mixed_total = incoming_batch_size + buffer_batch_size
    if mixed_total <= 0:
        raise ValueError("batch sizes sum to zero")
    weights: dict[int, float] = {}
    if stream_total > 0 and incoming_batch_size > 0:
        for l, c in stream_class_counts.items():
            weights[l] = weights.get(l, 0.0) + \
                (incoming_batch_size / mixed_total) * (c / stream_total)
    if buffer_total > 0 and buffer_batch_size > 0:
        for l, c in buffer_histogram.items():
            weights[l] = weights.get(l, 0.0) + \
                (buffer_batch_size / mixed_total) * (c / buffer_total)
    return PriorVector.from_weights(weights, epsilon)

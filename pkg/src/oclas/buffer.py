"""Capacity-bounded episodic memory with reservoir updates and uniform
random retrieval.

After n offers, every offered item is resident with probability
min(capacity, n) / n, the defining reservoir-sampling property.
"""

from __future__ import annotations

import numpy as np

from .data import LabeledExample


class MemoryBuffer:
    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.items: list[LabeledExample] = []
        self.seen_count = 0

    def __len__(self) -> int:
        return len(self.items)

    def reservoir_update(self, batch, rng: np.random.Generator) -> "MemoryBuffer":
        """Offer each example in batch order; stored items are deep copies."""
        for ex in batch:
            self.seen_count += 1
            if self.capacity == 0:
                continue
            if len(self.items) < self.capacity:
                self.items.append(ex.copy())
            else:
                slot = int(rng.integers(0, self.seen_count))
                if slot < self.capacity:
                    self.items[slot] = ex.copy()
        return self

    def random_retrieve(self, k: int, rng: np.random.Generator,
                        with_replacement: bool = False) -> list[LabeledExample]:
        """Sample stored items uniformly: min(k, len) without replacement,
        exactly k with replacement; empty when the buffer is."""
        n = len(self.items)
        if n == 0 or k <= 0:
            return []
        if with_replacement:
            picks = rng.integers(0, n, size=k)
        else:
            picks = rng.choice(n, size=min(k, n), replace=False)
        return [self.items[int(i)] for i in picks]

    def label_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for ex in self.items:
            hist[ex.label] = hist.get(ex.label, 0) + 1
        return hist

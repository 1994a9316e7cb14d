"""Non-stationary stream schedules: class-incremental, blurry, and
class-plus-domain task splits with one-pass batch emission.

A schedule is immutable once built; a cursor is the single mutable handle a
consumer advances. Every scheduled training example is emitted exactly once
over the full stream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, LabeledExample

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TaskDescriptor:
    task_id: int
    class_ids: tuple[int, ...]          # classes this task owns (disjoint or head)
    train_indices: tuple[int, ...]      # emission order within the task
    test_indices: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...] = ()  # (class, domain) pairs, class+domain mode


@dataclass
class TaskSchedule:
    mode: str                            # class_il | blurry | sum_class_domain
    tasks: list[TaskDescriptor]
    train_data: Dataset
    test_data: Dataset
    meta: dict = field(default_factory=dict)

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    @property
    def boundaries(self) -> list[int]:
        """Positions in the flattened example stream where each task starts."""
        out, pos = [], 0
        for task in self.tasks:
            out.append(pos)
            pos += len(task.train_indices)
        return out

    @property
    def test_partitions(self) -> list[tuple[int, ...]]:
        return [task.test_indices for task in self.tasks]

    @property
    def total_train_examples(self) -> int:
        return sum(len(t.train_indices) for t in self.tasks)

    def task_of_class(self) -> dict[int, int]:
        """Map each class id to the task that owns it."""
        owner: dict[int, int] = {}
        for task in self.tasks:
            for c in task.class_ids:
                owner.setdefault(c, task.task_id)
        return owner


@dataclass
class StreamBatch:
    examples: list[LabeledExample]
    step: int
    task_id: int
    is_task_boundary: bool

    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)


@dataclass
class StreamCursor:
    task_idx: int = 0
    offset: int = 0
    step: int = 1


def _label_index_map(dataset: Dataset) -> dict[int, list[int]]:
    by_label: dict[int, list[int]] = {}
    for i, ex in enumerate(dataset.examples):
        by_label.setdefault(ex.label, []).append(i)
    return by_label


def _check_single_pass(tasks: list[TaskDescriptor], n_train: int) -> None:
    flat = np.concatenate([np.array(t.train_indices, dtype=np.int64) for t in tasks]) \
        if tasks else np.array([], dtype=np.int64)
    if not np.array_equal(np.sort(flat), np.arange(n_train)):
        raise AssertionError("schedule is not a single pass over the training data")


def class_il_schedule(train: Dataset, test: Dataset, num_tasks: int,
                      class_order_seed: int, shuffle_seed: int) -> TaskSchedule:
    """Split classes into disjoint, evenly sized tasks.

    Classes are permuted by class_order_seed before partitioning; each task's
    pooled training examples are shuffled by shuffle_seed.
    """
    if num_tasks < 1:
        raise ValueError("num_tasks must be >= 1")
    if train.num_classes % num_tasks != 0:
        raise ValueError(
            f"{train.num_classes} classes not divisible into {num_tasks} tasks"
        )
    per_task = train.num_classes // num_tasks
    order = np.random.default_rng(class_order_seed).permutation(train.num_classes)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    train_by_label = _label_index_map(train)
    test_by_label = _label_index_map(test)

    tasks = []
    for t in range(num_tasks):
        class_ids = sorted(int(c) for c in order[t * per_task:(t + 1) * per_task])
        pool = np.array(
            [i for c in class_ids for i in train_by_label.get(c, [])], dtype=np.int64
        )
        pool = pool[shuffle_rng.permutation(len(pool))]
        test_idx = [i for c in class_ids for i in test_by_label.get(c, [])]
        tasks.append(TaskDescriptor(t, tuple(class_ids), tuple(int(i) for i in pool),
                                    tuple(test_idx)))
    _check_single_pass(tasks, len(train))
    return TaskSchedule("class_il", tasks, train, test,
                        meta={"num_tasks": num_tasks,
                              "class_order_seed": class_order_seed,
                              "shuffle_seed": shuffle_seed})


def blurry_schedule(train: Dataset, test: Dataset, num_tasks: int,
                    n_blurry_percent: float, m_blurry: int, seed: int) -> TaskSchedule:
    """Blurry split: a disjoint part plus recurring classes with rotating heads.

    n_blurry_percent of the classes form the disjoint part (spread over the
    tasks); the rest recur in every task. A recurring class is the head of
    exactly one task, where it contributes all samples not reserved for the
    other tasks; each other task draws m_blurry of its samples.
    """
    if not 0 <= n_blurry_percent <= 100:
        raise ValueError("n_blurry_percent must be in [0, 100]")
    if m_blurry < 0:
        raise ValueError("m_blurry must be >= 0")
    if num_tasks < 1:
        raise ValueError("num_tasks must be >= 1")
    rng = np.random.default_rng(seed)
    classes = list(rng.permutation(train.num_classes))
    n_disjoint = int(round(train.num_classes * n_blurry_percent / 100.0))
    disjoint_classes = [int(c) for c in classes[:n_disjoint]]
    blurry_classes = [int(c) for c in classes[n_disjoint:]]

    train_by_label = _label_index_map(train)
    test_by_label = _label_index_map(test)

    for c in blurry_classes:
        need = (num_tasks - 1) * m_blurry
        if len(train_by_label.get(c, [])) < need:
            raise ValueError(
                f"class {c} has {len(train_by_label.get(c, []))} training examples,"
                f" fewer than (T-1)*m_blurry = {need}"
            )

    disjoint_groups = [list(g) for g in np.array_split(np.array(disjoint_classes), num_tasks)]
    head_of_task: list[list[int]] = [[] for _ in range(num_tasks)]
    for i, c in enumerate(blurry_classes):
        head_of_task[i % num_tasks].append(c)

    # Per-class sample allocation: head task takes the bulk, the rest get m each.
    alloc: list[list[int]] = [[] for _ in range(num_tasks)]
    for t, group in enumerate(disjoint_groups):
        for c in group:
            alloc[t].extend(train_by_label.get(int(c), []))
    for t, heads in enumerate(head_of_task):
        for c in heads:
            idx = np.array(train_by_label[c], dtype=np.int64)
            idx = idx[rng.permutation(len(idx))]
            head_count = len(idx) - (num_tasks - 1) * m_blurry
            alloc[t].extend(int(i) for i in idx[:head_count])
            pos = head_count
            for other in range(num_tasks):
                if other == t:
                    continue
                alloc[other].extend(int(i) for i in idx[pos:pos + m_blurry])
                pos += m_blurry

    tasks = []
    for t in range(num_tasks):
        owned = sorted(int(c) for c in list(disjoint_groups[t]) + head_of_task[t])
        pool = np.array(alloc[t], dtype=np.int64)
        pool = pool[rng.permutation(len(pool))]
        test_idx = [i for c in owned for i in test_by_label.get(c, [])]
        tasks.append(TaskDescriptor(t, tuple(owned), tuple(int(i) for i in pool),
                                    tuple(test_idx)))
    _check_single_pass(tasks, len(train))
    return TaskSchedule("blurry", tasks, train, test,
                        meta={"num_tasks": num_tasks,
                              "n_blurry_percent": n_blurry_percent,
                              "m_blurry": m_blurry, "seed": seed})


def sum_class_domain_schedule(train: Dataset, test: Dataset, num_tasks: int,
                              seed: int) -> TaskSchedule:
    """Assign (superclass, domain) pairs to tasks; labels stay superclass ids.

    Each pair appears in exactly one task; the assignment is a seeded
    permutation of the pairs chunked evenly over the tasks.
    """
    if num_tasks < 1:
        raise ValueError("num_tasks must be >= 1")
    pairs = sorted({(ex.label, ex.domain_id) for ex in train.examples})
    if len(pairs) % num_tasks != 0:
        raise ValueError(
            f"{len(pairs)} (class, domain) pairs not divisible into {num_tasks} tasks"
        )
    per_task = len(pairs) // num_tasks
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))

    train_by_pair: dict[tuple[int, int], list[int]] = {}
    for i, ex in enumerate(train.examples):
        train_by_pair.setdefault((ex.label, ex.domain_id), []).append(i)
    test_by_pair: dict[tuple[int, int], list[int]] = {}
    for i, ex in enumerate(test.examples):
        test_by_pair.setdefault((ex.label, ex.domain_id), []).append(i)

    tasks = []
    for t in range(num_tasks):
        group = sorted(pairs[int(k)] for k in order[t * per_task:(t + 1) * per_task])
        pool = np.array([i for p in group for i in train_by_pair.get(p, [])],
                        dtype=np.int64)
        pool = pool[rng.permutation(len(pool))]
        test_idx = [i for p in group for i in test_by_pair.get(p, [])]
        class_ids = sorted({p[0] for p in group})
        tasks.append(TaskDescriptor(t, tuple(class_ids), tuple(int(i) for i in pool),
                                    tuple(test_idx), pairs=tuple(group)))
    _check_single_pass(tasks, len(train))
    return TaskSchedule("sum_class_domain", tasks, train, test,
                        meta={"num_tasks": num_tasks, "seed": seed})


def next_batch(schedule: TaskSchedule, cursor: StreamCursor,
               batch_size: int) -> StreamBatch | None:
    """Emit the next batch, or None at end of stream.

    The final batch of a task may be short; batches never straddle tasks.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    while cursor.task_idx < schedule.num_tasks and \
            cursor.offset >= len(schedule.tasks[cursor.task_idx].train_indices):
        cursor.task_idx += 1
        cursor.offset = 0
    if cursor.task_idx >= schedule.num_tasks:
        return None
    task = schedule.tasks[cursor.task_idx]
    is_boundary = cursor.offset == 0
    take = min(batch_size, len(task.train_indices) - cursor.offset)
    indices = task.train_indices[cursor.offset:cursor.offset + take]
    examples = [schedule.train_data.examples[i] for i in indices]
    batch = StreamBatch(examples, cursor.step, task.task_id, is_boundary)
    cursor.offset += take
    cursor.step += 1
    if cursor.offset >= len(task.train_indices):
        cursor.task_idx += 1
        cursor.offset = 0
    return batch


def stream_batches(schedule: TaskSchedule, batch_size: int):
    """Iterate the full one-pass batch stream."""
    cursor = StreamCursor()
    while True:
        batch = next_batch(schedule, cursor, batch_size)
        if batch is None:
            return
        yield batch


def schedule_manifest(schedule: TaskSchedule) -> dict:
    """JSON-serializable audit record of the schedule."""
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": schedule.mode,
        "num_tasks": schedule.num_tasks,
        "meta": schedule.meta,
        "boundaries": schedule.boundaries,
        "tasks": [
            {
                "task_id": t.task_id,
                "class_ids": list(t.class_ids),
                "pairs": [list(p) for p in t.pairs],
                "train_indices": list(t.train_indices),
                "test_indices": list(t.test_indices),
            }
            for t in schedule.tasks
        ],
    }


def manifest_json(schedule: TaskSchedule) -> str:
    return json.dumps(schedule_manifest(schedule), sort_keys=True,
                      separators=(",", ":"))


def manifest_sha256(schedule: TaskSchedule) -> str:
    return hashlib.sha256(manifest_json(schedule).encode()).hexdigest()

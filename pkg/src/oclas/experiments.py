"""Seeded multi-run experiments: flat-key config files, per-seed run records,
and a deterministic aggregate table.

Config files are `key = value` lines with dotted section keys; `#` starts a
comment. Command-line overrides (`key=value`) win over file values. Every
run record embeds the fully resolved config so a result can be reproduced
from the record alone.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import stream as stream_mod
from .data import (Dataset, load_idx, synthetic_gaussians,
                   synthetic_superclass_domains, write_idx)
from .metrics import final_averages, auc_accuracy, prediction_bias_histogram
from .training import (ALGORITHMS, ESTIMATORS, TrainerConfig, run,
                       seed_streams, stream_seed_int)

SCHEMA_VERSION = 1

DATA_SOURCES = ("gaussians", "domains", "idx")
STREAM_SETUPS = ("class_il", "blurry", "sum_class_domain")


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str) -> list[int]:
    return [int(tok) for tok in str(raw).replace(",", " ").split()]


# key -> (parser, default); None default means the key is required when used.
_SCHEMA: dict[str, tuple] = {
    "data.source": (str, None),
    "data.seed": (int, 1234),
    "data.classes": (int, 10),
    "data.feature_dim": (int, 32),
    "data.train_per_class": (int, 500),
    "data.test_per_class": (int, 100),
    "data.stddev": (float, 1.0),
    "data.mean_scale": (float, 3.0),
    "data.superclasses": (int, 20),
    "data.domains_per_class": (int, 5),
    "data.train_per_domain": (int, 50),
    "data.test_per_domain": (int, 20),
    "data.domain_shift": (float, 2.0),
    "data.train_images": (str, ""),
    "data.train_labels": (str, ""),
    "data.test_images": (str, ""),
    "data.test_labels": (str, ""),
    "stream.setup": (str, None),
    "stream.tasks": (int, 5),
    "stream.blurry_disjoint_percent": (float, 50.0),
    "stream.blurry_m": (int, 10),
    "trainer.algorithm": (str, None),
    "trainer.learning_rate": (float, 0.03),
    "trainer.incoming_batch_size": (int, 32),
    "trainer.buffer_batch_size": (int, 32),
    "trainer.memory_capacity": (int, 500),
    "trainer.tau": (float, 1.0),
    "trainer.window_length": (int, 1),
    "trainer.epsilon_floor": (float, 1e-8),
    "trainer.kd_temperature": (float, 2.0),
    "trainer.kd_weight": (float, 1.0),
    "trainer.hidden_sizes": (_parse_int_list, [400, 400]),
    "trainer.estimator": (str, "sliding"),
    "trainer.probe_interval": (int, 0),
    "trainer.probe_subset_size": (int, 1000),
    "trainer.retrieval_with_replacement": (_parse_bool, False),
    "seeds": (_parse_int_list, None),
    "out": (str, ""),
    "report.bias_histogram": (_parse_bool, True),
    "report.prior_trace": (_parse_bool, False),
    "report.dump_buffer": (_parse_bool, False),
    "report.schedule_manifest": (_parse_bool, False),
}

_REQUIRED = ("data.source", "stream.setup", "trainer.algorithm", "seeds")


@dataclass
class ExperimentConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def flat(self) -> dict:
        """Canonical dotted-key mapping for embedding in run records."""
        out = {}
        for key in sorted(self.values):
            v = self.values[key]
            out[key] = list(v) if isinstance(v, (list, tuple)) else v
        return out


def parse_config_text(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def load_config_file(path: str) -> dict[str, str]:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: JSON config must be an object")
        return {str(k): v for k, v in data.items()}
    return parse_config_text(text)


def _coerce(parser, raw):
    """Apply a schema parser to either a raw string or an already-typed value."""
    if parser is _parse_bool:
        return raw if isinstance(raw, bool) else _parse_bool(str(raw))
    if parser is _parse_int_list:
        if isinstance(raw, (list, tuple)):
            return [int(x) for x in raw]
        return _parse_int_list(str(raw))
    return parser(raw)


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Validate a raw mapping against the schema; unknown keys fail fast."""
    values: dict = {}
    for key, raw in mapping.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            values[key] = _coerce(parser, raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    for key, (parser, default) in _SCHEMA.items():
        if key not in values and default is not None:
            values[key] = default
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required config key {key!r}")

    if values["data.source"] not in DATA_SOURCES:
        raise ConfigError(
            f"config key 'data.source': unknown source {values['data.source']!r};"
            f" expected one of {DATA_SOURCES}")
    if values["stream.setup"] not in STREAM_SETUPS:
        raise ConfigError(
            f"config key 'stream.setup': unknown setup {values['stream.setup']!r};"
            f" expected one of {STREAM_SETUPS}")
    if values["trainer.algorithm"] not in ALGORITHMS:
        raise ConfigError(
            f"config key 'trainer.algorithm': unknown algorithm"
            f" {values['trainer.algorithm']!r}; expected one of {ALGORITHMS}")
    if values["trainer.estimator"] not in ESTIMATORS:
        raise ConfigError(
            f"config key 'trainer.estimator': unknown estimator"
            f" {values['trainer.estimator']!r}; expected one of {ESTIMATORS}")
    if not values["seeds"]:
        raise ConfigError("config key 'seeds': at least one seed required")
    if values["data.source"] == "idx":
        for key in ("data.train_images", "data.train_labels",
                    "data.test_images", "data.test_labels"):
            if not values.get(key):
                raise ConfigError(f"idx source requires config key {key!r}")
            if not Path(values[key]).exists():
                raise ConfigError(f"config key {key!r}: no such file"
                                  f" {values[key]!r}")
    return ExperimentConfig(values)


def gaussian_benchmark(num_classes: int, feature_dim: int, train_per_class: int,
                       test_per_class: int, stddev: float, mean_scale: float,
                       seed: int) -> tuple[Dataset, Dataset]:
    """Matched train/test Gaussian-blob datasets with shared class means."""
    means_ss, train_ss, test_ss = np.random.SeedSequence(seed).spawn(3)
    means_rng = np.random.default_rng(means_ss)
    means = means_rng.normal(0.0, 1.0, size=(num_classes, feature_dim))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    means = means / norms * mean_scale
    train = synthetic_gaussians(means, stddev, [train_per_class] * num_classes,
                                stream_seed_int(train_ss), split="train")
    test = synthetic_gaussians(means, stddev, [test_per_class] * num_classes,
                               stream_seed_int(test_ss), split="test")
    return train, test


def superclass_domain_benchmark(num_superclasses: int, domains_per_class: int,
                                train_per_domain: int, test_per_domain: int,
                                feature_dim: int, domain_shift: float,
                                seed: int) -> tuple[Dataset, Dataset]:
    """One generator call per split boundary: the first train_per_domain
    samples of each (class, domain) block become training data."""
    total = train_per_domain + test_per_domain
    full = synthetic_superclass_domains(num_superclasses, domains_per_class,
                                        total, feature_dim, domain_shift, seed)
    train_examples, test_examples = [], []
    for block in range(num_superclasses * domains_per_class):
        start = block * total
        train_examples.extend(full.examples[start:start + train_per_domain])
        test_examples.extend(full.examples[start + train_per_domain:start + total])
    train = Dataset(train_examples, num_superclasses, feature_dim, "train")
    test = Dataset(test_examples, num_superclasses, feature_dim, "test")
    return train, test


def build_datasets(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    source = config["data.source"]
    if source == "gaussians":
        return gaussian_benchmark(
            config["data.classes"], config["data.feature_dim"],
            config["data.train_per_class"], config["data.test_per_class"],
            config["data.stddev"], config["data.mean_scale"],
            config["data.seed"])
    if source == "domains":
        return superclass_domain_benchmark(
            config["data.superclasses"], config["data.domains_per_class"],
            config["data.train_per_domain"], config["data.test_per_domain"],
            config["data.feature_dim"], config["data.domain_shift"],
            config["data.seed"])
    train = load_idx(config["data.train_images"], config["data.train_labels"],
                     split="train")
    test = load_idx(config["data.test_images"], config["data.test_labels"],
                    split="test")
    return train, test


def build_schedule(config: ExperimentConfig, train: Dataset, test: Dataset,
                   master_seed: int) -> stream_mod.TaskSchedule:
    streams = seed_streams(master_seed)
    order_seed = stream_seed_int(streams["schedule_class_order"])
    shuffle_seed = stream_seed_int(streams["schedule_shuffle"])
    setup = config["stream.setup"]
    if setup == "class_il":
        return stream_mod.class_il_schedule(train, test, config["stream.tasks"],
                                            order_seed, shuffle_seed)
    if setup == "blurry":
        return stream_mod.blurry_schedule(train, test, config["stream.tasks"],
                                          config["stream.blurry_disjoint_percent"],
                                          config["stream.blurry_m"], order_seed)
    return stream_mod.sum_class_domain_schedule(train, test,
                                                config["stream.tasks"], order_seed)


def trainer_config(config: ExperimentConfig, master_seed: int) -> TrainerConfig:
    return TrainerConfig(
        algorithm=config["trainer.algorithm"],
        learning_rate=config["trainer.learning_rate"],
        incoming_batch_size=config["trainer.incoming_batch_size"],
        buffer_batch_size=config["trainer.buffer_batch_size"],
        memory_capacity=config["trainer.memory_capacity"],
        tau=config["trainer.tau"],
        window_length=config["trainer.window_length"],
        epsilon_floor=config["trainer.epsilon_floor"],
        kd_temperature=config["trainer.kd_temperature"],
        kd_weight=config["trainer.kd_weight"],
        master_seed=master_seed,
        hidden_sizes=tuple(config["trainer.hidden_sizes"]),
        estimator=config["trainer.estimator"],
        probe_interval=config["trainer.probe_interval"],
        probe_subset_size=config["trainer.probe_subset_size"],
        retrieval_with_replacement=config["trainer.retrieval_with_replacement"],
        record_prior_trace=config["report.prior_trace"],
    )


def run_single(flat_config: dict, seed: int) -> dict:
    """Execute one seeded run and return its record (no file I/O)."""
    config = config_from_mapping(flat_config)
    train, test = build_datasets(config)
    schedule = build_schedule(config, train, test, seed)
    tconf = trainer_config(config, seed)
    result = run(schedule, tconf)

    a_t, a_t_cbl, f_t = final_averages(result.matrix)
    record = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "config": config.flat(),
        "manifest_sha256": result.manifest_sha256,
        "observed_labels": result.observed_labels,
        "accuracy_matrix": result.matrix.rows,
        "cbl_matrix": result.matrix.cbl_rows,
        "metrics": {"a_t": a_t, "a_t_cbl": a_t_cbl, "f_t": f_t},
        "trace": [[step, acc] for step, acc in result.trace],
        "total_steps": result.total_steps,
        "teacher_snapshots": result.teacher_snapshots,
        "wall_clock_s": result.wall_clock_s,
    }
    if result.trace and tconf.probe_interval:
        record["metrics"]["a_auc"] = auc_accuracy(result.trace,
                                                  tconf.probe_interval,
                                                  result.total_steps)
    if config["report.bias_histogram"] and \
            set(result.observed_labels) >= {ex.label for ex in test.examples}:
        hist = prediction_bias_histogram(result.model, test, schedule,
                                         result.observed_labels)
        record["bias_histogram"] = {str(k): v for k, v in sorted(hist.counts.items())}
        last_task = schedule.num_tasks - 1
        record["metrics"]["last_task_share"] = hist.share(last_task)

    sides: dict = {}
    if config["report.schedule_manifest"]:
        sides["schedule_manifest"] = stream_mod.schedule_manifest(schedule)
    if config["report.prior_trace"]:
        sides["prior_trace"] = [[step, label, p]
                                for step, label, p in result.prior_trace]
    if config["report.dump_buffer"] and len(result.buffer):
        sides["buffer_features"] = [ex.features.tolist()
                                    for ex in result.buffer.items]
        sides["buffer_labels"] = [ex.label for ex in result.buffer.items]
        sides["buffer_image_shape"] = list(train.image_shape) \
            if train.image_shape else None
    if sides:
        record["_sides"] = sides
    return record


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mean, std


def aggregate_records(records: list[dict]) -> dict:
    """Mean and sample standard deviation per metric across seeds."""
    metrics: dict[str, dict] = {}
    names = sorted({name for rec in records
                    for name, v in rec["metrics"].items() if v is not None})
    for name in names:
        per_seed = [rec["metrics"][name] for rec in records
                    if rec["metrics"].get(name) is not None]
        mean, std = _mean_std(per_seed)
        metrics[name] = {"mean": mean, "std": std, "per_seed": per_seed}
    return metrics


def run_experiment(config: ExperimentConfig, out_dir: str,
                   jobs: int = 1) -> dict:
    """Run every seed, write one record per seed plus the aggregate files.

    Returns the aggregate mapping. Output files: run_seed<N>.json,
    aggregate.json, aggregate.csv, and optional per-seed CSV/IDX side files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(config["seeds"])
    flat = config.flat()

    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_single, [flat] * len(seeds), seeds))
    else:
        records = [run_single(flat, seed) for seed in seeds]

    created_at = datetime.now(timezone.utc).isoformat()
    for record in records:
        sides = record.pop("_sides", {})
        seed = record["seed"]
        if "schedule_manifest" in sides:
            (out / f"schedule_manifest_seed{seed}.json").write_text(
                json.dumps(sides["schedule_manifest"], sort_keys=True,
                           separators=(",", ":")))
        if "prior_trace" in sides:
            _write_prior_trace_csv(out / f"prior_trace_seed{seed}.csv",
                                   sides["prior_trace"])
        if "buffer_features" in sides:
            shape = sides["buffer_image_shape"]
            write_idx(np.asarray(sides["buffer_features"], dtype=np.float64),
                      np.asarray(sides["buffer_labels"], dtype=np.int64),
                      str(out / f"buffer_seed{seed}-images.idx"),
                      str(out / f"buffer_seed{seed}-labels.idx"),
                      tuple(shape) if shape else None)
        record["created_at"] = created_at
        path = out / f"run_seed{seed}.json"
        path.write_text(json.dumps(record, sort_keys=True, indent=1))
        if record.get("bias_histogram") is not None:
            _write_bias_csv(out / f"bias_histogram_seed{seed}.csv", record)

    metrics = aggregate_records(records)
    aggregate = {
        "schema_version": SCHEMA_VERSION,
        "created_at": created_at,
        "config": flat,
        "seeds": seeds,
        "metrics": metrics,
    }
    (out / "aggregate.json").write_text(json.dumps(aggregate, sort_keys=True,
                                                   indent=1))
    with open(out / "aggregate.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "mean", "std", "n_seeds"])
        for name in sorted(metrics):
            writer.writerow([name, repr(metrics[name]["mean"]),
                             repr(metrics[name]["std"]),
                             len(metrics[name]["per_seed"])])
    return aggregate


def _write_bias_csv(path: Path, record: dict) -> None:
    counts = record["bias_histogram"]
    total = sum(counts.values())
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["task_id", "count", "share"])
        for task_id in sorted(counts, key=int):
            writer.writerow([task_id, counts[task_id],
                             repr(counts[task_id] / total if total else 0.0)])


def _write_prior_trace_csv(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "label", "prior"])
        for step, label, prior in rows:
            writer.writerow([step, label, repr(prior)])


def default_output_root() -> str:
    return os.environ.get("OCLAS_RESULTS_ROOT", "results")

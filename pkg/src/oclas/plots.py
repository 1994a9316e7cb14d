"""Report rendering: SVG figures plus the matching CSV tables.

SVG output is byte-deterministic for fixed inputs: the hash salt and font
handling are pinned and the date metadata is stripped.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "svg.hashsalt": "oclas",
    "svg.fonttype": "none",
    "figure.figsize": (7.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def load_bundle(bundle_dir: str) -> dict:
    """Read every run record plus the aggregate from a results directory."""
    bundle = Path(bundle_dir)
    records = []
    for path in sorted(bundle.glob("run_seed*.json")):
        records.append(json.loads(path.read_text()))
    if not records:
        raise FileNotFoundError(f"no run records found in {bundle_dir}")
    aggregate = None
    agg_path = bundle / "aggregate.json"
    if agg_path.exists():
        aggregate = json.loads(agg_path.read_text())
    return {"name": bundle.name, "records": records, "aggregate": aggregate}


def plot_bias_histogram(bundles: list[dict], out_dir: Path) -> list[Path]:
    """Grouped bars of prediction share per task with the uniform line."""
    rows = []
    series = {}
    num_tasks = 0
    for bundle in bundles:
        shares_per_task: dict[int, list[float]] = {}
        for record in bundle["records"]:
            hist = record.get("bias_histogram")
            if not hist:
                continue
            total = sum(hist.values())
            for task_str, count in hist.items():
                task = int(task_str)
                share = count / total if total else 0.0
                shares_per_task.setdefault(task, []).append(share)
                rows.append([bundle["name"], record["seed"], task, count,
                             repr(share)])
        if shares_per_task:
            tasks = sorted(shares_per_task)
            num_tasks = max(num_tasks, max(tasks) + 1)
            series[bundle["name"]] = [
                float(sum(shares_per_task.get(t, [0.0])) /
                      max(len(shares_per_task.get(t, [0.0])), 1))
                for t in range(max(tasks) + 1)
            ]
    if not series:
        print("warning: no bias histograms in the given bundles; skipping",
              file=sys.stderr)
        return []

    written = []
    csv_path = out_dir / "bias_histogram.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bundle", "seed", "task_id", "count", "share"])
        writer.writerows(rows)
    written.append(csv_path)

    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        width = 0.8 / len(series)
        for k, (name, shares) in enumerate(sorted(series.items())):
            xs = [t + k * width for t in range(num_tasks)]
            vals = shares + [0.0] * (num_tasks - len(shares))
            ax.bar(xs, vals, width=width, label=name)
        ax.axhline(1.0 / num_tasks, linestyle="--", color="black",
                   label="uniform")
        ax.set_xticks([t + 0.4 - width / 2 for t in range(num_tasks)])
        ax.set_xticklabels([str(t) for t in range(num_tasks)])
        ax.set_xlabel("task owning the predicted class")
        ax.set_ylabel("share of test predictions")
        ax.legend()
        svg_path = out_dir / "bias_histogram.svg"
        _save_svg(fig, svg_path)
    written.append(svg_path)
    return written


def plot_accuracy_curves(bundles: list[dict], out_dir: Path) -> list[Path]:
    """Mean accuracy-versus-step curve per bundle; overlays compare bundles."""
    rows = []
    series = {}
    for bundle in bundles:
        traces = [rec.get("trace") or [] for rec in bundle["records"]]
        traces = [t for t in traces if t]
        for rec in bundle["records"]:
            for step, acc in rec.get("trace") or []:
                rows.append([bundle["name"], rec["seed"], step, repr(acc)])
        if not traces:
            continue
        by_step: dict[int, list[float]] = {}
        for trace in traces:
            for step, acc in trace:
                by_step.setdefault(step, []).append(acc)
        steps = sorted(by_step)
        series[bundle["name"]] = (steps,
                                  [sum(by_step[s]) / len(by_step[s])
                                   for s in steps])
    if not series:
        print("warning: no accuracy traces in the given bundles;"
              " skipping curve plot", file=sys.stderr)
        return []

    written = []
    csv_path = out_dir / "accuracy_curve.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bundle", "seed", "step", "accuracy"])
        writer.writerows(rows)
    written.append(csv_path)

    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, (steps, accs) in sorted(series.items()):
            ax.plot(steps, accs, label=name)
        ax.set_xlabel("training step")
        ax.set_ylabel("accuracy on seen-class test subset")
        ax.set_ylim(0.0, 1.0)
        ax.legend()
        svg_path = out_dir / "accuracy_curve.svg"
        _save_svg(fig, svg_path)
    written.append(svg_path)
    return written


def emit_plots(bundle_dirs: list[str], out_dir: str) -> list[Path]:
    """Render every report figure for one or more result bundles."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundles = [load_bundle(d) for d in bundle_dirs]
    written = []
    written.extend(plot_bias_histogram(bundles, out))
    written.extend(plot_accuracy_curves(bundles, out))
    return written

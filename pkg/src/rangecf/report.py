"""Figure rendering for benchmark output: bar charts of per-method scores
and the inconsistency-vs-noise curve, written as PNG files next to the CSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_METHOD_ORDER = ("minsat", "gs", "plaincf")


def _entries(summary: dict, setting: str) -> list[dict]:
    return [g for g in summary["groups"] if g["setting"] == setting]


def _ordered_methods(entries: list[dict]) -> list[str]:
    present = {g["method"] for g in entries}
    ordered = [m for m in _METHOD_ORDER if m in present]
    return ordered + sorted(present - set(ordered))


def render_retrain_figure(summary: dict, path: str | Path) -> bool:
    entries = _entries(summary, "retrain")
    if not entries:
        return False
    methods = _ordered_methods(entries)
    values = []
    for m in methods:
        match = [g["mean_inconsistency"] for g in entries if g["method"] == m]
        values.append(match[0] if match and match[0] is not None else 0.0)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(methods, values, color="#4878d0")
    ax.set_ylabel("mean inconsistency")
    ax.set_title("Model retraining")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def render_perturbation_figure(summary: dict, path: str | Path) -> bool:
    entries = _entries(summary, "perturb")
    if not entries:
        return False
    methods = _ordered_methods(entries)
    sigmas = sorted({g["sigma"] for g in entries})
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for m in methods:
        ys = []
        for s in sigmas:
            match = [g["mean_inconsistency"] for g in entries if g["method"] == m and g["sigma"] == s]
            ys.append(match[0] if match and match[0] is not None else float("nan"))
        ax.plot(sigmas, ys, marker="o", label=m)
    ax.set_xscale("log")
    ax.set_xlabel("noise standard deviation")
    ax.set_ylabel("mean inconsistency")
    ax.set_title("Input perturbation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def render_quality_figure(summary: dict, path: str | Path) -> bool:
    entries = _entries(summary, "retrain") or _entries(summary, "perturb")
    if not entries:
        return False
    methods = _ordered_methods(entries)
    metrics = ("sparsity", "aps", "diversity", "count_diversity")
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.0 * len(metrics), 3.0))
    for ax, metric in zip(axes, metrics):
        values = []
        for m in methods:
            match = [g.get(f"mean_{metric}") for g in entries if g["method"] == m]
            values.append(match[0] if match and match[0] is not None else 0.0)
        ax.bar(methods, values, color="#6acc64")
        ax.set_title(metric)
        ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def render_all(summary: dict, outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    targets = [
        (render_retrain_figure, outdir / "inconsistency_retrain.png"),
        (render_perturbation_figure, outdir / "inconsistency_perturbation.png"),
        (render_quality_figure, outdir / "quality_metrics.png"),
    ]
    for renderer, path in targets:
        if renderer(summary, path):
            written.append(path)
    return written

"""Matplotlib figures rendered next to reports and loss logs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

LEVELS = ("tagging", "frame", "event", "tf")
LEVEL_TITLES = {
    "tagging": "Audio tagging",
    "frame": "Frame-wise detection",
    "event": "Event-wise detection",
    "tf": "T-F segmentation",
}


def save_loss_curve(losses: list, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(losses)), losses, marker="o", markersize=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.set_title("Training loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_per_class_f1(report: dict, path) -> None:
    labels = sorted(report["tagging"]["per_class"])
    x = np.arange(len(labels))
    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    for ax, level in zip(axes.ravel(), LEVELS):
        values = [report[level]["per_class"][label]["f1"] for label in labels]
        ax.bar(x, values, color="#4878a8")
        ax.set_title(LEVEL_TITLES[level])
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("F1")
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=45, ha="right")
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle(f"Per-class F1, fold {report['fold']}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_macro_summary(report: dict, path) -> None:
    names = []
    values = []
    for level in LEVELS:
        macro = report[level]["macro"]
        names.append(f"{level}\nF1")
        values.append(macro["f1"])
        if macro.get("auc") is not None:
            names.append(f"{level}\nAUC")
            values.append(macro["auc"])
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.bar(np.arange(len(values)), values, color="#70ad70")
    ax.set_xticks(np.arange(len(values)))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_title(f"Macro metrics, fold {report['fold']}")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_report_figures(report: dict, report_path) -> list:
    """Render the standard figures next to a report file; returns the paths."""
    from pathlib import Path

    report_path = Path(report_path)
    stem = report_path.with_suffix("")
    per_class = Path(f"{stem}_per_class_f1.png")
    macro = Path(f"{stem}_macro.png")
    save_per_class_f1(report, per_class)
    save_macro_summary(report, macro)
    return [per_class, macro]

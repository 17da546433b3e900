"""Report rendering: figures and delimited summaries next to JSON artifacts.

Every CLI report path writes three layers into its output directory:
the raw JSON artifact, a flat CSV for spreadsheets, and matplotlib PNGs
for a quick visual read. Figures here are plain summary charts; embedding
projections stay out of scope (export-embeddings feeds external tools).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def _write_json(data: dict, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False), encoding="utf-8")


def _write_csv(rows: list[dict], path: Path) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    fieldnames = list(rows[0].keys())
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def classifier_report(metrics: dict, outdir: str | Path) -> list[Path]:
    """Render classifier evaluation: metrics CSV, confusion matrix figure."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [outdir / "classifier_metrics.json"]
    _write_json(metrics, written[0])

    rows = [
        {"metric": name, "value": metrics[name]}
        for name in ("accuracy", "f1_acceptable", "f1_unacceptable", "macro_f1")
        if name in metrics
    ]
    csv_path = outdir / "classifier_metrics.csv"
    _write_csv(rows, csv_path)
    written.append(csv_path)

    confusion = metrics.get("confusion")
    if confusion:
        grid = [
            [confusion["tp"], confusion["fn"]],
            [confusion["fp"], confusion["tn"]],
        ]
        fig, ax = plt.subplots(figsize=(4, 4))
        im = ax.imshow(grid, cmap="Blues")
        ax.set_xticks([0, 1], labels=["pred Acceptable", "pred Unacceptable"])
        ax.set_yticks([0, 1], labels=["true Acceptable", "true Unacceptable"])
        for i in range(2):
            for j in range(2):
                ax.text(j, i, str(grid[i][j]), ha="center", va="center")
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title("Confusion matrix")
        fig.tight_layout()
        figure_path = outdir / "confusion_matrix.png"
        fig.savefig(figure_path, dpi=120)
        plt.close(fig)
        written.append(figure_path)
    return written


def retrieval_report(result: dict, outdir: str | Path) -> list[Path]:
    """Render retrieval evaluation: accuracy CSV and top-k bar chart."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [outdir / "retrieval_metrics.json"]
    _write_json(result, written[0])

    topk = result.get("top_k_accuracy", {})
    rows = [{"k": k, "accuracy": v} for k, v in sorted(topk.items(), key=lambda i: int(i[0]))]
    rows.append({"k": "provision", "accuracy": result.get("provision_accuracy")})
    csv_path = outdir / "retrieval_metrics.csv"
    _write_csv(rows, csv_path)
    written.append(csv_path)

    if topk:
        ks = sorted(topk, key=int)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.bar([f"top-{k}" for k in ks], [topk[k] for k in ks], color="#4878a8")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("accuracy")
        ax.set_title("Retrieval accuracy")
        fig.tight_layout()
        figure_path = outdir / "retrieval_accuracy.png"
        fig.savefig(figure_path, dpi=120)
        plt.close(fig)
        written.append(figure_path)
    return written


def optimization_report(report: dict, outdir: str | Path) -> list[Path]:
    """Render a batch optimization run: rewards CSV, reward/success figures."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [outdir / "optimization_report.json"]
    _write_json(report, written[0])

    rows = []
    for result in report.get("results", []):
        for index, candidate in enumerate(result["candidates"]):
            rows.append(
                {
                    "revision_id": result["source_revision_id"],
                    "candidate": index,
                    "reward": candidate["reward"],
                    "chosen": index == result["chosen_index"],
                }
            )
    csv_path = outdir / "optimization_rewards.csv"
    _write_csv(rows, csv_path)
    written.append(csv_path)

    if rows:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        labels = sorted({r["revision_id"] for r in rows})
        position = {rid: i for i, rid in enumerate(labels)}
        xs = [position[r["revision_id"]] for r in rows]
        ys = [r["reward"] for r in rows]
        chosen = [r["chosen"] for r in rows]
        ax.scatter(
            [x for x, c in zip(xs, chosen) if not c],
            [y for y, c in zip(ys, chosen) if not c],
            color="#aaaaaa", label="candidate", s=24,
        )
        ax.scatter(
            [x for x, c in zip(xs, chosen) if c],
            [y for y, c in zip(ys, chosen) if c],
            color="#2a9d2a", label="chosen", s=36,
        )
        ax.set_xticks(range(len(labels)), labels=labels, rotation=30, ha="right", fontsize=7)
        ax.set_ylabel("acceptability reward")
        ax.set_ylim(0, 1.05)
        ax.legend(loc="lower right", fontsize=8)
        ax.set_title("Best-of-N candidate rewards")
        fig.tight_layout()
        figure_path = outdir / "candidate_rewards.png"
        fig.savefig(figure_path, dpi=120)
        plt.close(fig)
        written.append(figure_path)

    before = report.get("success_rate_before")
    after = report.get("success_rate_after")
    if before is not None or after is not None:
        fig, ax = plt.subplots(figsize=(3.5, 3.5))
        ax.bar(
            ["before", "after"],
            [before if before is not None else 0.0, after if after is not None else 0.0],
            color=["#c65353", "#2a9d2a"],
        )
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("fraction classified acceptable")
        ax.set_title("Optimization success rate")
        fig.tight_layout()
        figure_path = outdir / "success_rate.png"
        fig.savefig(figure_path, dpi=120)
        plt.close(fig)
        written.append(figure_path)
    return written


def fid_report(result: dict, outdir: str | Path) -> list[Path]:
    """Render a FID comparison as JSON + CSV."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [outdir / "fid.json"]
    _write_json(result, written[0])
    csv_path = outdir / "fid.csv"
    _write_csv([{"metric": "fid", "value": result.get("fid")}], csv_path)
    written.append(csv_path)
    return written


def flags_report(flags: list[dict], outdir: str | Path) -> list[Path]:
    """Render the flag queue: CSV plus a probability histogram."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [outdir / "flags.json"]
    _write_json({"flags": flags}, written[0])
    csv_path = outdir / "flags.csv"
    _write_csv(flags, csv_path)
    written.append(csv_path)

    if flags:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.hist(
            [f["probability_acceptable"] for f in flags],
            bins=20, range=(0.0, 1.0), color="#4878a8",
        )
        ax.axvline(0.5, color="#c65353", linestyle="--", linewidth=1)
        ax.set_xlabel("probability acceptable")
        ax.set_ylabel("flag count")
        ax.set_title("Flagged revision probabilities")
        fig.tight_layout()
        figure_path = outdir / "flag_probabilities.png"
        fig.savefig(figure_path, dpi=120)
        plt.close(fig)
        written.append(figure_path)
    return written

"""Evaluation report artifacts: report.json, a flattened report.csv, and
summary figures rendered to PNG files alongside them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .core import atomic_write_bytes, atomic_write_text  # noqa: E402
from .evaluate import DecisionRule, McNemarResult  # noqa: E402
from .keyframes import KeyFrameSet  # noqa: E402


@dataclass(frozen=True)
class MethodReport:
    method: str
    image_accuracy: float
    video_accuracy: dict[str, float]  # keyed by DecisionRule value: t60/t80/vote
    keyframe_count: int


@dataclass(frozen=True)
class EvaluationReport:
    dataset_id: str
    per_method: dict[str, MethodReport]
    mcnemar: tuple[McNemarResult, ...]

    def to_json(self) -> str:
        data = {
            "dataset_id": self.dataset_id,
            "per_method": {
                name: {
                    "image_accuracy": rep.image_accuracy,
                    "video_accuracy": rep.video_accuracy,
                    "keyframe_count": rep.keyframe_count,
                } for name, rep in sorted(self.per_method.items())
            },
            "mcnemar": [{
                "a": r.method_a,
                "b": r.method_b,
                "p": r.p_value,
                "alpha_adj": r.alpha_adjusted,
                "significant": r.significant,
            } for r in self.mcnemar],
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "EvaluationReport":
        data = json.loads(text)
        per_method = {
            name: MethodReport(method=name,
                               image_accuracy=rep["image_accuracy"],
                               video_accuracy=dict(rep["video_accuracy"]),
                               keyframe_count=rep["keyframe_count"])
            for name, rep in data["per_method"].items()
        }
        # report.json does not carry the discordant counts, only the p-values.
        mcnemar = tuple(McNemarResult(
            method_a=r["a"], method_b=r["b"], n_discordant_ab=None, n_discordant_ba=None,
            p_value=r["p"], alpha_adjusted=r["alpha_adj"], significant=r["significant"],
        ) for r in data["mcnemar"])
        return EvaluationReport(dataset_id=data["dataset_id"],
                                per_method=per_method, mcnemar=mcnemar)


REPORT_CSV_HEADER = ["dataset_id", "method", "image_accuracy",
                     "video_accuracy_t60", "video_accuracy_t80",
                     "video_accuracy_vote", "keyframe_count"]


def report_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_CSV_HEADER)
    for name in sorted(report.per_method):
        rep = report.per_method[name]
        writer.writerow([
            report.dataset_id, name, repr(rep.image_accuracy),
            repr(rep.video_accuracy[DecisionRule.THRESHOLD_60.value]),
            repr(rep.video_accuracy[DecisionRule.THRESHOLD_80.value]),
            repr(rep.video_accuracy[DecisionRule.VOTE.value]),
            rep.keyframe_count,
        ])
    return buf.getvalue()


def write_report(report: EvaluationReport, output_dir: Path | str) -> list[Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    csv_path = out / "report.csv"
    atomic_write_text(json_path, report.to_json())
    atomic_write_text(csv_path, report_csv(report))
    return [json_path, csv_path]


def _save_fig(fig, path: Path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())
    return path


def plot_accuracy(report: EvaluationReport, path: Path | str) -> Path:
    """Grouped bars: image accuracy and video accuracy per rule, by method."""
    methods = sorted(report.per_method)
    series = {
        "image": [report.per_method[m].image_accuracy for m in methods],
        "video t60": [report.per_method[m].video_accuracy["t60"] for m in methods],
        "video t80": [report.per_method[m].video_accuracy["t80"] for m in methods],
        "video vote": [report.per_method[m].video_accuracy["vote"] for m in methods],
    }
    fig, ax = plt.subplots(figsize=(9, 4))
    width = 0.8 / len(series)
    for i, (name, vals) in enumerate(series.items()):
        xs = [j + i * width for j in range(len(methods))]
        ax.bar(xs, vals, width=width, label=name)
    ax.set_xticks([j + 1.5 * width for j in range(len(methods))])
    ax.set_xticklabels(methods, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title(f"{report.dataset_id}: accuracy by selection method")
    ax.legend(fontsize=8)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return _save_fig(fig, Path(path))


def plot_silhouettes(sets_by_method: Mapping[str, Sequence[KeyFrameSet]],
                     path: Path | str) -> Path:
    """Distribution of per-video best silhouette scores for each method."""
    methods = sorted(sets_by_method)
    data, kept = [], []
    for m in methods:
        scores = [s.silhouette for s in sets_by_method[m] if s.silhouette is not None]
        if scores:
            data.append(scores)
            kept.append(m)
    fig, ax = plt.subplots(figsize=(7, 4))
    if data:
        ax.boxplot(data, tick_labels=kept)
    ax.set_ylabel("best silhouette score")
    ax.set_title("silhouette of the chosen clustering, per video")
    ax.axhline(0.0, color="grey", lw=0.8, ls=":")
    return _save_fig(fig, Path(path))


def plot_motion_scores(scores_by_video: Mapping[str, Mapping[int, float]],
                       discarded: Mapping[str, set[int]],
                       path: Path | str, max_videos: int = 4) -> Path:
    """Per-frame motion score traces with the high-motion discards marked."""
    videos = sorted(scores_by_video)[:max_videos]
    n = max(len(videos), 1)
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.2 * n), squeeze=False)
    for ax, vid in zip(axes[:, 0], videos):
        frames = sorted(scores_by_video[vid])
        vals = [scores_by_video[vid][f] for f in frames]
        ax.plot(frames, vals, lw=0.9, color="tab:pink")
        cut = sorted(discarded.get(vid, set()))
        if cut:
            ax.scatter(cut, [scores_by_video[vid][f] for f in cut],
                       s=12, color="tab:red", zorder=3, label="high motion")
            ax.legend(fontsize=7)
        ax.set_ylabel("score", fontsize=8)
        ax.set_title(vid, fontsize=9)
    axes[-1, 0].set_xlabel("frame index")
    fig.tight_layout()
    return _save_fig(fig, Path(path))


def render_figures(report: EvaluationReport,
                   sets_by_method: Mapping[str, Sequence[KeyFrameSet]],
                   scores_by_video: Mapping[str, Mapping[int, float]] | None,
                   discarded: Mapping[str, set[int]] | None,
                   output_dir: Path | str) -> list[Path]:
    fig_dir = Path(output_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = [plot_accuracy(report, fig_dir / "accuracy_by_method.png"),
               plot_silhouettes(sets_by_method, fig_dir / "silhouette_by_method.png")]
    if scores_by_video:
        written.append(plot_motion_scores(scores_by_video, discarded or {},
                                          fig_dir / "motion_scores.png"))
    return written

from typing import Tuple

from PvitForge.pipeline.types import (
    DESC_UNANSWERABLE,
    MC_ANSWERABLE,
    MC_UNANSWERABLE,
    TYPE_LABELS,
    BenchType,
)
from PvitForge.utils.formatters import COUNT_BUCKETS, table

COUNT_LABELS = [f"Cnt={b}" for b in COUNT_BUCKETS]


def render_report(report, model: str = "model") -> Tuple[str, dict]:
    """Fixed-width tables for MC, person count and description results, plus the JSON record."""
    mc_head = ["MLLM"] + [TYPE_LABELS[t] for t in MC_ANSWERABLE] + ["Avg"]
    mc_head += [TYPE_LABELS[t] for t in MC_UNANSWERABLE] + ["Avg"]
    count_head = ["MLLM"] + COUNT_LABELS + ["Avg"] + [TYPE_LABELS[t] for t in MC_UNANSWERABLE] + ["Avg"]
    desc_head = ["MLLM"] + COUNT_LABELS + ["Avg"] + [TYPE_LABELS[t] for t in DESC_UNANSWERABLE] + ["Avg"]

    mc_rows, count_rows, desc_rows = [], [], []
    if not report.empty:
        mc_rows.append(
            [model]
            + [report.mc_answerable.get(t.value) for t in MC_ANSWERABLE]
            + [report.mc_answerable_avg]
            + [report.mc_unanswerable.get(t.value) for t in MC_UNANSWERABLE]
            + [report.mc_unanswerable_avg]
        )
        count_rows.append(
            [model]
            + [report.mc_by_count.get(b) for b in COUNT_BUCKETS]
            + [report.mc_by_count_avg]
            + [report.mc_unanswerable.get(t.value) for t in MC_UNANSWERABLE]
            + [report.mc_unanswerable_avg]
        )
        desc_rows.append(
            [model]
            + [report.desc_similarity.get(b) for b in COUNT_BUCKETS]
            + [report.desc_similarity_avg]
            + [report.desc_rejection.get(t.value) for t in DESC_UNANSWERABLE]
            + [report.desc_rejection_avg]
        )

    text = "\n\n".join(
        [
            table("MC questions (accuracy %)", mc_head, mc_rows),
            table("MC questions by people in scene (accuracy %)", count_head, count_rows),
            table("Descriptions (similarity x100 | rejection %)", desc_head, desc_rows),
        ]
    )
    return text + "\n", report.to_dict()


def render_bench_stats(stats: dict) -> str:
    head = ["Type", "Items"] + COUNT_LABELS
    rows = [
        [t.value, stats["by_type"][t.value]] + [stats["person_count"][t.value][b] for b in COUNT_BUCKETS]
        for t in BenchType
    ]
    rows.append(["MC total", stats["mc_total"]] + [None] * len(COUNT_BUCKETS))
    rows.append(["Desc total", stats["desc_total"]] + [None] * len(COUNT_BUCKETS))
    return table("Benchmark composition", head, rows) + "\n"


def render_dataset_stats(stats: dict) -> str:
    rows = [[kind, n] for kind, n in stats["by_kind"].items()]
    rows += [
        ["answerable", stats["answerable"]],
        ["unanswerable", stats["unanswerable"]],
        ["total", stats["total"]],
    ]
    return table("Training instances", ["Kind", "Count"], rows, first=24) + "\n"

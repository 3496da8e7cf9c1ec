from PvitForge.pipeline.bench import REFERENCE_COMPOSITION
from PvitForge.pipeline.evaluation import EvalReport
from PvitForge.pipeline.report import render_bench_stats, render_dataset_stats, render_report
from PvitForge.utils.formatters import cell, macro_avg, percent, round2


def test_half_up_rounding():
    assert round2(2.675) == 2.68
    assert round2(19.795) == 19.8
    assert percent(2, 3) == 66.67
    assert percent(1, 8) == 12.5
    assert percent(0, 0) is None
    assert macro_avg([36.36, 3.23]) == 19.795
    assert cell(19.795).strip() == "19.80"
    assert cell(None).strip() == "-"


def test_empty_report_prints_headers_only():
    text, record = render_report(EvalReport(), "P-LLaVA")
    assert "P-LLaVA" not in text
    assert "MC questions (accuracy %)" in text
    assert "Aug-Sc-3" in text and "Cnt=>=4" in text and "Adv-Name" in text
    assert record["mc"]["answerable_avg"] is None


def test_populated_report():
    report = EvalReport(
        mc_answerable={"Crop": 66.58, "AugIn": 72.92, "AugSc2": 60.87, "AugSc3": 50.57},
        mc_unanswerable={"AdvImg": 1.11, "AdvName": 20.62},
        mc_by_count={"1": 76.2, "2": 72.38, "3": 69.59, ">=4": 63.04},
        desc_similarity={"1": 31.2, "2": None, "3": None, ">=4": None},
        desc_rejection={"DescAdvImg": 50.0, "DescAdvName": 25.0},
        items={"Crop": 4},
    )
    text, record = render_report(report, "Qwen")
    mc_line = next(line for line in text.splitlines() if line.startswith("Qwen"))
    assert mc_line.split()[1:] == ["66.58", "72.92", "60.87", "50.57", "62.74", "1.11", "20.62", "10.87"]
    count_line = [line for line in text.splitlines() if line.startswith("Qwen")][1]
    assert count_line.split()[1:6] == ["76.20", "72.38", "69.59", "63.04", "70.30"]
    desc_line = [line for line in text.splitlines() if line.startswith("Qwen")][2]
    assert desc_line.split()[1:] == ["31.20", "-", "-", "-", "31.20", "50.00", "25.00", "37.50"]
    assert record["mc"]["answerable"]["Crop"] == 66.58
    assert record["description"]["rejection_avg"] == 37.5


def test_bench_stats_table():
    stats = {
        "total": 1015,
        "mc_total": 915,
        "desc_total": 100,
        "by_type": {t.value: n for t, n in REFERENCE_COMPOSITION.items()},
        "person_count": {
            t.value: {"1": n, "2": 0, "3": 0, ">=4": 0} for t, n in REFERENCE_COMPOSITION.items()
        },
    }
    stats["person_count"]["Crop"] = {"1": 221, "2": 85, "3": 48, ">=4": 61}
    text = render_bench_stats(stats)
    crop = next(line for line in text.splitlines() if line.startswith("Crop"))
    assert crop.split() == ["Crop", "415", "221", "85", "48", "61"]
    assert next(line for line in text.splitlines() if line.startswith("MC total")).split()[2] == "915"


def test_dataset_stats_table():
    stats = {"by_kind": {"freeform": 7, "description": 3}, "answerable": 7, "unanswerable": 3, "total": 10}
    text = render_dataset_stats(stats)
    assert text.splitlines()[0] == "Training instances"
    assert next(line for line in text.splitlines() if line.startswith("total")).split() == ["total", "10"]

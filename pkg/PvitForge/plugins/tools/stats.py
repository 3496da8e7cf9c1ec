from PvitForge import app
from PvitForge.pipeline.bench import bench_stats
from PvitForge.pipeline.report import render_bench_stats, render_dataset_stats
from PvitForge.pipeline.synthesis import dataset_stats
from PvitForge.utils.exceptions import MissingStageInput
from PvitForge.utils.manifest import PBENCH, PVIT, write_json


@app.command("stats")
async def cmd_stats(ctx) -> dict:
    """Composition of pvit.jsonl and pbench.jsonl."""
    stats, text = {}, []
    if ctx.path(PVIT).exists():
        stats["pvit"] = dataset_stats(ctx.path(PVIT))
        text.append(render_dataset_stats(stats["pvit"]))
    if ctx.path(PBENCH).exists():
        stats["pbench"] = bench_stats(ctx.path(PBENCH))
        text.append(render_bench_stats(stats["pbench"]))
    if not stats:
        raise MissingStageInput(f"neither {PVIT} nor {PBENCH} exists in {ctx.cfg.output_dir}")
    write_json(ctx.path("stats.json"), stats)
    print("\n".join(text))
    return {"manifests": len(stats)}

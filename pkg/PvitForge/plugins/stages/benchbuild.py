import asyncio

from PvitForge import LOGGER, app
from PvitForge.pipeline.bench import build_bench, export_review, save_bench, split_scenes, validate_bench
from PvitForge.pipeline.extraction import load_infos
from PvitForge.pipeline.templates import generate_qa_templates
from PvitForge.pipeline.types import SceneRecord
from PvitForge.utils.exceptions import BackendError, NoTemplates, ParseFailure
from PvitForge.utils.manifest import CURATION, EXTRACTION, INSTANCE_SCHEMA, PBENCH, PVIT, load_records, read_jsonl
from PvitForge.utils.seeds import derive_seed


async def bench_templates(ctx, scenes, infos) -> dict:
    """Multiple-choice templates for every described person of the bench scenes."""
    sem = asyncio.Semaphore(ctx.cfg.concurrency)

    async def one(info):
        async with sem:
            try:
                return info.person_id, await generate_qa_templates(
                    ctx.backends, ctx.prompts, info, "multichoice",
                    derive_seed(ctx.seed, "templates", info.person_id, "multichoice"),
                )
            except (NoTemplates, ParseFailure, BackendError) as e:
                LOGGER(__name__).warning(f"{info.person_id}: no bench questions ({type(e).__name__})")
                return info.person_id, []

    wanted = [infos[p.person_id] for s in scenes for p in s.persons if p.person_id in infos]
    return dict(await asyncio.gather(*(one(info) for info in wanted)))


@app.command("benchbuild", stage="benchbuild")
async def cmd_benchbuild(ctx) -> dict:
    """Benchmark items from the held-out scenes, plus the review export."""
    cfg = ctx.cfg
    scenes = load_records(ctx.path(CURATION), SceneRecord, "scene_id")
    infos = load_infos(ctx.path(EXTRACTION))
    training = read_jsonl(ctx.path(PVIT), INSTANCE_SCHEMA, key="instance_id")
    _, held_out = split_scenes(scenes, cfg.bench.holdout_fraction, ctx.seed)

    templates = await bench_templates(ctx, held_out, infos)
    manifest = build_bench(
        held_out,
        cfg.bench,
        ctx.seed,
        ctx.store,
        ctx.prompts,
        ctx.name_pool(),
        templates,
        infos,
        training_hashes={r.get("source_scene_hash") for r in training},
    )
    save_bench(ctx.path(PBENCH), manifest)
    report = validate_bench(manifest)
    for violation in report["violations"]:
        LOGGER(__name__).error(f"{violation['item_id']}: {violation['rule']}")
    if cfg.bench.review:
        export_review(ctx.store, manifest, cfg.output_path)
    return {"items": len(manifest.items), "violations": len(report["violations"])}

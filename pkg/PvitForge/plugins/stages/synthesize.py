import asyncio
from collections import defaultdict

from PvitForge import app
from PvitForge.core.settings import kind_weights
from PvitForge.pipeline.bench import split_scenes
from PvitForge.pipeline.extraction import load_infos
from PvitForge.pipeline.synthesis import dataset_stats, synthesize_scene
from PvitForge.pipeline.types import SceneRecord
from PvitForge.utils.manifest import CURATION, EXTRACTION, PVIT, load_records, write_json, write_jsonl


@app.command("synthesize", stage="synthesize")
async def cmd_synthesize(ctx) -> dict:
    """Training instances from the training share of the curated scenes."""
    cfg = ctx.cfg
    scenes = load_records(ctx.path(CURATION), SceneRecord, "scene_id")
    infos = load_infos(ctx.path(EXTRACTION))
    train, _ = split_scenes(scenes, cfg.bench.holdout_fraction, ctx.seed)

    by_scene = defaultdict(list)
    for info in infos.values():
        by_scene[info.scene_id].append(info)
    pool, lexicon, weights = ctx.name_pool(), ctx.pronouns(), kind_weights(cfg)
    sem = asyncio.Semaphore(cfg.concurrency)

    async def one(scene: SceneRecord):
        scene_infos = sorted(by_scene.get(scene.scene_id, []), key=lambda i: i.person_id)
        if not scene_infos:
            return [], []
        async with sem:
            return await synthesize_scene(
                ctx.backends, ctx.store, ctx.prompts, cfg.synthesis, ctx.seed, weights,
                scene, scene_infos, train, pool, lexicon,
            )

    instances, failures = {}, []
    for scene_instances, scene_failures in await asyncio.gather(*(one(s) for s in train)):
        for instance in scene_instances:
            instances.setdefault(instance.instance_id, instance)
        failures.extend(scene_failures)
    records = [i.to_dict() for i in instances.values()]
    write_jsonl(ctx.path(PVIT), records, sort_key=lambda r: r["instance_id"])
    stats = dataset_stats(records)
    stats["switches"] = {
        "use_augmentation": cfg.synthesis.use_augmentation,
        "use_adversarial": cfg.synthesis.use_adversarial,
        "name_repetitions": cfg.synthesis.name_repetitions,
    }
    stats["failures"] = sorted(failures, key=lambda f: (f["person_id"], f["kind"]))
    write_json(ctx.path("synthesis_stats.json"), stats)
    return {"instances": len(records), "unanswerable": stats["unanswerable"], "failures": len(failures)}

import asyncio

from PvitForge import LOGGER, app
from PvitForge.pipeline.extraction import extract_scene
from PvitForge.pipeline.types import SceneRecord
from PvitForge.utils.exceptions import BackendError, PreconditionError
from PvitForge.utils.manifest import CURATION, EXTRACTION, load_records, write_jsonl


@app.command("extract", stage="extract")
async def cmd_extract(ctx) -> dict:
    """Personal, holistic and fused descriptions for every curated person."""
    scenes = [s for s in load_records(ctx.path(CURATION), SceneRecord, "scene_id") if s.persons]
    sem = asyncio.Semaphore(ctx.cfg.concurrency)
    retries = ctx.cfg.extraction.placeholder_retries

    async def one(scene: SceneRecord):
        async with sem:
            try:
                return await extract_scene(ctx.backends, ctx.prompts, scene, ctx.seed, retries)
            except (BackendError, PreconditionError) as e:
                LOGGER(__name__).warning(f"{scene.scene_id}: extraction failed ({type(e).__name__}: {e})")
                return [], [
                    {"scene_id": scene.scene_id, "person_id": p.person_id, "error": type(e).__name__}
                    for p in scene.persons
                ]

    infos, dropped = [], []
    for scene_infos, scene_dropped in await asyncio.gather(*(one(s) for s in scenes)):
        infos.extend(scene_infos)
        dropped.extend(
            {"scene_id": d["scene_id"], "person_id": d["person_id"], "error": d.get("error") or d["reason"]}
            for d in scene_dropped
        )
    records = [info.to_dict() for info in infos] + dropped
    write_jsonl(ctx.path(EXTRACTION), records, sort_key=lambda r: (r["scene_id"], r["person_id"]))
    return {"persons": len(infos), "dropped": len(dropped)}

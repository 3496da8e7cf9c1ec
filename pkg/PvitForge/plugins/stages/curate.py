import asyncio
import dataclasses

from PvitForge import LOGGER, app
from PvitForge.pipeline.curation import augment_person, identify_persons, scene_id_for
from PvitForge.pipeline.types import ImageRef, SceneRecord
from PvitForge.utils.exceptions import BackendError, MissingStageInput
from PvitForge.utils.manifest import CURATION, write_jsonl
from PvitForge.utils.seeds import derive_seed


async def curate_scene(ctx, ref: ImageRef) -> SceneRecord:
    cfg = ctx.cfg.curation
    scene_id = scene_id_for(ref)
    try:
        record = await identify_persons(ctx.backends, ctx.store, ref, cfg, scene_id)
    except BackendError as e:
        LOGGER(__name__).warning(f"{scene_id}: curation failed ({type(e).__name__}: {e})")
        return SceneRecord(scene_id, ref, [], [f"failed:{type(e).__name__}"])
    if cfg.augment_n < 1:
        return record
    persons = []
    for concept in record.persons:
        try:
            concept = await augment_person(
                ctx.backends, concept, cfg.augment_n, derive_seed(ctx.seed, "augment", concept.person_id)
            )
        except BackendError as e:
            LOGGER(__name__).warning(f"{concept.person_id}: augmentation failed ({e})")
            concept = dataclasses.replace(concept, warnings=concept.warnings + [f"augment_failed:{type(e).__name__}"])
        persons.append(concept)
    record.persons = persons
    return record


@app.command("curate", stage="curate")
async def cmd_curate(ctx) -> dict:
    """Detect persons, bind faces, crop and augment every corpus scene."""
    refs = ctx.store.corpus_scenes()
    if ctx.cfg.limit:
        refs = refs[: ctx.cfg.limit]
    if not refs:
        raise MissingStageInput(f"no scene images under {ctx.cfg.corpus_dir}")
    sem = asyncio.Semaphore(ctx.cfg.concurrency)

    async def one(ref):
        async with sem:
            return await curate_scene(ctx, ref)

    records = await asyncio.gather(*(one(ref) for ref in refs))
    write_jsonl(ctx.path(CURATION), (r.to_dict() for r in records), sort_key=lambda r: r["scene_id"])
    return {
        "scenes": len(records),
        "persons": sum(r.person_count for r in records),
        "empty_scenes": sum(1 for r in records if not r.persons),
    }

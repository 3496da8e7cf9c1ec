"""Unanswerable instances: unknown names and persons missing from the scene."""

import random
from typing import List, Optional, Sequence

from prompts import render
from PvitForge.pipeline.names import NamePool, bind_text
from PvitForge.pipeline.serializer import build_instance
from PvitForge.pipeline.types import PLACEHOLDER, ImageRef, PrefixEntry, SceneRecord, TrainingInstance
from PvitForge.utils.exceptions import NoDonorScenes, PoolExhausted


def refusal(prompts: dict, kind: str, name: str, rng: random.Random) -> str:
    return render(rng.choice(prompts["refusals"][kind]), name=name)


def unknown_name(bound_prefix: Sequence[PrefixEntry], pool: NamePool, rng: random.Random) -> str:
    candidates = pool.available(entry.intro for entry in bound_prefix)
    if not candidates:
        raise PoolExhausted("every pool name is already introduced in the prefix")
    return rng.choice(candidates)


def make_adv_name_instance(
    scene: ImageRef,
    bound_prefix: Sequence[PrefixEntry],
    pool: NamePool,
    rng: random.Random,
    prompts: dict,
    question: Optional[str] = None,
    kind: str = "description",
    **meta,
) -> TrainingInstance:
    """Ask about a name the prefix never introduced; the answer is a "do not know who" refusal."""
    name = unknown_name(bound_prefix, pool, rng)
    query = bind_text(question or prompts["description_query"].replace("{name}", PLACEHOLDER), {PLACEHOLDER: name})
    return build_instance(
        kind,
        bound_prefix,
        scene,
        query,
        refusal(prompts, "name", name, rng),
        answerable=False,
        prefix_variant="AdvName",
        queried_name=name,
        names=[e.intro for e in bound_prefix] + [name],
        **meta,
    )


def donor_persons(scene: SceneRecord, other_scenes: Sequence[SceneRecord]) -> List[tuple]:
    """(donor scene, person) pairs that cannot appear in `scene`."""
    own = {p.person_id for p in scene.persons}
    pairs = []
    for other in other_scenes:
        if other.scene_id == scene.scene_id or other.image.content_hash == scene.image.content_hash:
            continue
        pairs.extend((other, p) for p in other.persons if p.person_id not in own)
    return pairs


def make_adv_image_instance(
    scene: SceneRecord,
    other_scenes: Sequence[SceneRecord],
    pool: NamePool,
    rng: random.Random,
    prompts: dict,
    question: Optional[str] = None,
    kind: str = "description",
    **meta,
) -> TrainingInstance:
    """Introduce someone from another scene and ask about them; the answer is a "cannot see" refusal."""
    donors = donor_persons(scene, other_scenes)
    if not donors:
        raise NoDonorScenes(f"{scene.scene_id}: no persons from other scenes to borrow")
    donor_scene, donor = rng.choice(donors)
    candidates = pool.available()
    if not candidates:
        raise PoolExhausted("name pool is empty")
    name = rng.choice(candidates)
    prefix = [PrefixEntry(donor.face_crop, name, donor.person_id)]
    query = bind_text(question or prompts["description_query"].replace("{name}", PLACEHOLDER), {PLACEHOLDER: name})
    meta.setdefault("source_scene_id", scene.scene_id)
    meta.setdefault("source_scene_hash", scene.image.content_hash)
    meta.setdefault("scene_person_ids", [p.person_id for p in scene.persons])
    return build_instance(
        kind,
        prefix,
        scene.image,
        query,
        refusal(prompts, "image", name, rng),
        answerable=False,
        prefix_variant="AdvImg",
        queried_name=name,
        names=[name],
        **meta,
    )

"""Dual-level descriptions: personal, holistic and the fused rewrite."""

import re
from typing import Dict, List, Tuple

from prompts import render
from PvitForge.logging import LOGGER, log_event
from PvitForge.pipeline.types import PLACEHOLDER, DualLevelInfo, PersonConcept, SceneRecord
from PvitForge.utils.exceptions import (
    CorruptRecord,
    FusionDegenerate,
    MalformedResponse,
    PlaceholderMissing,
    PreconditionError,
)
from PvitForge.utils.manifest import read_jsonl
from PvitForge.utils.seeds import derive_seed

_PLACEHOLDER_LIKE = re.compile(r"<[A-Za-z_][A-Za-z0-9_]*>")


async def extract_personal_info(backends, prompts: dict, concept: PersonConcept, retries: int = 1) -> str:
    prompt = prompts["personal"]
    for attempt in range(retries + 1):
        text = await backends.describe_image([concept.person_crop], prompt)
        if PLACEHOLDER in text:
            return text.strip()
        log_event("extract", concept.person_id, "placeholder_missing", attempt=attempt + 1)
        prompt = f"{prompts['personal']}\n{prompts['personal_retry_suffix']}"
    raise PlaceholderMissing(f"{concept.person_id}: personal description never used {PLACEHOLDER}")


async def extract_holistic_info(backends, prompts: dict, scene: SceneRecord) -> str:
    if not scene.persons:
        raise PreconditionError(f"{scene.scene_id}: holistic description needs at least one person")
    text = (await backends.describe_image([scene.image], prompts["holistic"])).strip()
    if PLACEHOLDER in text:
        raise MalformedResponse(f"{scene.scene_id}: holistic description contains {PLACEHOLDER}")
    return text


async def fuse_info(backends, prompts: dict, personal: str, holistic: str, seed: int = 0) -> str:
    if PLACEHOLDER not in personal:
        raise PreconditionError(f"personal description lacks {PLACEHOLDER}")
    prompt = render(
        prompts["fusion"],
        example_personal=prompts["fusion_example_personal"].strip(),
        example_holistic=prompts["fusion_example_holistic"].strip(),
        example_output=prompts["fusion_example_output"].strip(),
        personal=personal.strip(),
        holistic=holistic.strip(),
    )
    fused = (await backends.complete_text(prompt, seed)).strip()
    if fused == holistic.strip():
        raise FusionDegenerate("fusion returned the holistic description unchanged")
    if PLACEHOLDER not in fused:
        raise PlaceholderMissing(f"fused description lacks {PLACEHOLDER}")
    extra = sorted(set(_PLACEHOLDER_LIKE.findall(fused)) - {PLACEHOLDER})
    if extra:
        raise FusionDegenerate(f"fused description introduces {', '.join(extra)}")
    return fused


async def extract_scene(
    backends, prompts: dict, scene: SceneRecord, master_seed: int, retries: int = 1
) -> Tuple[List[DualLevelInfo], List[dict]]:
    """Descriptions for every person of a scene; persons that fail are reported, not raised."""
    holistic = await extract_holistic_info(backends, prompts, scene)
    infos, dropped = [], []
    for concept in scene.persons:
        try:
            personal = await extract_personal_info(backends, prompts, concept, retries)
            fused = await fuse_info(
                backends,
                prompts,
                personal,
                holistic,
                derive_seed(master_seed, "extract", concept.person_id),
            )
        except (PlaceholderMissing, FusionDegenerate) as e:
            LOGGER(__name__).warning(f"Dropping {concept.person_id}: {e}")
            dropped.append(
                {"scene_id": scene.scene_id, "person_id": concept.person_id, "reason": type(e).__name__}
            )
            continue
        infos.append(DualLevelInfo(scene.scene_id, concept.person_id, personal, holistic, fused))
    # fused texts must tell the persons of one scene apart; the first keeps it
    seen, unique = {}, []
    for info in infos:
        if info.fused in seen:
            LOGGER(__name__).warning(
                f"Dropping {info.person_id}: fused description duplicates {seen[info.fused]}"
            )
            dropped.append(
                {"scene_id": scene.scene_id, "person_id": info.person_id, "reason": FusionDegenerate.__name__}
            )
            continue
        seen[info.fused] = info.person_id
        unique.append(info)
    log_event("extract", scene.scene_id, "extracted", persons=len(unique), dropped=len(dropped))
    return unique, dropped


def load_infos(path) -> Dict[str, DualLevelInfo]:
    """person_id -> DualLevelInfo from extraction.jsonl; dropped persons are skipped."""
    infos = {}
    for lineno, record in enumerate(read_jsonl(path, key="person_id"), start=1):
        if record.get("error"):
            continue
        try:
            info = DualLevelInfo.from_dict(record)
        except KeyError as e:
            raise CorruptRecord(f"extraction record misses {e}", lineno)
        if PLACEHOLDER not in info.personal or PLACEHOLDER not in info.fused:
            raise CorruptRecord(f"{info.person_id}: descriptions lack {PLACEHOLDER}", lineno)
        infos[info.person_id] = info
    return infos

"""Person curation: detect, bind faces, crop, augment and compose scenes."""

import dataclasses
import random
from pathlib import PurePosixPath
from typing import List, Sequence, Tuple

from PvitForge.logging import LOGGER, log_event
from PvitForge.pipeline.types import BBox, CompositeScene, ImageRef, PersonConcept, SceneRecord
from PvitForge.utils.exceptions import InsufficientPersons, MalformedRequest, QuotaExceeded
from PvitForge.utils.images import concat_horizontal, crop, expand_box
from PvitForge.utils.seeds import stable_id


def scene_id_for(ref: ImageRef) -> str:
    """Readable, path-derived id: `street/two_people.png` -> `street_two_people`."""
    path = PurePosixPath(ref.path)
    return "_".join(path.with_suffix("").parts)


def suppress_duplicates(detections, iou: float):
    """Greedy overlap suppression on score-sorted detections; returns (kept, merged count)."""
    kept = []
    for det in detections:
        if all(det.box.iou(other.box) < iou for other in kept):
            kept.append(det)
    return kept, len(detections) - len(kept)


def associate_faces(
    person_boxes: Sequence[BBox], face_boxes: Sequence[BBox], threshold: float = 0.9
) -> List[Tuple[int, int]]:
    candidates = []
    for f, face in enumerate(face_boxes):
        for p, person in enumerate(person_boxes):
            frac = person.covered_fraction(face)
            if frac >= threshold:
                candidates.append((-frac, -person.area, p, f))
    candidates.sort()
    used_persons, used_faces, pairs = set(), set(), []
    for _, _, p, f in candidates:
        if p in used_persons or f in used_faces:
            continue
        used_persons.add(p)
        used_faces.add(f)
        pairs.append((p, f))
    return sorted(pairs)


def crop_region(store, image: ImageRef, box: BBox, margin_frac: float, rel_path: str) -> ImageRef:
    if box.w < 1 or box.h < 1:
        raise MalformedRequest(f"crop box {box.as_list()} is empty")
    picture = store.open(image)
    grown = expand_box(box, margin_frac, picture.width, picture.height)
    return store.write_image(rel_path, crop(picture, grown))


async def identify_persons(backends, store, scene_image: ImageRef, cfg, scene_id: str = None) -> SceneRecord:
    scene_id = scene_id or scene_id_for(scene_image)
    store.open(scene_image)
    detections = await backends.detect_objects(scene_image, cfg.person_prompt)
    detections = [d for d in detections if d.score >= cfg.person_threshold]
    detections, merged = suppress_duplicates(detections, cfg.nms_iou)
    faces = await backends.detect_faces(scene_image)

    record = SceneRecord(scene_id=scene_id, image=scene_image)
    if merged:
        record.flags.append(f"merged_duplicates:{merged}")
    pairs = associate_faces([d.box for d in detections], [f.box for f in faces], cfg.face_containment)
    faceless = len(detections) - len(pairs)
    if faceless:
        record.flags.append(f"faceless_dropped:{faceless}")

    for index, (p, f) in enumerate(pairs):
        person_box, face_box = detections[p].box, faces[f].box
        base = f"assets/{scene_id}/p{index}"
        record.persons.append(
            PersonConcept(
                person_id=f"{scene_id}_p{index}",
                person_box=person_box,
                face_box=face_box,
                person_crop=crop_region(store, scene_image, person_box, cfg.crop_margin, f"{base}_person.png"),
                face_crop=crop_region(store, scene_image, face_box, cfg.crop_margin, f"{base}_face.png"),
            )
        )
    if not record.persons:
        record.flags.append("no_persons")
    log_event(
        "curate",
        scene_id,
        "identified",
        detections=len(detections),
        faces=len(faces),
        persons=record.person_count,
    )
    return record


async def augment_person(backends, concept: PersonConcept, n: int, seed: int) -> PersonConcept:
    try:
        refs = await backends.generate_identity_images(concept.face_crop, n, seed)
    except QuotaExceeded as e:
        LOGGER(__name__).warning(f"Augmentation skipped for {concept.person_id}: {e}")
        return dataclasses.replace(
            concept,
            augmented=list(concept.augmented),
            warnings=list(concept.warnings) + ["augment_quota_exceeded"],
        )
    return dataclasses.replace(
        concept,
        augmented=list(concept.augmented) + refs,
        warnings=list(concept.warnings),
    )


def compose_scene(store, concepts: Sequence[PersonConcept], k: int, rng: random.Random) -> CompositeScene:
    if k not in (2, 3):
        raise MalformedRequest(f"composites hold 2 or 3 persons, not {k}")
    ids = [c.person_id for c in concepts]
    if len(set(ids)) != len(ids):
        raise MalformedRequest("compose_scene needs distinct persons")
    if len(concepts) < k:
        raise InsufficientPersons(f"need {k} persons for a composite, have {len(concepts)}")
    chosen = rng.sample(list(concepts), k)
    canvas, boxes = concat_horizontal([store.open(c.person_crop) for c in chosen])
    name = stable_id(*(c.person_crop.content_hash for c in chosen))
    ref = store.write_image(f"assets/composites/{name}.png", canvas)
    return CompositeScene(
        image=ref,
        slots=tuple(c.person_id for c in chosen),
        slot_boxes=tuple(boxes),
    )

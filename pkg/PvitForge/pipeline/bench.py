"""Benchmark construction from held-out scenes, its statistics and its validator."""

import random
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from prompts import render
from PvitForge.logging import LOGGER, log_event
from PvitForge.pipeline.adversarial import donor_persons, unknown_name
from PvitForge.pipeline.curation import compose_scene
from PvitForge.pipeline.names import NamePool, bind_text, instantiate
from PvitForge.pipeline.types import (
    CHOICE_LETTERS,
    DESC_TYPES,
    MC_TYPES,
    PLACEHOLDER,
    REFUSE,
    BenchItem,
    BenchManifest,
    BenchType,
    DualLevelInfo,
    PersonConcept,
    PrefixEntry,
    QATemplate,
    SceneRecord,
)
from PvitForge.utils.exceptions import CorruptRecord, InsufficientScenes, PreconditionError
from PvitForge.utils.formatters import COUNT_BUCKETS, count_bucket
from PvitForge.utils.images import side_by_side
from PvitForge.utils.manifest import BENCH_ITEM_SCHEMA, read_jsonl, write_jsonl
from PvitForge.utils.seeds import derive_rng, derive_seed, stable_id

# Published benchmark composition, used to scale default quotas.
REFERENCE_COMPOSITION = {
    BenchType.Crop: 415,
    BenchType.AugIn: 100,
    BenchType.AugSc2: 100,
    BenchType.AugSc3: 100,
    BenchType.AdvImg: 100,
    BenchType.AdvName: 100,
    BenchType.DescAnswerable: 60,
    BenchType.DescAdvImg: 20,
    BenchType.DescAdvName: 20,
}

# Most constrained first, so scarce scenes go where nothing else fits.
ALLOCATION_ORDER = (
    BenchType.AugSc3,
    BenchType.AugSc2,
    BenchType.AugIn,
    BenchType.AdvImg,
    BenchType.AdvName,
    BenchType.DescAdvImg,
    BenchType.DescAdvName,
    BenchType.DescAnswerable,
    BenchType.Crop,
)

Templates = Dict[str, List[QATemplate]]


def split_scenes(
    scenes: Sequence[SceneRecord], holdout_fraction: float, master_seed: int
) -> Tuple[List[SceneRecord], List[SceneRecord]]:
    """Seeded (train, bench) partition by content hash; scenes without persons are left out."""
    usable = [s for s in scenes if s.persons]
    hashes = sorted(
        {s.image.content_hash for s in usable},
        key=lambda h: (derive_seed(master_seed, "split", h), h),
    )
    n_bench = int(len(hashes) * holdout_fraction + 0.5)
    if len(hashes) >= 2:
        n_bench = min(max(n_bench, 1), len(hashes) - 1)
    held = set(hashes[:n_bench])
    train = [s for s in usable if s.image.content_hash not in held]
    bench = [s for s in usable if s.image.content_hash in held]
    return train, bench


def default_quotas(n_scenes: int) -> Dict[BenchType, int]:
    """Largest-remainder share of n_scenes in the reference composition."""
    total = sum(REFERENCE_COMPOSITION.values())
    shares = {t: n_scenes * c / total for t, c in REFERENCE_COMPOSITION.items()}
    quotas = {t: int(v) for t, v in shares.items()}
    rest = n_scenes - sum(quotas.values())
    order = sorted(shares, key=lambda t: (-(shares[t] - quotas[t]), list(BenchType).index(t)))
    for t in order[:rest]:
        quotas[t] += 1
    return quotas


def _mc_ready(templates: Templates, pid: str) -> List[QATemplate]:
    return [
        t
        for t in templates.get(pid, [])
        if t.choices and len(t.choices) == 4 and tuple(t.placeholders) == (PLACEHOLDER,)
    ]


def _targets(scene: SceneRecord, bench_type: BenchType, templates: Templates, infos) -> List[PersonConcept]:
    if bench_type == BenchType.DescAnswerable:
        return [p for p in scene.persons if p.person_id in infos]
    if bench_type.is_mc:
        persons = [p for p in scene.persons if _mc_ready(templates, p.person_id)]
        if bench_type == BenchType.AugIn:
            persons = [p for p in persons if p.augmented]
        return persons
    return list(scene.persons)


def _donors(scene: SceneRecord, others: Sequence[SceneRecord], bench_type: BenchType, templates: Templates):
    pairs = donor_persons(scene, others)
    if bench_type.is_mc:
        pairs = [(s, p) for s, p in pairs if _mc_ready(templates, p.person_id)]
    return pairs


def eligible(
    scene: SceneRecord,
    bench_type: BenchType,
    templates: Templates,
    infos: Dict[str, DualLevelInfo],
    others: Sequence[SceneRecord] = (),
) -> bool:
    if not scene.persons:
        return False
    if bench_type in (BenchType.AdvImg, BenchType.DescAdvImg):
        return bool(_donors(scene, others, bench_type, templates))
    targets = _targets(scene, bench_type, templates, infos)
    if bench_type == BenchType.AugSc2:
        return bool(targets) and scene.person_count >= 2
    if bench_type == BenchType.AugSc3:
        return bool(targets) and scene.person_count >= 3
    return bool(targets)


def _mc_fields(template: QATemplate, name: str, rng: random.Random) -> Tuple[str, List[str], str]:
    choices = list(template.choices)
    rng.shuffle(choices)
    gold = CHOICE_LETTERS[choices.index(template.answer)]
    question, _ = instantiate(template, name)
    return question, [bind_text(c, {PLACEHOLDER: name}) for c in choices], gold


def _make_item(
    bench_type: BenchType,
    scene: SceneRecord,
    others: Sequence[SceneRecord],
    store,
    prompts: dict,
    pool: NamePool,
    templates: Templates,
    infos: Dict[str, DualLevelInfo],
    rng: random.Random,
) -> BenchItem:
    name = rng.choice(pool.names)
    scene_image, person_count, slots = scene.image, scene.person_count, None
    choices, target_image, queried = None, None, name

    if bench_type in (BenchType.AdvImg, BenchType.DescAdvImg):
        _, donor = rng.choice(_donors(scene, others, bench_type, templates))
        prefix = [PrefixEntry(donor.face_crop, name, donor.person_id)]
        if bench_type.is_mc:
            question, choices, _ = _mc_fields(rng.choice(_mc_ready(templates, donor.person_id)), name, rng)
        else:
            question = render(prompts["description_query"], name=name)
        gold = REFUSE
    else:
        target = rng.choice(_targets(scene, bench_type, templates, infos))
        image = target.face_crop
        if bench_type == BenchType.AugIn or (bench_type == BenchType.DescAnswerable and target.augmented):
            image = rng.choice(target.augmented)
        prefix = [PrefixEntry(image, name, target.person_id)]
        if bench_type in (BenchType.AdvName, BenchType.DescAdvName):
            queried = unknown_name(prefix, pool, rng)
        if bench_type.is_mc:
            question, choices, gold = _mc_fields(rng.choice(_mc_ready(templates, target.person_id)), queried, rng)
        else:
            question = render(prompts["description_query"], name=queried)
        if bench_type.is_adversarial:
            gold = REFUSE
        elif bench_type == BenchType.DescAnswerable:
            gold = bind_text(infos[target.person_id].personal, {PLACEHOLDER: name})
            target_image = target.person_crop
        if bench_type in (BenchType.AugSc2, BenchType.AugSc3):
            k = 2 if bench_type == BenchType.AugSc2 else 3
            others_here = [p for p in scene.persons if p.person_id != target.person_id]
            composite = compose_scene(store, [target] + rng.sample(others_here, k - 1), k, rng)
            scene_image, person_count, slots = composite.image, k, list(composite.slots)

    item_id = stable_id(
        "bench",
        bench_type.value,
        scene.image.content_hash,
        question,
        *(entry.image.content_hash for entry in prefix),
    )
    return BenchItem(
        item_id=item_id,
        bench_type=bench_type,
        prefix=prefix,
        scene=scene_image,
        question=question,
        choices=choices,
        gold=gold,
        person_count=person_count,
        target_person_image=target_image,
        source_scene_id=scene.scene_id,
        source_scene_hash=scene.image.content_hash,
        scene_person_ids=slots if slots is not None else [p.person_id for p in scene.persons],
        queried_name=queried,
        composite_slots=slots,
    )


def build_bench(
    scenes: Sequence[SceneRecord],
    cfg,
    seed: int,
    store,
    prompts: dict,
    pool: NamePool,
    templates: Templates,
    infos: Dict[str, DualLevelInfo],
    training_hashes: Iterable[str] = (),
) -> BenchManifest:
    """One held-out scene per item, allocated to the most constrained type first.

    Explicit `cfg.quotas` are strict; without them quotas follow the
    reference composition scaled to the scenes at hand, capped by what
    each type can actually use.
    """
    overlap = {s.image.content_hash for s in scenes} & set(training_hashes)
    if overlap:
        raise PreconditionError(f"{len(overlap)} bench scene(s) also appear in the training data")
    scenes = sorted((s for s in scenes if s.persons), key=lambda s: s.scene_id)
    strict = cfg.quotas is not None
    if strict:
        quotas = {BenchType(name): int(n) for name, n in cfg.quotas.items()}
    else:
        quotas = default_quotas(len(scenes))

    remaining = list(scenes)
    items: List[BenchItem] = []
    for bench_type in ALLOCATION_ORDER:
        wanted = quotas.get(bench_type, 0)
        if not wanted:
            continue
        candidates = [s for s in remaining if eligible(s, bench_type, templates, infos, scenes)]
        candidates.sort(key=lambda s: (s.person_count, s.scene_id))
        if len(candidates) < wanted:
            if strict:
                raise InsufficientScenes(bench_type.value, wanted, len(candidates))
            LOGGER(__name__).warning(f"{bench_type.value}: quota {wanted}, using {len(candidates)} eligible scenes")
        for scene in candidates[:wanted]:
            rng = derive_rng(seed, "bench", bench_type.value, scene.scene_id)
            item = _make_item(bench_type, scene, scenes, store, prompts, pool, templates, infos, rng)
            items.append(item)
            remaining.remove(scene)
            log_event("benchbuild", item.item_id, "item_built", type=bench_type.value, scene=scene.scene_id)
    items.sort(key=lambda i: (list(BenchType).index(i.bench_type), i.item_id))
    return BenchManifest(items=items)


def _load_items(manifest) -> List[BenchItem]:
    if isinstance(manifest, BenchManifest):
        return list(manifest.items)
    if isinstance(manifest, (str, Path)):
        records = read_jsonl(manifest, BENCH_ITEM_SCHEMA, key="item_id")
    else:
        records = list(manifest)
    items = []
    for lineno, record in enumerate(records, start=1):
        if isinstance(record, BenchItem):
            items.append(record)
            continue
        try:
            items.append(BenchItem.from_dict(record))
        except (KeyError, ValueError, TypeError) as e:
            raise CorruptRecord(f"bench item: {e}", lineno)
    return items


def load_bench(path) -> BenchManifest:
    return BenchManifest(items=_load_items(path))


def save_bench(path, manifest: BenchManifest) -> int:
    return write_jsonl(path, (item.to_dict() for item in manifest.items))


def bench_stats(manifest) -> dict:
    """Counts per type and per type scene person-count histograms."""
    items = _load_items(manifest)
    by_type = {t.value: 0 for t in BenchType}
    persons = {t.value: {b: 0 for b in COUNT_BUCKETS} for t in BenchType}
    for lineno, item in enumerate(items, start=1):
        bucket = count_bucket(item.person_count)
        if bucket not in COUNT_BUCKETS:
            raise CorruptRecord(f"{item.item_id}: person_count {item.person_count}", lineno)
        by_type[item.bench_type.value] += 1
        persons[item.bench_type.value][bucket] += 1
    for name, histogram in persons.items():
        if sum(histogram.values()) != by_type[name]:
            raise CorruptRecord(f"{name}: person-count histogram disagrees with type count")
    mc_total = sum(by_type[t.value] for t in MC_TYPES)
    desc_total = sum(by_type[t.value] for t in DESC_TYPES)
    if mc_total + desc_total != len(items):
        raise CorruptRecord("type counts disagree with the number of items")
    return {
        "total": len(items),
        "mc_total": mc_total,
        "desc_total": desc_total,
        "by_type": by_type,
        "person_count": persons,
    }


def _violations(item: BenchItem) -> List[str]:
    rules = []
    t = item.bench_type
    if not item.prefix:
        rules.append("empty_prefix")
    if t.is_mc:
        if not item.choices or len(item.choices) != 4 or len(set(item.choices)) != 4:
            rules.append("mc_needs_4_distinct_choices")
        if t.is_adversarial:
            if item.gold != REFUSE:
                rules.append("adversarial_gold_not_refuse")
        elif item.gold not in CHOICE_LETTERS:
            rules.append("mc_gold_not_a_letter")
    else:
        if item.choices:
            rules.append("description_has_choices")
        if t.is_adversarial and item.gold != REFUSE:
            rules.append("adversarial_gold_not_refuse")
        if t == BenchType.DescAnswerable:
            if item.target_person_image is None:
                rules.append("missing_target_person_image")
            if item.gold == REFUSE:
                rules.append("answerable_gold_is_refuse")
    if t in (BenchType.AugSc2, BenchType.AugSc3):
        k = 2 if t == BenchType.AugSc2 else 3
        if not item.composite_slots or len(item.composite_slots) != k:
            rules.append(f"composite_needs_{k}_slots")
    if t.adversarial_kind == "name":
        taken = set()
        for entry in item.prefix:
            taken.add(entry.intro)
            taken.update(entry.intro.split())
        if not item.queried_name or item.queried_name in taken:
            rules.append("adv_name_introduced_in_prefix")
    if t.adversarial_kind == "image":
        if {e.person_id for e in item.prefix} & set(item.scene_person_ids):
            rules.append("adv_image_person_in_scene")
    texts = [item.question, item.gold] + list(item.choices or [])
    if any(PLACEHOLDER in text for text in texts):
        rules.append("placeholder_leak")
    if item.person_count < 1:
        rules.append("person_count_below_1")
    return rules


def validate_bench(manifest) -> dict:
    """Every item invariant plus adversarial soundness; never raises on bad items."""
    items = _load_items(manifest)
    violations, seen = [], set()
    for item in items:
        if item.item_id in seen:
            violations.append({"item_id": item.item_id, "rule": "duplicate_item_id"})
        seen.add(item.item_id)
        violations.extend({"item_id": item.item_id, "rule": rule} for rule in _violations(item))
    return {"items": len(items), "violations": violations, "ok": not violations}


def export_review(store, manifest: BenchManifest, output_dir) -> int:
    """review/<item_id>.png (prefix images | scene) plus review.jsonl for spot checks."""
    output_dir = Path(output_dir)
    records = []
    for item in manifest.items:
        images = [store.open(entry.image) for entry in item.prefix] + [store.open(item.scene)]
        sheet = side_by_side(images)
        ref = store.write_image(f"review/{item.item_id}.png", sheet)
        records.append(
            {
                "item_id": item.item_id,
                "bench_type": item.bench_type.value,
                "review_image": ref.path,
                "source_scene_id": item.source_scene_id,
                "scene": item.scene.path,
                "prefix": [{"image": e.image.path, "intro": e.intro} for e in item.prefix],
                "target_person_image": item.target_person_image.path if item.target_person_image else None,
                "question": item.question,
                "choices": item.choices,
                "gold": item.gold,
            }
        )
    return write_jsonl(output_dir / "review.jsonl", records)

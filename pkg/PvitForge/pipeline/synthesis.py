"""Training-instance synthesis: templates, names, pronouns, scenes and adversarial variants."""

import random
from collections import Counter
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from prompts import render
from PvitForge.logging import LOGGER, log_event
from PvitForge.pipeline.adversarial import make_adv_image_instance, make_adv_name_instance
from PvitForge.pipeline.curation import compose_scene
from PvitForge.pipeline.names import NamePool, bind_names, bind_text, instantiate
from PvitForge.pipeline.pronouns import PronounLexicon, address
from PvitForge.pipeline.serializer import build_instance, parse_serialized, supervised_text
from PvitForge.pipeline.templates import generate_qa_templates
from PvitForge.pipeline.types import (
    CHOICE_LETTERS,
    KINDS,
    PLACEHOLDER,
    CompositeScene,
    DualLevelInfo,
    ImageRef,
    PersonConcept,
    PrefixEntry,
    QATemplate,
    SceneRecord,
    TrainingInstance,
)
from PvitForge.utils.exceptions import (
    CorruptRecord,
    InsufficientPersons,
    NoDonorScenes,
    NoTemplates,
    ParseFailure,
    PreconditionError,
    PvitError,
)
from PvitForge.utils.formatters import count_bucket
from PvitForge.utils.manifest import INSTANCE_SCHEMA, read_jsonl
from PvitForge.utils.seeds import derive_rng, derive_seed

SCENE_VARIANTS = ("Original", "AugSc2", "AugSc3")

# Kinds whose answers only describe the person, so a composite scene keeps them true.
COMPOSABLE_KINDS = ("description", "multichoice")


def sample_kinds(weights: Sequence[Tuple[str, float]], n: int, rng: random.Random, allowed=KINDS) -> List[str]:
    """Weighted draw of up to n distinct kinds."""
    pool = [(k, w) for k, w in weights if w > 0 and k in allowed]
    chosen = []
    while pool and len(chosen) < n:
        total = sum(w for _, w in pool)
        pick = rng.random() * total
        for i, (kind, weight) in enumerate(pool):
            pick -= weight
            if pick < 0 or i == len(pool) - 1:
                chosen.append(kind)
                pool.pop(i)
                break
    return chosen


def choose_scene_variant(
    store, scene: SceneRecord, rng: random.Random, probs: Sequence[float], target: Optional[str] = None
) -> Union[ImageRef, CompositeScene]:
    """Original scene, or a 2-/3-slot composite that always holds the target person."""
    pick = rng.random()
    k = 1
    if pick >= probs[0]:
        k = 2 if pick < probs[0] + probs[1] else 3
    if k == 1:
        return scene.image
    target = target or scene.persons[0].person_id
    concept = scene.person(target)
    others = [p for p in scene.persons if p.person_id != target]
    try:
        if len(others) < k - 1:
            raise InsufficientPersons(f"{scene.scene_id}: {scene.person_count} persons, composite needs {k}")
        return compose_scene(store, [concept] + rng.sample(others, k - 1), k, rng)
    except InsufficientPersons as e:
        LOGGER(__name__).warning(f"Composite skipped, using the original scene: {e}")
        return scene.image


def prefix_image(concept: PersonConcept, rng: random.Random, aug_prob: float, use_augmentation: bool):
    if use_augmentation and concept.augmented and rng.random() < aug_prob:
        return rng.choice(concept.augmented), "AugIn"
    return concept.face_crop, "Crop"


def mc_query(prompts: dict, question: str, choices: Sequence[str]) -> str:
    lines = "\n".join(f"{letter}. {choice}" for letter, choice in zip(CHOICE_LETTERS, choices))
    return render(prompts["mc_query"], question=question, choices=lines).strip()


def x_person_template(infos: Sequence[DualLevelInfo], prompts: dict) -> QATemplate:
    """One question about several persons, answered by their personal descriptions."""
    tokens = tuple(f"<name{i}>" for i in range(1, len(infos) + 1))
    names = " and ".join(tokens) if len(tokens) < 3 else ", ".join(tokens[:-1]) + " and " + tokens[-1]
    answer = " ".join(info.personal.replace(PLACEHOLDER, token) for info, token in zip(infos, tokens))
    return QATemplate(
        kind="x_person_description",
        question=render(prompts["x_person_question"], names=names),
        answer=answer,
        placeholders=tokens,
    )


def _scene_meta(scene: SceneRecord, scene_ref) -> Tuple[ImageRef, str, List[str]]:
    if isinstance(scene_ref, CompositeScene):
        return scene_ref.image, SCENE_VARIANTS[len(scene_ref.slots) - 1], list(scene_ref.slots)
    return scene_ref, "Original", [p.person_id for p in scene.persons]


def make_named_instance(
    store,
    prompts: dict,
    template: QATemplate,
    scene: SceneRecord,
    persons: Sequence[PersonConcept],
    pool: NamePool,
    structure_seed: int,
    name_rng: random.Random,
    settings,
) -> TrainingInstance:
    """Bind names into one template.

    Every structural choice (prefix images, extra persons, scene variant,
    choice order) comes from `structure_seed`; names come from `name_rng`.
    Re-running with another name_rng changes the names and nothing else.
    """
    srng = random.Random(structure_seed)
    persons = list(persons)
    target = persons[0]
    image, prefix_variant = prefix_image(target, srng, settings.aug_prefix_prob, settings.use_augmentation)
    images = {target.person_id: image}
    for extra in persons[1:]:
        images[extra.person_id] = extra.face_crop
    if len(template.placeholders) == 1:
        others = [p for p in scene.persons if p.person_id != target.person_id]
        if others and srng.random() < settings.extra_prefix_prob:
            extra = srng.choice(others)
            persons.append(extra)
            images[extra.person_id] = extra.face_crop

    if template.kind == "x_person_description":
        # the scene is a concatenation of exactly the persons asked about
        scene_ref = compose_scene(store, persons, len(persons), srng)
    elif template.kind in COMPOSABLE_KINDS:
        scene_ref = choose_scene_variant(store, scene, srng, settings.scene_variant_probs, target.person_id)
    else:
        scene_ref = scene.image
    scene_image, scene_variant, scene_ids = _scene_meta(scene, scene_ref)

    choices = list(template.choices) if template.choices else None
    if choices:
        srng.shuffle(choices)
    order = [p.person_id for p in persons]
    srng.shuffle(order)

    names = bind_names([template], [p.person_id for p in persons], pool, name_rng)
    assignment = {token: names[p.person_id] for token, p in zip(template.placeholders, persons)}
    prefix = [PrefixEntry(images[pid], names[pid], pid) for pid in order]

    question, answer = instantiate(template, assignment)
    if choices:
        bound = [bind_text(c, assignment) for c in choices]
        query = mc_query(prompts, question, bound)
        gold = CHOICE_LETTERS[choices.index(template.answer)]
        response = gold
    else:
        bound, gold = None, None
        query, response = question, answer
    return build_instance(
        template.kind,
        prefix,
        scene_image,
        query,
        response,
        prefix_variant=prefix_variant,
        scene_variant=scene_variant,
        source_scene_id=scene.scene_id,
        source_scene_hash=scene.image.content_hash,
        scene_person_ids=scene_ids,
        names=[names[pid] for pid in order],
        queried_name=names[target.person_id],
        choices=bound,
        gold=gold,
    )


def make_pronoun_instance(
    info: DualLevelInfo,
    relation: str,
    rng: random.Random,
    scene: SceneRecord,
    lexicon: PronounLexicon,
    prompts: dict,
    template: Optional[QATemplate] = None,
    settings=None,
) -> TrainingInstance:
    """Introduce the person as "this is my dad" and answer about "your dad"."""
    second = lexicon.second_person(relation)
    concept = scene.person(info.person_id)
    if settings is not None:
        image, variant = prefix_image(concept, rng, settings.aug_prefix_prob, settings.use_augmentation)
    else:
        image, variant = concept.face_crop, "Crop"
    answer = template.answer if template is not None else info.personal
    return build_instance(
        "pronoun_description",
        [PrefixEntry(image, lexicon.intro(relation), concept.person_id)],
        scene.image,
        render(prompts["pronoun_question"], relation=relation),
        address(answer, second),
        prefix_variant=variant,
        source_scene_id=scene.scene_id,
        source_scene_hash=scene.image.content_hash,
        scene_person_ids=[p.person_id for p in scene.persons],
        queried_name=relation,
    )


def _question_template(prompts: dict, template: QATemplate, rng: random.Random) -> str:
    if not template.choices:
        return template.question
    choices = list(template.choices)
    rng.shuffle(choices)
    return mc_query(prompts, template.question, choices)


def _one_instance(
    store,
    prompts: dict,
    settings,
    master_seed: int,
    template: QATemplate,
    t_index: int,
    r: int,
    scene: SceneRecord,
    persons: Sequence[PersonConcept],
    info: DualLevelInfo,
    train_scenes: Sequence[SceneRecord],
    pool: NamePool,
    lexicon: PronounLexicon,
) -> TrainingInstance:
    pid = persons[0].person_id
    structure_seed = derive_seed(master_seed, "instance", pid, template.kind, t_index)
    name_rng = derive_rng(master_seed, "names", pid, template.kind, t_index, r)
    if template.kind == "pronoun_description":
        srng = random.Random(structure_seed)
        relation = srng.choice(lexicon.relations)
        return make_pronoun_instance(info, relation, srng, scene, lexicon, prompts, template, settings)

    arng = derive_rng(master_seed, "adversarial", pid, template.kind, t_index, r)
    pick = arng.random()
    adversarial_ok = (
        settings.use_adversarial and len(persons) == 1 and PLACEHOLDER in template.question
    )
    meta = {
        "source_scene_id": scene.scene_id,
        "source_scene_hash": scene.image.content_hash,
        "scene_person_ids": [p.person_id for p in scene.persons],
    }
    if adversarial_ok and pick < settings.adv_name_ratio:
        image, _ = prefix_image(persons[0], arng, settings.aug_prefix_prob, settings.use_augmentation)
        known = name_rng.choice(pool.names)
        return make_adv_name_instance(
            scene.image,
            [PrefixEntry(image, known, pid)],
            pool,
            name_rng,
            prompts,
            question=_question_template(prompts, template, arng),
            kind=template.kind,
            **meta,
        )
    if adversarial_ok and pick < settings.adv_name_ratio + settings.adv_image_ratio:
        try:
            return make_adv_image_instance(
                scene,
                train_scenes,
                pool,
                name_rng,
                prompts,
                question=_question_template(prompts, template, arng),
                kind=template.kind,
            )
        except NoDonorScenes as e:
            LOGGER(__name__).warning(f"{pid}: {e}, keeping the answerable instance")
    return make_named_instance(
        store, prompts, template, scene, persons, pool, structure_seed, name_rng, settings
    )


async def synthesize_scene(
    backends,
    store,
    prompts: dict,
    settings,
    master_seed: int,
    weights: Sequence[Tuple[str, float]],
    scene: SceneRecord,
    infos: Sequence[DualLevelInfo],
    train_scenes: Sequence[SceneRecord],
    pool: NamePool,
    lexicon: PronounLexicon,
) -> Tuple[List[TrainingInstance], List[dict]]:
    """Every training instance one scene contributes, plus per-person failures."""
    instances, failures = [], []
    for info in infos:
        concept = scene.person(info.person_id)
        rng = derive_rng(master_seed, "kinds", info.person_id)
        allowed = [k for k in KINDS if k != "x_person_description" or len(infos) >= 2]
        for kind in sample_kinds(weights, settings.kinds_per_person, rng, allowed):
            if kind == "x_person_description":
                partners = [i for i in infos if i.person_id != info.person_id]
                k = 3 if len(partners) >= 2 and rng.random() < 0.5 else 2
                chosen = [info] + rng.sample(partners, k - 1)
                templates = [x_person_template(chosen, prompts)]
                persons = [scene.person(i.person_id) for i in chosen]
            else:
                try:
                    templates = await generate_qa_templates(
                        backends, prompts, info, kind, derive_seed(master_seed, "templates", info.person_id, kind)
                    )
                except (NoTemplates, ParseFailure) as e:
                    LOGGER(__name__).warning(f"{info.person_id}/{kind}: {e}")
                    failures.append({"person_id": info.person_id, "kind": kind, "reason": type(e).__name__})
                    continue
                persons = [concept]
            repetitions = 1 if kind == "pronoun_description" else settings.name_repetitions
            for t_index, template in enumerate(templates[: settings.max_templates_per_kind]):
                for r in range(repetitions):
                    try:
                        instances.append(
                            _one_instance(
                                store, prompts, settings, master_seed, template, t_index, r,
                                scene, persons, info, train_scenes, pool, lexicon,
                            )
                        )
                    except PvitError as e:
                        LOGGER(__name__).warning(f"{info.person_id}/{kind}: {e}")
                        failures.append({"person_id": info.person_id, "kind": kind, "reason": type(e).__name__})
    log_event("synthesize", scene.scene_id, "synthesized", instances=len(instances), failures=len(failures))
    return instances, failures


def dataset_stats(manifest) -> dict:
    """Counts by kind, answerability, variants and scene person count."""
    if isinstance(manifest, (str, Path)):
        records = read_jsonl(manifest, INSTANCE_SCHEMA, key="instance_id")
    else:
        records, seen = [], set()
        for lineno, record in enumerate(manifest, start=1):
            record = record.to_dict() if isinstance(record, TrainingInstance) else record
            if record["instance_id"] in seen:
                raise CorruptRecord(f"duplicate instance_id {record['instance_id']}", lineno)
            seen.add(record["instance_id"])
            records.append(record)

    by_kind = {k: 0 for k in KINDS}
    prefix_variant, scene_variant = Counter(), Counter()
    persons = {"1": 0, "2": 0, "3": 0, ">=4": 0}
    prefix_size = Counter()
    answerable = 0
    for record in records:
        by_kind[record["kind"]] = by_kind.get(record["kind"], 0) + 1
        answerable += bool(record["answerable"])
        prefix_variant[record.get("prefix_variant", "Crop")] += 1
        scene_variant[record.get("scene_variant", "Original")] += 1
        count = len(record.get("scene_person_ids") or [])
        if count:
            persons[count_bucket(count)] += 1
        prefix_size[str(len(record["prefix"]))] += 1
    total = len(records)
    return {
        "total": total,
        "by_kind": by_kind,
        "answerable": answerable,
        "unanswerable": total - answerable,
        "unanswerable_ratio": round((total - answerable) / total, 4) if total else 0.0,
        "prefix_variant": dict(sorted(prefix_variant.items())),
        "scene_variant": dict(sorted(scene_variant.items())),
        "person_count": persons,
        "prefix_size": dict(sorted(prefix_size.items())),
    }


def instance_violations(record: dict) -> List[str]:
    """Serialization and soundness checks for one pvit.jsonl record."""
    rules = []
    start, length = record["supervision"]
    if supervised_text(record["serialized"], (start, length)) != record["response"]:
        rules.append("supervision_span_mismatch")
    if PLACEHOLDER in record["serialized"]:
        rules.append("placeholder_leak")
    try:
        intros, query, response = parse_serialized(record["serialized"])
        if intros != [e["intro"] for e in record["prefix"]] or query != record["query"] or response != record["response"]:
            rules.append("round_trip_mismatch")
    except PreconditionError:
        rules.append("wrapper_grammar")
    variant = record.get("prefix_variant")
    if variant == "AdvName":
        taken = set()
        for entry in record["prefix"]:
            taken.add(entry["intro"])
            taken.update(entry["intro"].split())
        if not record.get("queried_name") or record["queried_name"] in taken:
            rules.append("adv_name_introduced_in_prefix")
    if variant == "AdvImg":
        ids = {e.get("person_id") for e in record["prefix"]}
        if ids & set(record.get("scene_person_ids") or []):
            rules.append("adv_image_person_in_scene")
    if variant in ("AdvName", "AdvImg") and record["answerable"]:
        rules.append("adversarial_marked_answerable")
    return rules

import random

import pytest

from prompts import get_prompts
from PvitForge.pipeline.adversarial import (
    donor_persons,
    make_adv_image_instance,
    make_adv_name_instance,
    unknown_name,
)
from PvitForge.pipeline.evaluation import detect_rejection
from PvitForge.pipeline.names import NamePool
from PvitForge.pipeline.synthesis import instance_violations
from PvitForge.pipeline.types import BBox, ImageRef, PersonConcept, PrefixEntry, SceneRecord
from PvitForge.utils.exceptions import NoDonorScenes, PoolExhausted

PROMPTS = get_prompts()


def ref(tag: str) -> ImageRef:
    return ImageRef(f"{tag}.png", tag.ljust(64, "0")[:64], 32, 90)


def scene(scene_id: str, n_persons: int, image_tag: str = None) -> SceneRecord:
    persons = [
        PersonConcept(
            f"{scene_id}_p{i}",
            BBox(4 + 39 * i, 20, 32, 90),
            BBox(15 + 39 * i, 21, 10, 18),
            ref(f"{scene_id}_p{i}_crop"),
            ref(f"{scene_id}_p{i}_face"),
        )
        for i in range(n_persons)
    ]
    return SceneRecord(scene_id, ref(image_tag or scene_id), persons)


SCENES = [scene("street", 2), scene("park", 1), scene("beach", 3), scene("office", 4), scene("kitchen", 2)]


def test_adv_name_instances_never_name_an_introduced_person():
    pool = NamePool.load()
    for seed in range(1000):
        rng = random.Random(seed)
        record = rng.choice(SCENES)
        names = rng.sample(pool.names, record.person_count)
        prefix = [PrefixEntry(p.face_crop, n, p.person_id) for p, n in zip(record.persons, names)]
        instance = make_adv_name_instance(record.image, prefix, pool, rng, PROMPTS)
        assert instance.queried_name not in names
        assert instance.queried_name in instance.query
        assert not instance.answerable
        assert instance.prefix_variant == "AdvName"
        assert instance.adversarial == "AdvName"
        assert detect_rejection(instance.response, PROMPTS["refusal_patterns"])
        assert instance_violations(instance.to_dict()) == []


def test_adv_image_instances_borrow_someone_absent():
    pool = NamePool.load()
    for seed in range(1000):
        rng = random.Random(seed)
        record = rng.choice(SCENES)
        instance = make_adv_image_instance(record, SCENES, pool, rng, PROMPTS)
        (entry,) = instance.prefix
        assert entry.person_id not in {p.person_id for p in record.persons}
        assert entry.image.content_hash != record.image.content_hash
        assert instance.scene == record.image
        assert instance.source_scene_id == record.scene_id
        assert instance.query == f"Please describe {entry.intro} in the image."
        assert detect_rejection(instance.response, PROMPTS["refusal_patterns"])
        assert instance_violations(instance.to_dict()) == []


def test_adv_instances_accept_a_question_template():
    pool = NamePool(["Lisa", "Tom", "Omar"])
    prefix = [PrefixEntry(ref("face"), "Lisa", "street_p0")]
    instance = make_adv_name_instance(
        ref("street"), prefix, pool, random.Random(1), PROMPTS, question="What is <name> wearing?", kind="freeform"
    )
    assert instance.kind == "freeform"
    assert instance.query in ("What is Tom wearing?", "What is Omar wearing?")


def test_duplicate_scenes_are_not_donors():
    original = scene("street", 2)
    copy = scene("street_copy", 1, image_tag="street")
    assert donor_persons(original, [original, copy]) == []
    with pytest.raises(NoDonorScenes):
        make_adv_image_instance(original, [original, copy], NamePool(["Lisa"]), random.Random(0), PROMPTS)


def test_unknown_name_needs_a_free_name():
    prefix = [PrefixEntry(ref("face"), "Lisa"), PrefixEntry(ref("face2"), "Tom")]
    assert unknown_name(prefix, NamePool(["Lisa", "Tom", "Omar"]), random.Random(0)) == "Omar"
    with pytest.raises(PoolExhausted):
        unknown_name(prefix, NamePool(["Lisa", "Tom"]), random.Random(0))


def test_violations_flag_an_introduced_adv_name():
    pool = NamePool(["Lisa", "Tom"])
    prefix = [PrefixEntry(ref("face"), "Lisa", "street_p0")]
    record = make_adv_name_instance(ref("street"), prefix, pool, random.Random(0), PROMPTS).to_dict()
    record["queried_name"] = "Lisa"
    assert "adv_name_introduced_in_prefix" in instance_violations(record)
    record["answerable"] = True
    assert "adversarial_marked_answerable" in instance_violations(record)

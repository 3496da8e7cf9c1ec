import random
import re
from dataclasses import replace

import pytest

from prompts import get_prompts
from PvitForge.core.settings import SynthesisSettings, kind_weights
from PvitForge.pipeline.adversarial import make_adv_name_instance
from PvitForge.pipeline.names import NamePool, instantiate
from PvitForge.pipeline.serializer import build_instance
from PvitForge.pipeline.synthesis import (
    choose_scene_variant,
    dataset_stats,
    instance_violations,
    make_named_instance,
    make_pronoun_instance,
    sample_kinds,
    synthesize_scene,
    x_person_template,
)
from PvitForge.pipeline.types import KINDS, CompositeScene, ImageRef, PrefixEntry, QATemplate
from PvitForge.utils.exceptions import CorruptRecord, UnknownRelation

SMALL_POOL = ["Lisa", "Tom", "Omar", "Yuki", "Ravi", "Nina", "Zoe", "Igor", "Hana", "Paul"]

PROMPTS = get_prompts()
SCENE = ImageRef("scene.png", "a" * 64, 160, 120)
SCENE_FACE = ImageRef("face.png", "b" * 64, 10, 18)

FREEFORM = QATemplate("freeform", "What is <name> wearing?", "<name> is wearing a red jacket.")
MULTICHOICE = QATemplate(
    "multichoice",
    "What color is <name>'s jacket?",
    "Red",
    choices=("Red", "Blue", "Green", "Yellow"),
)


def test_sample_kinds_draws_distinct_allowed_kinds():
    weights = [("description", 0.5), ("freeform", 0.3), ("witty", 0.2), ("reasoning", 0.0)]
    for seed in range(200):
        kinds = sample_kinds(weights, 2, random.Random(seed))
        assert len(kinds) == len(set(kinds)) == 2
        assert "reasoning" not in kinds
    assert sorted(sample_kinds(weights, 10, random.Random(0))) == ["description", "freeform", "witty"]
    assert sample_kinds(weights, 3, random.Random(0), allowed=["witty"]) == ["witty"]
    assert sample_kinds(weights, 3, random.Random(4)) == sample_kinds(weights, 3, random.Random(4))


def normalized(instance) -> str:
    text = instance.serialized
    for i, name in enumerate(instance.names):
        text = re.sub(rf"\b{re.escape(name)}\b", f"<P{i}>", text)
    return text


@pytest.mark.parametrize("template", [FREEFORM, MULTICHOICE])
async def test_name_repetitions_only_change_the_names(curated, store, prompts, template):
    scenes, _ = curated
    scene = scenes["trio"]
    pool = NamePool(SMALL_POOL)
    settings = SynthesisSettings(extra_prefix_prob=1.0)
    runs = [
        make_named_instance(
            store, prompts, template, scene, [scene.persons[1]], pool, 42, random.Random(seed), settings
        )
        for seed in range(5)
    ]
    assert len({tuple(r.names) for r in runs}) > 1
    assert len({normalized(r) for r in runs}) == 1
    assert len({r.scene for r in runs}) == 1
    assert len({tuple(e.image for e in r.prefix) for r in runs}) == 1
    assert all(len(r.prefix) == 2 for r in runs)
    assert all(instance_violations(r.to_dict()) == [] for r in runs)


async def test_multichoice_instance_answers_with_the_gold_letter(curated, store, prompts):
    scenes, _ = curated
    scene = scenes["two_people"]
    instance = make_named_instance(
        store, prompts, MULTICHOICE, scene, [scene.persons[0]], NamePool(SMALL_POOL), 7, random.Random(1),
        SynthesisSettings(),
    )
    assert instance.response == instance.gold
    assert instance.choices[ord(instance.gold) - ord("A")] == "Red"
    assert sorted(instance.choices) == ["Blue", "Green", "Red", "Yellow"]
    assert f"What color is {instance.queried_name}'s jacket?" in instance.query


async def test_freeform_instance_is_the_instantiated_template(curated, store, prompts):
    scenes, _ = curated
    scene = scenes["two_people"]
    instance = make_named_instance(
        store, prompts, FREEFORM, scene, [scene.persons[1]], NamePool(SMALL_POOL), 9, random.Random(2),
        SynthesisSettings(),
    )
    assert (instance.query, instance.response) == instantiate(FREEFORM, instance.queried_name)


async def test_scene_variants(curated, store):
    scenes, _ = curated
    pair, trio = scenes["two_people"], scenes["trio"]
    assert choose_scene_variant(store, pair, random.Random(0), (1.0, 0.0, 0.0)) == pair.image

    two = choose_scene_variant(store, pair, random.Random(0), (0.0, 1.0, 0.0), target="two_people_p1")
    assert isinstance(two, CompositeScene)
    assert sorted(two.slots) == ["two_people_p0", "two_people_p1"]

    # too few persons for three slots: the original scene is kept
    assert choose_scene_variant(store, pair, random.Random(0), (0.0, 0.0, 1.0)) == pair.image

    three = choose_scene_variant(store, trio, random.Random(0), (0.0, 0.0, 1.0), target="trio_p2")
    assert len(three.slots) == 3 and "trio_p2" in three.slots


async def test_composite_scene_instance_lists_its_slots(curated, store, prompts):
    scenes, _ = curated
    scene = scenes["trio"]
    settings = SynthesisSettings(scene_variant_probs=(0.0, 0.0, 1.0), extra_prefix_prob=0.0)
    instance = make_named_instance(
        store, prompts, MULTICHOICE, scene, [scene.persons[0]], NamePool(SMALL_POOL), 3, random.Random(3), settings
    )
    assert instance.scene_variant == "AugSc3"
    assert sorted(instance.scene_person_ids) == ["trio_p0", "trio_p1", "trio_p2"]
    assert instance.scene != scene.image


async def test_pronoun_instance(curated, prompts, ctx):
    scenes, infos = curated
    scene = scenes["two_people"]
    lexicon = ctx.pronouns()
    instance = make_pronoun_instance(infos["two_people_p0"], "my dad", random.Random(0), scene, lexicon, prompts)
    assert [e.intro for e in instance.prefix] == ["this is my dad"]
    assert instance.query == "Can you describe my dad in the image?"
    assert instance.response == (
        "In the photo, your dad is a man wearing a red jacket. Your dad is standing upright and looking ahead."
    )
    assert instance.kind == "pronoun_description"
    with pytest.raises(UnknownRelation):
        make_pronoun_instance(infos["two_people_p0"], "my llama", random.Random(0), scene, lexicon, prompts)


async def test_x_person_instances(curated, store, prompts):
    scenes, infos = curated
    scene = scenes["trio"]
    chosen = [infos[p.person_id] for p in scene.persons]
    template = x_person_template(chosen, prompts)
    assert template.placeholders == ("<name1>", "<name2>", "<name3>")
    assert template.question == "Please describe <name1>, <name2> and <name3> in the image."
    assert x_person_template(chosen[:2], prompts).question == "Please describe <name1> and <name2> in the image."

    instance = make_named_instance(
        store, prompts, template, scene, scene.persons, NamePool(SMALL_POOL), 5, random.Random(5), SynthesisSettings()
    )
    assert len(instance.prefix) == 3
    assert len(set(instance.names)) == 3
    assert all(name in instance.query and name in instance.response for name in instance.names)
    assert instance_violations(instance.to_dict()) == []
    assert instance.scene_variant == "AugSc3"
    assert sorted(instance.scene_person_ids) == ["trio_p0", "trio_p1", "trio_p2"]
    assert instance.scene != scene.image


async def test_x_person_scene_holds_exactly_the_chosen_persons(curated, store, prompts):
    scenes, infos = curated
    scene = scenes["trio"]
    pair = scene.persons[::2]
    template = x_person_template([infos[p.person_id] for p in pair], prompts)
    # the variant probabilities never apply: the question needs every person in view
    settings = SynthesisSettings(scene_variant_probs=(1.0, 0.0, 0.0))
    for seed in range(5):
        instance = make_named_instance(
            store, prompts, template, scene, pair, NamePool(SMALL_POOL), seed, random.Random(seed), settings
        )
        assert instance.scene_variant == "AugSc2"
        assert sorted(instance.scene_person_ids) == ["trio_p0", "trio_p2"]
        assert len(instance.prefix) == 2


async def synthesize(ctx, scenes, infos, stem, settings=None):
    scene = scenes[stem]
    scene_infos = sorted((i for i in infos.values() if i.scene_id == stem), key=lambda i: i.person_id)
    return await synthesize_scene(
        ctx.backends, ctx.store, ctx.prompts, settings or ctx.cfg.synthesis, 0, kind_weights(ctx.cfg),
        scene, scene_infos, list(scenes.values()), ctx.name_pool(), ctx.pronouns(),
    )


async def test_synthesized_scene_is_sound_and_seeded(curated, ctx):
    scenes, infos = curated
    instances, failures = await synthesize(ctx, scenes, infos, "trio")
    assert instances
    assert failures == []
    assert all(instance_violations(i.to_dict()) == [] for i in instances)
    assert {i.kind for i in instances} <= set(KINDS)
    again, _ = await synthesize(ctx, scenes, infos, "trio")
    assert [i.instance_id for i in again] == [i.instance_id for i in instances]


async def test_adversarial_switch(curated, ctx):
    scenes, infos = curated
    off = replace(ctx.cfg.synthesis, use_adversarial=False)
    instances, _ = await synthesize(ctx, scenes, infos, "quartet", off)
    assert instances and all(i.answerable for i in instances)

    always = replace(ctx.cfg.synthesis, adv_name_ratio=1.0, adv_image_ratio=0.0)
    instances, _ = await synthesize(ctx, scenes, infos, "quartet", always)
    skip = ("pronoun_description", "x_person_description", "personalized_holistic")
    single = [i for i in instances if i.kind not in skip]
    assert single and all(i.prefix_variant == "AdvName" and not i.answerable for i in single)


def stat_instances(n_answerable, n_unanswerable):
    face = PrefixEntry(SCENE_FACE, "Lisa", "s_p0")
    instances = [
        build_instance("freeform", [face], SCENE, f"Question {i} about Lisa?", "An answer.", scene_person_ids=["s_p0"])
        for i in range(n_answerable)
    ]
    pool = NamePool(SMALL_POOL)
    instances += [
        make_adv_name_instance(SCENE, [face], pool, random.Random(i), PROMPTS, question=f"Where is <name> ({i})?")
        for i in range(n_unanswerable)
    ]
    return instances


def test_dataset_stats():
    stats = dataset_stats(stat_instances(7, 3))
    assert stats["total"] == 10
    assert stats["unanswerable"] == 3
    assert stats["unanswerable_ratio"] == 0.3
    assert stats["by_kind"]["freeform"] == 7
    assert stats["by_kind"]["description"] == 3
    assert stats["prefix_variant"] == {"AdvName": 3, "Crop": 7}
    assert stats["person_count"]["1"] == 7
    assert stats["prefix_size"] == {"1": 10}


def test_dataset_stats_edge_cases():
    empty = dataset_stats([])
    assert empty["total"] == 0 and empty["unanswerable_ratio"] == 0.0
    twice = stat_instances(1, 0) * 2
    with pytest.raises(CorruptRecord):
        dataset_stats(twice)

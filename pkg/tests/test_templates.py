import json

import pytest

from PvitForge import app
from PvitForge.pipeline.templates import (
    generate_qa_templates,
    normalize_quotes,
    parse_mc_response,
    parse_qa_response,
    scan_objects,
)
from PvitForge.pipeline.types import KINDS, DualLevelInfo
from PvitForge.utils.exceptions import NoTemplates, ParseFailure, PreconditionError
from tests.conftest import make_config

INFO = DualLevelInfo(
    scene_id="two_people",
    person_id="two_people_p0",
    personal="In the photo, <name> is a man wearing a red jacket. <name> is standing upright and looking ahead.",
    holistic="The image shows a man and a girl.",
    fused="The image shows <name> and a girl.",
)


def test_worked_example_parses_to_four_templates(prompts):
    templates = parse_mc_response(prompts["mc_example_output"])
    assert [t.question for t in templates] == [
        "What color shirt is <name> wearing?",
        "What color are <name>'s jeans?",
        "What is <name> doing with her hands?",
        "What accessory is <name> wearing?",
    ]
    assert [t.choices for t in templates] == [
        ("Red", "White", "Blue", "Black"),
        ("Black", "Green", "Blue", "Yellow"),
        ("Holding a bag", "Hands on her hips", "Waving", "In her pockets"),
        ("A hat", "A scarf", "A black bag", "Sunglasses"),
    ]
    assert [t.answer for t in templates] == ["White", "Blue", "Hands on her hips", "A black bag"]
    assert [t.gold_letter for t in templates] == ["B", "C", "B", "C"]
    assert all(t.placeholders == ("<name>",) for t in templates)


def test_curly_quotes_and_nested_brackets():
    text = "[[{“question”: “Is <name> happy?”, “choices”: [“Yes”, “No”, “Maybe”, “Unknown”], “answer”: “Yes”}]]"
    assert "“" not in normalize_quotes(text)
    (template,) = parse_mc_response(text)
    assert template.gold_letter == "A"


def test_braces_inside_strings_do_not_split_objects():
    text = '[{"question": "What is {odd}?", "answer": "x"}] [{"question": "b", "answer": "y"}]'
    assert len(scan_objects(text)) == 2


def test_invalid_mc_items_are_dropped():
    items = [
        {"question": "Q1 <name>?", "choices": ["a", "b", "c"], "answer": "a"},
        {"question": "Q2 <name>?", "choices": ["a", "b", "c", "d"], "answer": "e"},
        {"question": "Q3 <name>?", "choices": ["a", "a", "c", "d"], "answer": "a"},
        {"question": "Q4 <name>?", "choices": ["a", "b", "c", "d"], "answer": "d"},
    ]
    text = ", ".join(json.dumps([i]) for i in items)
    (kept,) = parse_mc_response(text)
    assert kept.question == "Q4 <name>?"
    assert kept.gold_letter == "D"


def test_qa_items_must_name_the_person():
    text = '[[{"question": "What is the weather?", "answer": "Sunny."}, {"question": "Who is <name>?", "answer": "<name> is a man."}]]'
    (kept,) = parse_qa_response(text, "freeform")
    assert kept.question == "Who is <name>?"


@pytest.mark.parametrize("text", ["", "no json here", "[[{question: broken ((( ]]"])
def test_unparsable_responses(text):
    with pytest.raises(ParseFailure):
        parse_mc_response(text)


@pytest.mark.parametrize("kind", [k for k in KINDS if k != "x_person_description"])
async def test_every_kind_generates_templates(backends, prompts, kind):
    templates = await generate_qa_templates(backends, prompts, INFO, kind, seed=1)
    assert templates
    assert all(t.kind == kind for t in templates)
    if kind == "multichoice":
        assert all(len(t.choices) == 4 for t in templates)
        assert templates[0].answer == "Red"
    if kind == "description":
        assert templates[0].answer == INFO.personal
    if kind == "personalized_holistic":
        assert templates[0].question == "Describe this image."
        assert templates[0].answer == INFO.fused


async def test_malformed_output_is_retried_once(tmp_path, corpus):
    ctx = app.context(make_config(tmp_path, corpus, backends={"fixture": {"malformed_times": 1}}))
    templates = await generate_qa_templates(ctx.backends, ctx.prompts, INFO, "freeform", seed=1)
    assert len(templates) == 2
    assert ctx.backends.upstream_calls["complete"] == 2


async def test_malformed_twice_is_a_parse_failure(tmp_path, corpus):
    ctx = app.context(make_config(tmp_path, corpus, backends={"fixture": {"malformed_times": 2}}))
    with pytest.raises(ParseFailure):
        await generate_qa_templates(ctx.backends, ctx.prompts, INFO, "multichoice", seed=1)


class CannedBackends:
    def __init__(self, text):
        self.text = text

    async def complete_text(self, prompt, seed=0):
        return self.text


async def test_nothing_usable_is_no_templates(prompts):
    canned = CannedBackends('[[{"question": "Is <name> tall?", "choices": ["Yes", "No", "Maybe"], "answer": "Yes"}]]')
    with pytest.raises(NoTemplates):
        await generate_qa_templates(canned, prompts, INFO, "multichoice", seed=1)


async def test_empty_list_is_a_parse_failure(prompts):
    with pytest.raises(ParseFailure):
        await generate_qa_templates(CannedBackends("[]"), prompts, INFO, "multichoice", seed=1)


async def test_generation_preconditions(backends, prompts):
    with pytest.raises(PreconditionError):
        await generate_qa_templates(backends, prompts, INFO, "x_person_description", seed=1)
    with pytest.raises(PreconditionError):
        await generate_qa_templates(backends, prompts, INFO, "poetry", seed=1)
    bare = DualLevelInfo("s", "s_p0", "A man.", "A scene.", "A man.")
    with pytest.raises(PreconditionError):
        await generate_qa_templates(backends, prompts, bare, "description", seed=1)

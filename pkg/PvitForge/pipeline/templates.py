"""QA template generation and tolerant parsing of the LLM's bracketed output."""

import json
import re
from typing import List, Optional

from prompts import render
from PvitForge.logging import LOGGER
from PvitForge.pipeline.types import KINDS, PLACEHOLDER, DualLevelInfo, QATemplate
from PvitForge.utils.exceptions import NoTemplates, ParseFailure, PreconditionError
from PvitForge.utils.seeds import derive_seed

PLACEHOLDER_TOKEN = re.compile(r"<[A-Za-z_][A-Za-z0-9_]*>")

_QUOTES = {
    "“": '"',
    "”": '"',
    "„": '"',
    "″": '"',
    "``": '"',
    "''": '"',
    "‘": "'",
    "’": "'",
}

# Kinds whose Information is the person-only description.
PERSONAL_KINDS = ("description", "multichoice", "pronoun_description")


def normalize_quotes(text: str) -> str:
    for src, dst in _QUOTES.items():
        text = text.replace(src, dst)
    return text


def scan_objects(text: str) -> List[str]:
    """Every balanced top-level {...} span, string-aware."""
    found, depth, start = [], 0, None
    in_string, escaped = False, False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"' and depth:
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth:
            depth -= 1
            if depth == 0:
                found.append(text[start : i + 1])
    return found


def _clean(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def placeholders_of(*texts: str) -> tuple:
    seen = []
    for text in texts:
        for token in PLACEHOLDER_TOKEN.findall(text):
            if token not in seen:
                seen.append(token)
    return tuple(seen)


def _objects(text: str) -> List[dict]:
    if not text or not text.strip():
        raise ParseFailure("empty response")
    spans = scan_objects(normalize_quotes(text))
    if not spans:
        raise ParseFailure("no JSON objects in response")
    items = []
    for span in spans:
        try:
            item = json.loads(span)
        except json.JSONDecodeError as e:
            LOGGER(__name__).warning(f"Dropping unparsable item: {e.msg}")
            continue
        if isinstance(item, dict):
            items.append(item)
    if not items:
        raise ParseFailure("no parsable JSON objects in response")
    return items


def parse_mc_response(text: str) -> List[QATemplate]:
    templates = []
    for item in _objects(text):
        question, answer, choices = item.get("question"), item.get("answer"), item.get("choices")
        if not isinstance(question, str) or not isinstance(answer, str) or not isinstance(choices, list):
            LOGGER(__name__).warning("Dropping MC item without question/choices/answer")
            continue
        if not all(isinstance(c, str) for c in choices):
            LOGGER(__name__).warning(f"Dropping MC item with non-text choices: {question!r}")
            continue
        question = _clean(question)
        answer = _clean(answer)
        choices = [_clean(c) for c in choices]
        if len(choices) != 4 or len(set(choices)) != 4:
            LOGGER(__name__).warning(f"Dropping MC item without 4 distinct choices: {question!r}")
            continue
        if choices.count(answer) != 1:
            LOGGER(__name__).warning(f"Dropping MC item whose answer is not a choice: {question!r}")
            continue
        templates.append(
            QATemplate(
                kind="multichoice",
                question=question,
                answer=answer,
                choices=tuple(choices),
                placeholders=placeholders_of(question, answer, *choices),
            )
        )
    return templates


def parse_qa_response(text: str, kind: str) -> List[QATemplate]:
    templates = []
    for item in _objects(text):
        question, answer = item.get("question"), item.get("answer")
        if not isinstance(question, str) or not isinstance(answer, str):
            LOGGER(__name__).warning(f"Dropping {kind} item without question/answer")
            continue
        question, answer = _clean(question), answer.strip()
        if not question or not answer:
            LOGGER(__name__).warning(f"Dropping empty {kind} item")
            continue
        placeholders = placeholders_of(question, answer)
        if PLACEHOLDER not in placeholders:
            LOGGER(__name__).warning(f"Dropping {kind} item that never names the person: {question!r}")
            continue
        templates.append(QATemplate(kind=kind, question=question, answer=answer, placeholders=placeholders))
    return templates


def generation_prompt(prompts: dict, info: DualLevelInfo, kind: str) -> str:
    information = info.personal if kind in PERSONAL_KINDS else info.fused
    if kind == "multichoice":
        return render(
            prompts["multichoice"],
            example_information=prompts["mc_example_information"].strip(),
            example_output=prompts["mc_example_output"].strip(),
            information=information.strip(),
        )
    return render(
        prompts["qa_generation"],
        instruction=prompts["qa_instructions"][kind],
        category=kind,
        information=information.strip(),
    )


async def generate_qa_templates(
    backends, prompts: dict, info: DualLevelInfo, kind: str, seed: int, retries: int = 1
) -> List[QATemplate]:
    if kind not in KINDS:
        raise PreconditionError(f"unknown kind {kind}")
    if kind == "x_person_description":
        raise PreconditionError("x_person_description templates are built from several persons")
    if PLACEHOLDER not in info.personal or PLACEHOLDER not in info.fused:
        raise PreconditionError(f"{info.person_id}: descriptions lack {PLACEHOLDER}")
    prompt = generation_prompt(prompts, info, kind)
    error: Optional[ParseFailure] = None
    for attempt in range(retries + 1):
        text = await backends.complete_text(prompt, seed if attempt == 0 else derive_seed(seed, "retry", attempt))
        try:
            templates = (
                parse_mc_response(text) if kind == "multichoice" else parse_qa_response(text, kind)
            )
        except ParseFailure as e:
            LOGGER(__name__).warning(f"{info.person_id}/{kind}: {e}, attempt {attempt + 1}")
            error = e
            continue
        if not templates:
            raise NoTemplates(f"{info.person_id}/{kind}: every generated item was invalid")
        return templates
    raise ParseFailure(f"{info.person_id}/{kind}: {error}")

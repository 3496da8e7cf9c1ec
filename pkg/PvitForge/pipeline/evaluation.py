"""Querying a model under test over the benchmark and scoring what it said."""

import asyncio
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from prompts import load_lexicon, render
from PvitForge.logging import LOGGER, log_event
from PvitForge.pipeline.serializer import serialize_prefix
from PvitForge.pipeline.synthesis import mc_query
from PvitForge.pipeline.types import (
    CHOICE_LETTERS,
    DESC_UNANSWERABLE,
    MC_ANSWERABLE,
    MC_UNANSWERABLE,
    BenchItem,
    BenchType,
    ModelResponse,
)
from PvitForge.utils.exceptions import BackendError, MissingResponses
from PvitForge.utils.formatters import COUNT_BUCKETS, count_bucket, macro_avg, percent, round2
from PvitForge.utils.manifest import RESPONSE_SCHEMA, append_jsonl, read_jsonl, write_jsonl

_LEADING = re.compile(r"^\s*(?:\(([A-D])\)|([A-D])(?:[.):]|\s*$))")
_ANSWER_IS = re.compile(r"(?i:answer\s*(?:is|:))\s*:?\s*\(?([A-D])(?![A-Za-z])")
_PAREN = re.compile(r"\(([A-D])\)")


def extract_choice(raw: str, choices: Sequence[str]) -> Optional[str]:
    """Choice letter named by a free-form answer, or None when it is unclear."""
    letters = CHOICE_LETTERS[: len(choices)]
    text = raw.strip()
    bare = text.rstrip(".").strip().lower()
    for letter, choice in zip(letters, choices):
        if bare == choice.strip().rstrip(".").lower():
            return letter
    for pattern in (_LEADING, _ANSWER_IS):
        match = pattern.search(text)
        if match:
            letter = next(g for g in match.groups() if g)
            if letter in letters:
                return letter
    named = {m for m in _PAREN.findall(text) if m in letters}
    if len(named) == 1:
        return named.pop()
    lowered = text.lower()
    hits = [i for i, c in enumerate(choices) if c.strip() and c.strip().lower() in lowered]
    # "red" inside "red jacket" is not a second mention.
    hits = [
        i for i in hits
        if not any(j != i and choices[i].strip().lower() in choices[j].strip().lower() for j in hits)
    ]
    if len(hits) == 1:
        return letters[hits[0]]
    return None


def detect_rejection(raw: str, patterns: Optional[Sequence[str]] = None) -> bool:
    """Keyword rule: any refusal pattern, case-insensitive.

    "I'm sorry for the confusion, Lisa is on the left." counts as a refusal.
    That false-positive class is what the judge backend is for.
    """
    patterns = load_lexicon() if patterns is None else patterns
    return any(re.search(p, raw, re.I) for p in patterns)


async def judge_rejection(backends, prompts: dict, raw: str) -> bool:
    verdict = await backends.complete_text(render(prompts["judge"], response=raw.strip() or "(empty)"))
    return verdict.strip().lower().startswith("yes")


async def rejudge(backends, prompts: dict, response: ModelResponse) -> None:
    """Replace the keyword verdict with the judge's; keep it when the judge is down."""
    try:
        response.rejected = await judge_rejection(backends, prompts, response.raw)
    except BackendError as e:
        LOGGER(__name__).warning(f"{response.item_id}: judge unavailable, keeping the keyword verdict ({e})")


def item_query(prompts: dict, item: BenchItem) -> str:
    if item.choices:
        return mc_query(prompts, item.question, item.choices)
    return item.question


def annotate(item: BenchItem, raw: str, patterns: Sequence[str]) -> ModelResponse:
    response = ModelResponse(item_id=item.item_id, raw=raw)
    if item.bench_type.is_mc:
        response.extracted = extract_choice(raw, item.choices or [])
        response.parse_failed = response.extracted is None and not item.bench_type.is_adversarial
    response.rejected = detect_rejection(raw, patterns)
    return response


async def _respond(backends, prompts: dict, cfg, item: BenchItem, patterns, sem: asyncio.Semaphore) -> ModelResponse:
    async with sem:
        try:
            raw = await asyncio.wait_for(
                backends.query_model_under_test(
                    serialize_prefix([e.intro for e in item.prefix]),
                    [e.image for e in item.prefix],
                    item.scene,
                    item_query(prompts, item),
                    item.item_id,
                ),
                timeout=cfg.timeout,
            )
        except (BackendError, asyncio.TimeoutError) as e:
            LOGGER(__name__).warning(f"{item.item_id}: no response ({type(e).__name__})")
            log_event("eval", item.item_id, "no_response", reason=type(e).__name__)
            return ModelResponse(
                item_id=item.item_id,
                raw="",
                no_response=True,
                parse_failed=item.bench_type.is_mc and not item.bench_type.is_adversarial,
            )
        response = annotate(item, raw, patterns)
        if cfg.judge:
            await rejudge(backends, prompts, response)
        if item.bench_type == BenchType.DescAnswerable and item.target_person_image and raw.strip():
            try:
                response.similarity = await backends.image_text_similarity(item.target_person_image, raw)
            except BackendError as e:
                LOGGER(__name__).warning(f"{item.item_id}: similarity unavailable ({e})")
        log_event("eval", item.item_id, "answered", extracted=response.extracted, rejected=response.rejected)
        return response


async def run_eval(backends, prompts: dict, items: Sequence[BenchItem], cfg, responses_path) -> List[ModelResponse]:
    """One response per item, persisted as it arrives.

    Responses already in `responses_path` are reused and re-annotated with
    the current refusal lexicon (and the judge, when enabled); only missing
    or no-response items are asked.
    """
    responses_path = Path(responses_path)
    patterns = load_lexicon(cfg.refusal_lexicon)
    stored: Dict[str, ModelResponse] = {}
    if responses_path.exists():
        for record in read_jsonl(responses_path, RESPONSE_SCHEMA):
            stored[record["item_id"]] = ModelResponse.from_dict(record)

    results: Dict[str, ModelResponse] = {}
    pending, judged = [], []
    for item in items:
        previous = stored.get(item.item_id)
        if previous is None or previous.no_response:
            pending.append(item)
            continue
        fresh = annotate(item, previous.raw, patterns)
        fresh.similarity = previous.similarity
        results[item.item_id] = fresh
        if cfg.judge:
            judged.append(fresh)

    sem = asyncio.Semaphore(cfg.concurrency)

    async def ask(item: BenchItem):
        response = await _respond(backends, prompts, cfg, item, patterns, sem)
        append_jsonl(responses_path, response.to_dict())
        results[item.item_id] = response

    async def judge(response: ModelResponse):
        async with sem:
            await rejudge(backends, prompts, response)

    await asyncio.gather(*(judge(r) for r in judged), *(ask(item) for item in pending))
    ordered = [results[item.item_id] for item in items]
    write_jsonl(responses_path, (r.to_dict() for r in ordered))
    log_event(
        "eval", "-", "responses_ready",
        asked=len(pending), reused=len(items) - len(pending),
        no_response=sum(r.no_response for r in ordered),
    )
    return ordered


def load_responses(path) -> List[ModelResponse]:
    return [ModelResponse.from_dict(r) for r in read_jsonl(path, RESPONSE_SCHEMA, key="item_id")]


@dataclass
class EvalReport:
    mc_answerable: Dict[str, Optional[float]] = field(default_factory=dict)
    mc_unanswerable: Dict[str, Optional[float]] = field(default_factory=dict)
    mc_by_count: Dict[str, Optional[float]] = field(default_factory=dict)
    desc_similarity: Dict[str, Optional[float]] = field(default_factory=dict)
    desc_rejection: Dict[str, Optional[float]] = field(default_factory=dict)
    items: Dict[str, int] = field(default_factory=dict)
    no_response: int = 0
    parse_failed: int = 0

    @property
    def mc_answerable_avg(self) -> Optional[float]:
        return macro_avg(self.mc_answerable.values())

    @property
    def mc_unanswerable_avg(self) -> Optional[float]:
        return macro_avg(self.mc_unanswerable.values())

    @property
    def mc_by_count_avg(self) -> Optional[float]:
        return macro_avg(self.mc_by_count.values())

    @property
    def desc_similarity_avg(self) -> Optional[float]:
        return macro_avg(self.desc_similarity.values())

    @property
    def desc_rejection_avg(self) -> Optional[float]:
        return macro_avg(self.desc_rejection.values())

    @property
    def empty(self) -> bool:
        return not any(self.items.values())

    def to_dict(self) -> dict:
        return {
            "mc": {
                "answerable": dict(self.mc_answerable),
                "answerable_avg": self.mc_answerable_avg,
                "unanswerable": dict(self.mc_unanswerable),
                "unanswerable_avg": self.mc_unanswerable_avg,
                "by_person_count": dict(self.mc_by_count),
                "by_person_count_avg": self.mc_by_count_avg,
            },
            "description": {
                "similarity": dict(self.desc_similarity),
                "similarity_avg": self.desc_similarity_avg,
                "rejection": dict(self.desc_rejection),
                "rejection_avg": self.desc_rejection_avg,
            },
            "items": dict(self.items),
            "no_response": self.no_response,
            "parse_failed": self.parse_failed,
        }


def _correct(item: BenchItem, response: ModelResponse) -> bool:
    if item.bench_type.is_adversarial:
        return response.rejected
    return response.extracted is not None and response.extracted == item.gold


def score(items: Sequence[BenchItem], responses: Sequence[ModelResponse]) -> EvalReport:
    """Pure function of the manifest and stored responses."""
    by_id = {r.item_id: r for r in responses}
    missing = [item.item_id for item in items if item.item_id not in by_id]
    if missing:
        raise MissingResponses(f"{len(missing)} item(s) have no stored response, e.g. {missing[0]}")

    hits: Dict[BenchType, List[bool]] = {t: [] for t in BenchType}
    count_hits: Dict[str, List[bool]] = {b: [] for b in COUNT_BUCKETS}
    similarity: Dict[str, List[float]] = {b: [] for b in COUNT_BUCKETS}
    report = EvalReport()
    for item in items:
        response = by_id[item.item_id]
        report.no_response += response.no_response
        if item.bench_type.is_mc and response.parse_failed:
            report.parse_failed += 1
        if item.bench_type == BenchType.DescAnswerable:
            similarity[count_bucket(item.person_count)].append(response.similarity or 0.0)
            hits[item.bench_type].append(True)
            continue
        ok = _correct(item, response)
        hits[item.bench_type].append(ok)
        if item.bench_type in MC_ANSWERABLE:
            count_hits[count_bucket(item.person_count)].append(ok)

    report.items = {t.value: len(v) for t, v in hits.items()}
    report.mc_answerable = {t.value: percent(sum(hits[t]), len(hits[t])) for t in MC_ANSWERABLE}
    report.mc_unanswerable = {t.value: percent(sum(hits[t]), len(hits[t])) for t in MC_UNANSWERABLE}
    report.mc_by_count = {b: percent(sum(v), len(v)) for b, v in count_hits.items()}
    report.desc_similarity = {
        b: round2(sum(v) * 100 / len(v)) if v else None for b, v in similarity.items()
    }
    report.desc_rejection = {t.value: percent(sum(hits[t]), len(hits[t])) for t in DESC_UNANSWERABLE}
    log_event("eval", "-", "scored", items=len(items), no_response=report.no_response)
    return report

"""Wrapper-token serialization of training instances.

Layout of one serialized instance:

    <|person_start|><image:1>{intro_1}<|person_end|> ... <image:scene>
    USER: {query}
    ASSISTANT: {response}

The supervision span is a (start, length) character span that covers the
response and nothing else.
"""

import re
from typing import List, Sequence, Tuple

from PvitForge.pipeline.types import PLACEHOLDER, PrefixEntry, TrainingInstance
from PvitForge.utils.exceptions import MalformedRequest, PreconditionError, UnboundPlaceholder
from PvitForge.utils.seeds import stable_id

PERSON_START = "<|person_start|>"
PERSON_END = "<|person_end|>"
SCENE_SLOT = "<image:scene>"
USER = "\nUSER: "
ASSISTANT = "\nASSISTANT: "

_IMAGE_SLOT = re.compile(r"<image:[^>]*>")
_ENTRY = re.compile(
    re.escape(PERSON_START) + r"<image:(\d+)>(.*?)" + re.escape(PERSON_END), re.S
)


def _reserved(text: str) -> bool:
    return (
        PERSON_START in text
        or PERSON_END in text
        or _IMAGE_SLOT.search(text) is not None
    )


def serialize_prefix(intros: Sequence[str]) -> str:
    parts = []
    for k, intro in enumerate(intros, start=1):
        if not intro or not intro.strip():
            raise PreconditionError(f"prefix entry {k} has an empty intro")
        if _reserved(intro):
            raise PreconditionError(f"prefix entry {k} contains a reserved token")
        parts.append(f"{PERSON_START}<image:{k}>{intro}{PERSON_END}")
    return "".join(parts)


def serialize_instance(
    prefix: Sequence[PrefixEntry], scene, query: str, response: str
) -> Tuple[str, Tuple[int, int]]:
    head = serialize_prefix([entry.intro for entry in prefix])
    if _reserved(query) or ASSISTANT in query:
        raise PreconditionError("query contains a reserved token")
    if _reserved(response):
        raise PreconditionError("response contains a reserved token")
    head += f"{SCENE_SLOT}{USER}{query}{ASSISTANT}"
    return head + response, (len(head), len(response))


def supervised_text(serialized: str, supervision: Sequence[int]) -> str:
    start, length = supervision
    return serialized[start : start + length]


def check_wrapper_grammar(prefix_text: str) -> int:
    """Number of wrapped entries in a serialized prefix; raises on bad grammar."""
    pos, k = 0, 0
    for match in _ENTRY.finditer(prefix_text):
        if match.start() != pos:
            raise MalformedRequest(f"stray text before prefix entry {k + 1}")
        k += 1
        if int(match.group(1)) != k:
            raise MalformedRequest(f"prefix entry {k} carries image slot {match.group(1)}")
        if _reserved(match.group(2)):
            raise MalformedRequest(f"prefix entry {k} is nested or holds two image slots")
        pos = match.end()
    if pos != len(prefix_text):
        raise MalformedRequest("unbalanced wrapper tokens in prefix")
    return k


def parse_serialized(text: str) -> Tuple[List[str], str, str]:
    """Inverse of serialize_instance on the text level: (intros, query, response)."""
    marker = text.find(SCENE_SLOT + USER)
    if marker < 0:
        raise PreconditionError("serialized instance has no scene slot")
    prefix_text = text[:marker]
    try:
        check_wrapper_grammar(prefix_text)
    except MalformedRequest as e:
        raise PreconditionError(str(e))
    intros = [m.group(2) for m in _ENTRY.finditer(prefix_text)]
    body = text[marker + len(SCENE_SLOT + USER) :]
    if ASSISTANT not in body:
        raise PreconditionError("serialized instance has no assistant turn")
    query, response = body.split(ASSISTANT, 1)
    return intros, query, response


def build_instance(
    kind: str,
    prefix: Sequence[PrefixEntry],
    scene,
    query: str,
    response: str,
    answerable: bool = True,
    **meta,
) -> TrainingInstance:
    """Serialize and wrap one training instance; the id hashes everything it carries."""
    serialized, supervision = serialize_instance(prefix, scene, query, response)
    if PLACEHOLDER in serialized:
        raise UnboundPlaceholder(f"{kind} instance still holds {PLACEHOLDER}")
    instance_id = stable_id(
        kind,
        scene.content_hash,
        *(entry.image.content_hash for entry in prefix),
        serialized,
    )
    return TrainingInstance(
        instance_id=instance_id,
        kind=kind,
        prefix=list(prefix),
        scene=scene,
        query=query,
        response=response,
        answerable=answerable,
        serialized=serialized,
        supervision=supervision,
        **meta,
    )

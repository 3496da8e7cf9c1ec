import random
import re
from typing import Dict, Iterable, List, Sequence, Tuple

from prompts import load_names
from PvitForge.pipeline.types import PLACEHOLDER, QATemplate
from PvitForge.utils.exceptions import PoolExhausted, PreconditionError, UnboundPlaceholder

_TOKEN = re.compile(r"<[A-Za-z_][A-Za-z0-9_]*>")


class NamePool:
    """Unique, non-empty first names used to bind the placeholder."""

    def __init__(self, names: Iterable[str]):
        names = [n.strip() for n in names]
        if any(not n for n in names):
            raise PreconditionError("name pool holds an empty entry")
        if len(set(names)) != len(names):
            raise PreconditionError("name pool holds duplicate entries")
        self.names = names

    @classmethod
    def load(cls, path: str = None) -> "NamePool":
        return cls(load_names(path))

    def __len__(self) -> int:
        return len(self.names)

    def available(self, exclude: Iterable[str] = ()) -> List[str]:
        taken = set()
        for text in exclude:
            taken.add(text)
            taken.update(text.split())
        return [n for n in self.names if n not in taken]


def bind_names(
    templates: Sequence[QATemplate],
    persons_in_scope: Sequence[str],
    pool: NamePool,
    rng: random.Random,
    exclude: Iterable[str] = (),
) -> Dict[str, str]:
    """person_id -> name, distinct names for distinct persons."""
    persons = list(dict.fromkeys(persons_in_scope))
    for template in templates:
        if len(template.placeholders) > len(persons):
            raise UnboundPlaceholder(
                f"template needs {len(template.placeholders)} names, {len(persons)} persons in scope"
            )
    candidates = pool.available(exclude)
    if len(candidates) < len(persons):
        raise PoolExhausted(f"{len(persons)} persons but only {len(candidates)} free names")
    return dict(zip(persons, rng.sample(candidates, len(persons))))


def bind_text(text: str, assignment: Dict[str, str]) -> str:
    def _sub(match):
        token = match.group(0)
        if token not in assignment:
            raise UnboundPlaceholder(f"no name bound for {token}")
        return assignment[token]

    return _TOKEN.sub(_sub, text)


def instantiate(template: QATemplate, assignment: Dict[str, str]) -> Tuple[str, str]:
    """Replace every placeholder in question and answer; `assignment` maps token -> name."""
    if isinstance(assignment, str):
        assignment = {PLACEHOLDER: assignment}
    missing = [p for p in template.placeholders if p not in assignment]
    if missing:
        raise UnboundPlaceholder(f"no name bound for {', '.join(missing)}")
    return bind_text(template.question, assignment), bind_text(template.answer, assignment)

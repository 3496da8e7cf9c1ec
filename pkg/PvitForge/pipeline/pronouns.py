import re
from typing import Dict

from prompts import load_pronouns
from PvitForge.pipeline.types import PLACEHOLDER
from PvitForge.utils.exceptions import UnknownRelation


class PronounLexicon:
    """First-person relation phrase -> second-person phrase, e.g. "my dad" -> "your dad"."""

    def __init__(self, table: Dict[str, str]):
        self.table = dict(table)

    @classmethod
    def load(cls, path: str = None) -> "PronounLexicon":
        return cls(load_pronouns(path))

    @property
    def relations(self):
        return sorted(self.table)

    def second_person(self, relation: str) -> str:
        try:
            return self.table[relation]
        except KeyError:
            raise UnknownRelation(f"{relation!r} is not in the pronoun lexicon")

    def intro(self, relation: str) -> str:
        self.second_person(relation)
        return f"this is {relation}"


def address(text: str, phrase: str) -> str:
    """Swap the placeholder for `phrase`, capitalised at sentence starts."""
    text = re.sub(
        r"(^|[.!?]\s+)" + re.escape(PLACEHOLDER),
        lambda m: m.group(1) + phrase[:1].upper() + phrase[1:],
        text,
    )
    return text.replace(PLACEHOLDER, phrase)

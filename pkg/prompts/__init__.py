import os
import re
from typing import Dict, List

import yaml

PROMPTS_DIR = os.path.dirname(os.path.abspath(__file__))

prompt_sets = {}


def get_prompts(path: str = None) -> dict:
    """Load a prompt set (default `prompts/en.yml`); missing keys fall back to English."""
    path = os.path.abspath(path or os.path.join(PROMPTS_DIR, "en.yml"))
    if path in prompt_sets:
        return prompt_sets[path]
    with open(os.path.join(PROMPTS_DIR, "en.yml"), encoding="utf8") as f:
        english = yaml.safe_load(f)
    with open(path, encoding="utf8") as f:
        loaded = yaml.safe_load(f) or {}
    for item in english:
        if item not in loaded:
            loaded[item] = english[item]
    prompt_sets[path] = loaded
    return loaded


def render(template: str, **values) -> str:
    """Fill {key} slots named in `values`; every other brace is left untouched."""

    def _sub(match):
        key = match.group(1)
        return str(values[key]) if key in values else match.group(0)

    return re.sub(r"\{([a-z_]+)\}", _sub, template)


def load_names(path: str = None) -> List[str]:
    path = path or os.path.join(PROMPTS_DIR, "names.txt")
    with open(path, encoding="utf8") as f:
        return [line.strip() for line in f if line.strip()]


def load_pronouns(path: str = None) -> Dict[str, str]:
    path = path or os.path.join(PROMPTS_DIR, "pronouns.yml")
    with open(path, encoding="utf8") as f:
        return {str(k): str(v) for k, v in (yaml.safe_load(f) or {}).items()}


def load_lexicon(path: str = None) -> List[str]:
    """Refusal patterns: one per line in a text file, or the prompt set's defaults."""
    if path is None:
        return list(get_prompts()["refusal_patterns"])
    with open(path, encoding="utf8") as f:
        return [line.strip() for line in f if line.strip() and not line.startswith("#")]

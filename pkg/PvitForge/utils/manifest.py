import json
import os
from pathlib import Path
from typing import Callable, Iterable, List, Optional

import jsonschema

from PvitForge.utils.exceptions import CorruptRecord, MissingStageInput

IMAGE_REF = {
    "type": "object",
    "required": ["path", "content_hash", "width", "height"],
    "properties": {
        "path": {"type": "string", "minLength": 1},
        "content_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
    },
}

PREFIX_ENTRY = {
    "type": "object",
    "required": ["image", "intro"],
    "properties": {"image": IMAGE_REF, "intro": {"type": "string", "minLength": 1}},
}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": [
        "instance_id",
        "kind",
        "prefix",
        "scene",
        "query",
        "response",
        "answerable",
        "serialized",
        "supervision",
    ],
    "properties": {
        "instance_id": {"type": "string", "minLength": 1},
        "kind": {"type": "string"},
        "prefix": {"type": "array", "items": PREFIX_ENTRY},
        "scene": IMAGE_REF,
        "query": {"type": "string"},
        "response": {"type": "string"},
        "answerable": {"type": "boolean"},
        "serialized": {"type": "string"},
        "supervision": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 2,
            "maxItems": 2,
        },
    },
}

BENCH_ITEM_SCHEMA = {
    "type": "object",
    "required": ["item_id", "bench_type", "prefix", "scene", "question", "gold", "person_count"],
    "properties": {
        "item_id": {"type": "string", "minLength": 1},
        "bench_type": {"type": "string"},
        "prefix": {"type": "array", "items": PREFIX_ENTRY},
        "scene": IMAGE_REF,
        "question": {"type": "string"},
        "choices": {"type": ["array", "null"], "items": {"type": "string"}},
        "gold": {"type": "string"},
        "person_count": {"type": "integer", "minimum": 0},
    },
}

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["item_id", "raw"],
    "properties": {"item_id": {"type": "string"}, "raw": {"type": "string"}},
}


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def write_jsonl(path, records: Iterable[dict], sort_key: Optional[Callable] = None) -> int:
    """Write records atomically, one canonical JSON object per line."""
    records = list(records)
    if sort_key is not None:
        records.sort(key=sort_key)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".part")
    with tmp.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(dumps(record) + "\n")
    os.replace(tmp, path)
    return len(records)


def append_jsonl(path, record: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        f.write(dumps(record) + "\n")


def read_jsonl(path, schema: Optional[dict] = None, key: Optional[str] = None) -> List[dict]:
    """Load a manifest; bad JSON, schema failures and duplicate keys raise CorruptRecord."""
    path = Path(path)
    if not path.exists():
        raise MissingStageInput(f"{path} not found, run the previous stage first")
    records, seen = [], set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"{path.name}: invalid JSON: {exc.msg}", lineno)
            if schema is not None:
                try:
                    jsonschema.validate(payload, schema)
                except jsonschema.ValidationError as exc:
                    raise CorruptRecord(f"{path.name}: {exc.message}", lineno)
            if key is not None:
                if payload.get(key) in seen:
                    raise CorruptRecord(f"{path.name}: duplicate {key} {payload.get(key)}", lineno)
                seen.add(payload.get(key))
            records.append(payload)
    return records


def write_json(path, record: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".part")
    tmp.write_text(json.dumps(record, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)


CURATION = "curation.jsonl"
EXTRACTION = "extraction.jsonl"
PVIT = "pvit.jsonl"
PBENCH = "pbench.jsonl"
RESPONSES = "responses.jsonl"


def load_records(path, cls, key: str, schema: Optional[dict] = None) -> list:
    """read_jsonl, then `cls.from_dict` on every line; shape errors become CorruptRecord."""
    loaded = []
    for lineno, record in enumerate(read_jsonl(path, schema, key=key), start=1):
        try:
            loaded.append(cls.from_dict(record))
        except (KeyError, ValueError, TypeError) as exc:
            raise CorruptRecord(f"{Path(path).name}: {exc}", lineno)
    return loaded

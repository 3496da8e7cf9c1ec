import asyncio
import hashlib
import json
import os
from pathlib import Path
from typing import Optional

import aiofiles

from PvitForge.logging import LOGGER


# Concurrent writers of one digest share a lock; digests are spread over a fixed set.
LOCK_STRIPES = 64


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def request_digest(capability: str, request: dict) -> str:
    """Hex digest of a canonicalised request; key order never changes it."""
    return hashlib.sha256(canonical_json([capability, request]).encode("utf-8")).hexdigest()


class CallCache:
    """Content-addressed, append-only store of backend responses.

    Entries live at <root>/<capability>/<digest[:2]>/<digest>.json so a
    resumed run skips every call that already completed.
    """

    def __init__(self, root, enabled: bool = True):
        self.root = Path(root)
        self.enabled = enabled
        self._locks = [asyncio.Lock() for _ in range(LOCK_STRIPES)]
        self.hits = 0
        self.misses = 0

    def path(self, capability: str, digest: str) -> Path:
        return self.root / capability / digest[:2] / f"{digest}.json"

    def lock(self, capability: str, digest: str) -> asyncio.Lock:
        return self._locks[int(digest[:8], 16) % LOCK_STRIPES]

    async def get(self, capability: str, digest: str) -> Optional[dict]:
        if not self.enabled:
            return None
        path = self.path(capability, digest)
        if not path.exists():
            self.misses += 1
            return None
        try:
            async with aiofiles.open(path, mode="r", encoding="utf-8") as f:
                entry = json.loads(await f.read())
        except (OSError, ValueError) as e:
            LOGGER(__name__).warning(f"Dropping unreadable cache entry {path.name}: {e}")
            self.misses += 1
            return None
        self.hits += 1
        return entry["response"]

    async def put(self, capability: str, digest: str, response: dict) -> None:
        if not self.enabled:
            return
        path = self.path(capability, digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = canonical_json(
            {"capability": capability, "digest": digest, "response": response}
        )
        tmp = path.with_suffix(".part")
        async with aiofiles.open(tmp, mode="w", encoding="utf-8") as f:
            await f.write(body)
        os.replace(tmp, path)

"""Cache-aware facade over every backend capability.

Requests are keyed by content hashes, never by paths, so a call made for
the same pixels and text from a different run directory still hits the
cache. Upstream attempts go through tenacity; only transient failures
(unreachable host, empty completion) are retried.
"""

import base64
import inspect
import re
from collections import Counter
from typing import Callable, List, Optional, Sequence

import jsonschema
from tenacity import (
    AsyncRetrying,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

import config
from prompts import get_prompts
from PvitForge.core.cache import CallCache, request_digest
from PvitForge.logging import log_event
from PvitForge.pipeline.serializer import check_wrapper_grammar
from PvitForge.pipeline.types import BBox, Detection, ImageRef
from PvitForge.platforms import REMOTE, FixtureAPI
from PvitForge.utils.exceptions import (
    BackendUnreachable,
    EmptyCompletion,
    MalformedRequest,
    MalformedResponse,
    PrefixTooLarge,
)

DETECTIONS_SCHEMA = {
    "type": "object",
    "required": ["detections"],
    "properties": {
        "detections": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["box", "score"],
                "properties": {
                    "box": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 4,
                        "maxItems": 4,
                    },
                    "score": {"type": "number", "minimum": 0, "maximum": 1},
                    "label": {"type": "string"},
                },
            },
        }
    },
}

TEXT_SCHEMA = {
    "type": "object",
    "required": ["text"],
    "properties": {"text": {"type": "string"}},
}

IMAGES_SCHEMA = {
    "type": "object",
    "required": ["images"],
    "properties": {"images": {"type": "array", "items": {"type": "string"}}},
}

SCORE_SCHEMA = {
    "type": "object",
    "required": ["score"],
    "properties": {"score": {"type": "number"}},
}

_SLOT = re.compile(r"<image:(\d+)>")


class Backends:
    def __init__(self, transports: dict, store, cache: CallCache, settings):
        self.transports = transports
        self.store = store
        self.cache = cache
        self.settings = settings
        self.upstream_calls = Counter()

    # -- plumbing

    def _validate(self, capability: str, response, schema: dict) -> None:
        try:
            jsonschema.validate(response, schema)
        except jsonschema.ValidationError as exc:
            raise MalformedResponse(f"{capability}: {exc.message}")

    async def _upstream(self, capability: str, payload: dict, schema: dict, require_text: bool):
        attempt = 0
        retrying = AsyncRetrying(
            stop=stop_after_attempt(self.settings.max_retries),
            wait=wait_exponential(multiplier=self.settings.retry_backoff, max=30),
            retry=retry_if_exception_type((BackendUnreachable, EmptyCompletion)),
            reraise=True,
        )
        async for attempt_state in retrying:
            with attempt_state:
                attempt += 1
                self.upstream_calls[capability] += 1
                response = await self.transports[capability].request(capability, payload)
                self._validate(capability, response, schema)
                if require_text and not response["text"].strip():
                    raise EmptyCompletion(f"{capability}: empty completion")
        return response, attempt

    async def _call(
        self,
        capability: str,
        request: dict,
        payload: dict,
        schema: dict,
        finalize: Optional[Callable] = None,
        still_valid: Optional[Callable] = None,
        require_text: bool = False,
    ) -> dict:
        digest = request_digest(capability, request)
        async with self.cache.lock(capability, digest):
            cached = await self.cache.get(capability, digest)
            if cached is not None and (still_valid is None or still_valid(cached)):
                log_event("backend", digest[:12], "backend_call", capability=capability, cached=True, attempt=0)
                return cached
            try:
                response, attempt = await self._upstream(capability, payload, schema, require_text)
            except (BackendUnreachable, EmptyCompletion) as e:
                log_event("backend", digest[:12], "backend_failed", capability=capability, error=type(e).__name__)
                raise
            if finalize is not None:
                response = finalize(response, digest)
                if inspect.isawaitable(response):
                    response = await response
            await self.cache.put(capability, digest, response)
            log_event("backend", digest[:12], "backend_call", capability=capability, cached=False, attempt=attempt)
            return response

    def _detections(self, image: ImageRef, response: dict, label: Optional[str]) -> List[Detection]:
        found = []
        for det in response["detections"]:
            box = BBox.from_list(det["box"]).clamp(image.width, image.height)
            found.append(Detection(box, float(det["score"]), label or det.get("label", "")))
        return sorted(found, key=lambda d: (-d.score, d.box.as_list()))

    # -- capabilities

    async def detect_objects(self, image: ImageRef, prompt: str) -> List[Detection]:
        if not prompt or not prompt.strip():
            raise MalformedRequest("detect_objects needs a non-empty prompt")
        self.store.open(image)
        response = await self._call(
            "detect",
            {"image": image.content_hash, "prompt": prompt},
            {"image": image.to_dict(), "prompt": prompt},
            DETECTIONS_SCHEMA,
        )
        return self._detections(image, response, None)

    async def detect_faces(self, image: ImageRef) -> List[Detection]:
        self.store.open(image)
        response = await self._call(
            "face",
            {"image": image.content_hash},
            {"image": image.to_dict(), "prompt": "face"},
            DETECTIONS_SCHEMA,
        )
        return self._detections(image, response, "face")

    async def generate_identity_images(self, face: ImageRef, n: int, seed: int) -> List[ImageRef]:
        if n < 1:
            raise MalformedRequest("generate_identity_images needs n >= 1")
        self.store.open(face)

        def write(response: dict, digest: str) -> dict:
            if len(response["images"]) != n:
                raise MalformedResponse(f"augment: asked for {n} images, got {len(response['images'])}")
            refs = []
            for i, data in enumerate(response["images"]):
                rel = f"assets/augment/{face.content_hash[:16]}/s{seed}_{i}.png"
                try:
                    raw = base64.b64decode(data, validate=True)
                except ValueError:
                    raise MalformedResponse("augment: image is not base64")
                refs.append(self.store.write_bytes(rel, raw).to_dict())
            return {"refs": refs}

        def still_valid(cached: dict) -> bool:
            return all(self.store.verify(ImageRef.from_dict(r)) for r in cached["refs"])

        response = await self._call(
            "augment",
            {"image": face.content_hash, "n": n, "seed": seed},
            {"image": face.to_dict(), "n": n, "seed": seed},
            IMAGES_SCHEMA,
            finalize=write,
            still_valid=still_valid,
        )
        return [ImageRef.from_dict(r) for r in response["refs"]]

    async def describe_image(self, images: Sequence[ImageRef], prompt: str) -> str:
        if not images:
            raise MalformedRequest("describe_image needs at least one image")
        if len(images) > self.settings.caption_image_limit:
            raise MalformedRequest(
                f"describe_image takes at most {self.settings.caption_image_limit} images"
            )
        if not prompt or not prompt.strip():
            raise MalformedRequest("describe_image needs a non-empty prompt")
        content = [{"type": "image", "image": ref.to_dict()} for ref in images]
        content.append({"type": "text", "text": prompt})
        response = await self._call(
            "caption",
            {"images": [ref.content_hash for ref in images], "prompt": prompt},
            {"messages": [{"role": "user", "content": content}], "temperature": 0},
            TEXT_SCHEMA,
            require_text=True,
        )
        return response["text"]

    async def complete_text(self, prompt: str, seed: int = 0) -> str:
        if not prompt or not prompt.strip():
            raise MalformedRequest("complete_text needs a non-empty prompt")
        response = await self._call(
            "complete",
            {"prompt": prompt, "seed": seed},
            {
                "messages": [{"role": "user", "content": [{"type": "text", "text": prompt}]}],
                "temperature": 0,
                "seed": seed,
            },
            TEXT_SCHEMA,
            require_text=True,
        )
        return response["text"]

    async def image_text_similarity(self, image: ImageRef, text: str) -> float:
        if not text or not text.strip():
            raise MalformedRequest("image_text_similarity needs non-empty text")
        response = await self._call(
            "similarity",
            {"image": image.content_hash, "text": text},
            {"image": image.to_dict(), "text": text},
            SCORE_SCHEMA,
        )
        return min(max(float(response["score"]), 0.0), 1.0)

    def prefix_tokens(self, prefix_text: str, n_images: int) -> int:
        text = _SLOT.sub(" ", prefix_text)
        return len(text.split()) + self.settings.image_token_cost * n_images

    async def query_model_under_test(
        self,
        prefix_text: str,
        prefix_images: Sequence[ImageRef],
        scene: ImageRef,
        question: str,
        item_id: str = "",
    ) -> str:
        slots = check_wrapper_grammar(prefix_text)
        if slots != len(prefix_images):
            raise MalformedRequest(f"prefix has {slots} image slots but {len(prefix_images)} images")
        tokens = self.prefix_tokens(prefix_text, len(prefix_images))
        if tokens > self.settings.prefix_token_budget:
            raise PrefixTooLarge(
                f"prefix needs {tokens} tokens, budget is {self.settings.prefix_token_budget}"
            )
        content = []
        pos = 0
        for match in _SLOT.finditer(prefix_text):
            if match.start() > pos:
                content.append({"type": "text", "text": prefix_text[pos : match.start()]})
            content.append({"type": "image", "image": prefix_images[int(match.group(1)) - 1].to_dict()})
            pos = match.end()
        if pos < len(prefix_text):
            content.append({"type": "text", "text": prefix_text[pos:]})
        content.append({"type": "image", "image": scene.to_dict()})
        content.append({"type": "text", "text": question})
        response = await self._call(
            "model_under_test",
            {
                "prefix": prefix_text,
                "prefix_images": [ref.content_hash for ref in prefix_images],
                "scene": scene.content_hash,
                "question": question,
                "item_id": item_id,
            },
            {"messages": [{"role": "user", "content": content}], "temperature": 0, "item_id": item_id},
            TEXT_SCHEMA,
        )
        return response["text"]


def build_backends(cfg, store, cache: Optional[CallCache] = None, prompts: Optional[dict] = None) -> Backends:
    """Wire one transport per capability from the run config and the environment."""
    prompts = prompts or get_prompts(cfg.prompts_file)
    cache = cache or CallCache(cfg.cache_path)
    fixture = None
    transports = {}
    for capability in config.CAPABILITIES:
        spec = cfg.backends.capability(capability)
        if spec.kind == "remote":
            transports[capability] = REMOTE[capability](
                store, spec.url, spec.api_key, spec.timeout, spec.model
            )
        else:
            if fixture is None:
                fixture = FixtureAPI(store, cfg.backends.fixture, prompts)
            transports[capability] = fixture
    return Backends(transports, store, cache, cfg.backends)

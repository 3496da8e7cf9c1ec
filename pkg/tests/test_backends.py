import shutil

import pytest

from PvitForge import app
from PvitForge.core.cache import LOCK_STRIPES, request_digest
from PvitForge.pipeline.serializer import serialize_prefix
from PvitForge.pipeline.types import ImageRef
from PvitForge.utils.exceptions import (
    BackendUnreachable,
    EmptyCompletion,
    ImageDecode,
    MalformedRequest,
    MalformedResponse,
    PrefixTooLarge,
    QuotaExceeded,
)
from tests.conftest import make_config


def faulty(tmp_path, corpus, capability, mode, times, **backends):
    cfg = make_config(
        tmp_path,
        corpus,
        name=f"{capability}_{mode}_{times}",
        backends={"fixture": {"faults": {capability: {"mode": mode, "times": times}}}, **backends},
    )
    return app.context(cfg).backends


async def test_detections_come_back_sorted_by_score(backends, scene_ref):
    found = await backends.detect_objects(scene_ref("two_people"), "a person")
    assert [d.score for d in found] == [0.95, 0.90]
    assert [d.box.as_list() for d in found] == [[4, 20, 32, 90], [43, 20, 32, 90]]


async def test_blank_scene_has_no_detections(backends, scene_ref):
    assert await backends.detect_objects(scene_ref("landscape"), "a person") == []


async def test_empty_prompt_is_rejected_before_any_call(backends, scene_ref):
    with pytest.raises(MalformedRequest):
        await backends.detect_objects(scene_ref("two_people"), "  ")
    assert sum(backends.upstream_calls.values()) == 0


async def test_undecodable_image(backends, corpus):
    (corpus / "broken.png").write_bytes(b"not an image")
    with pytest.raises(ImageDecode):
        await backends.detect_faces(ImageRef("broken.png", "0" * 64, 10, 10))


async def test_second_identical_call_is_served_from_cache(backends, scene_ref):
    ref = scene_ref("two_people")
    first = await backends.detect_faces(ref)
    second = await backends.detect_faces(ref)
    assert first == second
    assert backends.upstream_calls["face"] == 1
    assert backends.cache.hits == 1


def test_cache_locks_stay_bounded(backends):
    digests = [request_digest("face", {"image": str(i)}) for i in range(1000)]
    assert backends.cache.lock("face", digests[0]) is backends.cache.lock("face", digests[0])
    assert len({id(backends.cache.lock("face", d)) for d in digests}) <= LOCK_STRIPES


async def test_cache_keys_on_pixels_not_paths(backends, corpus, store):
    (corpus / "copy").mkdir()
    shutil.copy(corpus / "two_people.png", corpus / "copy" / "two_people.png")
    await backends.detect_objects(store.ref_for("two_people.png"), "a person")
    await backends.detect_objects(store.ref_for("copy/two_people.png"), "a person")
    assert backends.upstream_calls["detect"] == 1


async def test_retry_budget_is_exhausted_then_raises(tmp_path, corpus, scene_ref):
    backends = faulty(tmp_path, corpus, "caption", "unreachable", 10, max_retries=3)
    with pytest.raises(BackendUnreachable):
        await backends.describe_image([scene_ref("two_people")], "Describe the scene.")
    assert backends.upstream_calls["caption"] == 3


async def test_transient_outage_recovers_within_budget(tmp_path, corpus, scene_ref):
    backends = faulty(tmp_path, corpus, "caption", "unreachable", 2, max_retries=3)
    text = await backends.describe_image([scene_ref("two_people")], "Describe the scene.")
    assert text.startswith("The image shows a man and a girl.")
    assert backends.upstream_calls["caption"] == 3


async def test_empty_completion_is_retried(tmp_path, corpus):
    backends = faulty(tmp_path, corpus, "complete", "empty", 1)
    assert await backends.complete_text("Say something.")
    assert backends.upstream_calls["complete"] == 2


async def test_empty_completion_past_the_budget(tmp_path, corpus):
    backends = faulty(tmp_path, corpus, "complete", "empty", 5, max_retries=2)
    with pytest.raises(EmptyCompletion):
        await backends.complete_text("Say something.")


async def test_quota_is_not_retried(tmp_path, corpus):
    backends = faulty(tmp_path, corpus, "complete", "quota", 5)
    with pytest.raises(QuotaExceeded):
        await backends.complete_text("Say something.")
    assert backends.upstream_calls["complete"] == 1


async def test_malformed_payload_is_not_retried(tmp_path, corpus, scene_ref):
    backends = faulty(tmp_path, corpus, "detect", "malformed", 5)
    with pytest.raises(MalformedResponse):
        await backends.detect_objects(scene_ref("two_people"), "a person")
    assert backends.upstream_calls["detect"] == 1


async def test_failures_are_not_cached(tmp_path, corpus):
    backends = faulty(tmp_path, corpus, "complete", "quota", 1)
    with pytest.raises(QuotaExceeded):
        await backends.complete_text("Say something.")
    assert await backends.complete_text("Say something.")
    assert backends.upstream_calls["complete"] == 2


async def test_personal_caption_uses_the_placeholder(backends, scene_ref, prompts):
    text = await backends.describe_image([scene_ref("solo_green")], prompts["personal"])
    assert "<name>" in text
    assert "green coat" in text


async def test_caption_image_limit(backends, scene_ref):
    refs = [scene_ref("two_people")] * 5
    with pytest.raises(MalformedRequest):
        await backends.describe_image(refs, "Describe these.")
    with pytest.raises(MalformedRequest):
        await backends.describe_image([], "Describe these.")


async def test_identity_images_are_seeded(backends, store, scene_ref):
    face = scene_ref("solo_green")
    first = await backends.generate_identity_images(face, 2, seed=7)
    again = await backends.generate_identity_images(face, 2, seed=7)
    other = await backends.generate_identity_images(face, 2, seed=8)
    assert len(first) == 2
    assert first == again
    assert {r.content_hash for r in first} != {r.content_hash for r in other}
    assert len({r.content_hash for r in first}) == 2
    assert all(store.verify(r) for r in first)
    assert backends.upstream_calls["augment"] == 2
    with pytest.raises(MalformedRequest):
        await backends.generate_identity_images(face, 0, seed=7)


async def test_deleted_augment_files_are_regenerated(backends, store, scene_ref):
    face = scene_ref("solo_green")
    refs = await backends.generate_identity_images(face, 1, seed=1)
    store.resolve(refs[0].path).unlink()
    assert await backends.generate_identity_images(face, 1, seed=1) == refs
    assert backends.upstream_calls["augment"] == 2


async def test_similarity_counts_described_keywords(backends, scene_ref):
    ref = scene_ref("two_people")
    full = await backends.image_text_similarity(ref, "A man in a red jacket next to a girl in a blue dress.")
    half = await backends.image_text_similarity(ref, "A man in a red jacket.")
    none = await backends.image_text_similarity(ref, "A tree on a hill.")
    assert full == 1.0
    assert half == 0.5
    assert none == 0.0


async def test_model_under_test_checks_the_prefix(tmp_path, corpus, scene_ref):
    cfg = make_config(tmp_path, corpus, backends={"prefix_token_budget": 600, "image_token_cost": 576})
    backends = app.context(cfg).backends
    face, scene = scene_ref("solo_green"), scene_ref("two_people")
    prefix = serialize_prefix(["Lisa"])
    assert await backends.query_model_under_test(prefix, [face], scene, "Who?", "item-1") == "A"
    with pytest.raises(MalformedRequest):
        await backends.query_model_under_test(prefix, [face, face], scene, "Who?")
    with pytest.raises(PrefixTooLarge):
        await backends.query_model_under_test(serialize_prefix(["Lisa", "Tom"]), [face, face], scene, "Who?")
    with pytest.raises(MalformedRequest):
        await backends.query_model_under_test("<|person_start|><image:1>Lisa", [face], scene, "Who?")

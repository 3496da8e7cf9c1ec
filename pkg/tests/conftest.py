import json
from pathlib import Path

import pytest
import yaml

from PvitForge import app
from PvitForge.core.settings import load_config
from PvitForge.pipeline.extraction import load_infos
from PvitForge.pipeline.types import SceneRecord
from PvitForge.platforms.Fixture import render_fixture_scene
from PvitForge.utils.manifest import CURATION, EXTRACTION, load_records

# stem -> palette index per person, left to right; faceless positions get no face box.
CORPUS = {
    "two_people": [0, 1],
    "solo_green": [2],
    "solo_yellow": [3],
    "trio": [0, 2, 4],
    "quartet": [1, 3, 4, 5],
    "pair_b": [2, 5],
    "trio_b": [3, 5, 1],
    "solo_purple": [4],
    "faceless_pair": [0, 3],
    "landscape": [],
}
FACELESS = {"faceless_pair": (1,)}

# Twelve person-bearing scenes for strict benchmark quotas.
BENCH_CORPUS = {
    **{k: v for k, v in CORPUS.items() if k not in ("landscape", "faceless_pair")},
    "pair_c": [0, 3],
    "solo_red": [0],
    "solo_blue": [1],
    "solo_orange": [5],
}


def layout(palettes):
    """Persons 32x90 px, 39 px apart, scores 0.95, 0.90, ..."""
    return [(p, (4 + i * 39, 20, 32, 90), round(0.95 - 0.05 * i, 2)) for i, p in enumerate(palettes)]


def render_corpus(directory, scenes=CORPUS, faceless=FACELESS) -> Path:
    for stem, palettes in scenes.items():
        render_fixture_scene(directory, stem, layout(palettes), faceless=faceless.get(stem, ()))
    return Path(directory)


def make_config(tmp_path, corpus, name="run", **overrides):
    data = {
        "corpus_dir": str(corpus),
        "output_dir": str(tmp_path / name),
        "backends": {"retry_backoff": 0},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return load_config(None, data)


def write_config(path, **data) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


@pytest.fixture
def corpus(tmp_path):
    return render_corpus(tmp_path / "corpus")


@pytest.fixture
def cfg(tmp_path, corpus):
    return make_config(tmp_path, corpus)


@pytest.fixture
def ctx(cfg):
    return app.context(cfg)


@pytest.fixture
def store(ctx):
    return ctx.store


@pytest.fixture
def backends(ctx):
    return ctx.backends


@pytest.fixture
def prompts(ctx):
    return ctx.prompts


@pytest.fixture
def scene_ref(store):
    def get(stem: str):
        return store.ref_for(f"{stem}.png")

    return get


async def curate_and_extract(cfg, ctx):
    await app.run("curate", cfg, ctx)
    await app.run("extract", cfg, ctx)
    scenes = load_records(ctx.path(CURATION), SceneRecord, "scene_id")
    return {s.scene_id: s for s in scenes}, load_infos(ctx.path(EXTRACTION))


@pytest.fixture
async def curated(cfg, ctx):
    """(scene_id -> SceneRecord, person_id -> DualLevelInfo) for the fixture corpus."""
    return await curate_and_extract(cfg, ctx)


def read_lines(path):
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]

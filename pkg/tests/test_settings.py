import pytest

from PvitForge.core.settings import STAGES, kind_weights, load_config
from PvitForge.pipeline.types import KINDS
from PvitForge.utils.exceptions import ConfigInvalid
from tests.conftest import write_config


def test_defaults_without_a_file():
    cfg = load_config()
    assert cfg.master_seed == 0
    assert cfg.bench.holdout_fraction == 0.3
    assert all(cfg.stages[s] for s in STAGES)
    assert [k for k, _ in kind_weights(cfg)] == list(KINDS)


def test_overrides_beat_the_file(tmp_path):
    path = write_config(tmp_path / "run.yml", master_seed=3, synthesis={"name_repetitions": 2})
    cfg = load_config(path, {"master_seed": 9, "limit": None})
    assert cfg.master_seed == 9
    assert cfg.limit is None
    assert cfg.synthesis.name_repetitions == 2


def test_partial_stage_map_keeps_the_others_enabled(tmp_path):
    cfg = load_config(write_config(tmp_path / "run.yml", stages={"eval": False}))
    assert cfg.stages["eval"] is False
    assert cfg.stages["curate"] is True


@pytest.mark.parametrize(
    "data",
    [
        {"no_such_key": 1},
        {"synthesis": {"kinds": 3}},
        {"curation": {"person_threshold": 1.5}},
        {"curation": {"person_prompt": " "}},
        {"synthesis": {"scene_variant_probs": [0.5, 0.5, 0.5]}},
        {"synthesis": {"adv_name_ratio": 0.6, "adv_image_ratio": 0.6}},
        {"synthesis": {"kind_weights": {"poetry": 1.0}}},
        {"bench": {"holdout_fraction": 1.0}},
        {"bench": {"quotas": {"Portrait": 3}}},
        {"backends": {"capabilities": {"caption": {"kind": "remote"}}}},
        {"backends": {"fixture": {"faults": {"caption": {"mode": "flaky"}}}}},
        {"backends": {"max_retries": 0}},
        {"stages": {"train": True}},
        {"master_seed": "abc"},
        {"eval": {"judge": "yes"}},
        {"limit": 0},
    ],
)
def test_invalid_configs_are_rejected(tmp_path, data):
    with pytest.raises(ConfigInvalid) as exc:
        load_config(write_config(tmp_path / "bad.yml", **data))
    assert exc.value.exit_code == 1


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "absent.yml")
    broken = tmp_path / "broken.yml"
    broken.write_text("synthesis: [unclosed", encoding="utf-8")
    with pytest.raises(ConfigInvalid):
        load_config(broken)


def test_cache_dir_is_relative_to_the_output_dir(tmp_path):
    cfg = load_config(None, {"output_dir": str(tmp_path / "out")})
    assert cfg.cache_path == tmp_path / "out" / "cache"

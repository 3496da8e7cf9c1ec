import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import yaml

import config
from PvitForge.pipeline.types import KINDS, BenchType
from PvitForge.utils.exceptions import ConfigInvalid

STAGES = ("curate", "extract", "synthesize", "benchbuild", "eval")


@dataclass(frozen=True)
class CapabilitySettings:
    kind: str = "fixture"
    url: str = ""
    api_key: str = ""
    timeout: float = 60.0
    model: str = ""


@dataclass(frozen=True)
class FaultSettings:
    mode: str = "unreachable"
    times: int = 0


@dataclass(frozen=True)
class FixtureSettings:
    annotations_dir: Optional[str] = None
    scripted_answers: Optional[str] = None
    default_answer: str = "A"
    unreachable_items: Tuple[str, ...] = ()
    omit_placeholder_times: int = 0
    malformed_times: int = 0
    echo_fusion: bool = False
    faults: Dict[str, FaultSettings] = field(default_factory=dict)


@dataclass(frozen=True)
class BackendSettings:
    max_retries: int = config.MAX_RETRIES
    retry_backoff: float = config.RETRY_BACKOFF
    cache_dir: str = config.PVIT_CACHE_DIR
    prefix_token_budget: int = config.PREFIX_TOKEN_BUDGET
    image_token_cost: int = config.IMAGE_TOKEN_COST
    caption_image_limit: int = config.CAPTION_IMAGE_LIMIT
    capabilities: Dict[str, CapabilitySettings] = field(default_factory=dict)
    fixture: FixtureSettings = field(default_factory=FixtureSettings)

    def capability(self, name: str) -> CapabilitySettings:
        if name in self.capabilities:
            return self.capabilities[name]
        env = config.endpoint(name)
        if env["url"]:
            return CapabilitySettings(kind="remote", **env)
        return CapabilitySettings()


@dataclass(frozen=True)
class CurationSettings:
    person_prompt: str = "a person"
    person_threshold: float = 0.4
    face_containment: float = 0.9
    crop_margin: float = 0.1
    nms_iou: float = 0.7
    augment_n: int = 2


@dataclass(frozen=True)
class ExtractionSettings:
    placeholder_retries: int = 1


@dataclass(frozen=True)
class SynthesisSettings:
    names_file: Optional[str] = None
    pronouns_file: Optional[str] = None
    kinds_per_person: int = 3
    kind_weights: Dict[str, float] = field(
        default_factory=lambda: {
            "description": 0.18,
            "freeform": 0.22,
            "multichoice": 0.16,
            "pronoun_description": 0.06,
            "x_person_description": 0.10,
            "personalized_holistic": 0.10,
            "reasoning": 0.10,
            "witty": 0.08,
        }
    )
    max_templates_per_kind: int = 2
    name_repetitions: int = 1
    adv_name_ratio: float = 0.1
    adv_image_ratio: float = 0.1
    aug_prefix_prob: float = 0.5
    extra_prefix_prob: float = 0.3
    scene_variant_probs: Tuple[float, float, float] = (0.6, 0.25, 0.15)
    use_augmentation: bool = True
    use_adversarial: bool = True


@dataclass(frozen=True)
class BenchSettings:
    holdout_fraction: float = 0.3
    quotas: Optional[Dict[str, int]] = None
    review: bool = True


@dataclass(frozen=True)
class EvalSettings:
    concurrency: int = 4
    timeout: float = 120.0
    refusal_lexicon: Optional[str] = None
    judge: bool = False


@dataclass(frozen=True)
class RunConfig:
    corpus_dir: str = "corpus"
    output_dir: str = "runs/default"
    master_seed: int = 0
    limit: Optional[int] = None
    concurrency: int = 8
    prompts_file: Optional[str] = None
    stages: Dict[str, bool] = field(default_factory=lambda: {s: True for s in STAGES})
    backends: BackendSettings = field(default_factory=BackendSettings)
    curation: CurationSettings = field(default_factory=CurationSettings)
    extraction: ExtractionSettings = field(default_factory=ExtractionSettings)
    synthesis: SynthesisSettings = field(default_factory=SynthesisSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    @property
    def cache_path(self) -> Path:
        path = Path(self.backends.cache_dir)
        return path if path.is_absolute() else self.output_path / path


_NESTED = {
    "backends": BackendSettings,
    "curation": CurationSettings,
    "extraction": ExtractionSettings,
    "synthesis": SynthesisSettings,
    "bench": BenchSettings,
    "eval": EvalSettings,
    "fixture": FixtureSettings,
}


def _coerce(where: str, value, default):
    if default is None or value is None:
        return value
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError("expected an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, str):
            return str(value)
        if isinstance(default, tuple):
            return tuple(value)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(f"{where}: {e}")
    return value


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{where}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigInvalid(f"{where}: unknown key(s) {', '.join(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        path = f"{where}.{name}" if where else name
        if name in _NESTED:
            kwargs[name] = _build(_NESTED[name], value, path)
        elif name == "capabilities":
            kwargs[name] = {
                cap: _build(CapabilitySettings, spec, f"{path}.{cap}")
                for cap, spec in (value or {}).items()
            }
        elif name == "faults":
            kwargs[name] = {
                cap: _build(FaultSettings, spec, f"{path}.{cap}")
                for cap, spec in (value or {}).items()
            }
        else:
            kwargs[name] = _coerce(path, value, getattr(defaults, name))
    return cls(**kwargs)


def _check(cfg: RunConfig) -> None:
    def require(ok: bool, msg: str):
        if not ok:
            raise ConfigInvalid(msg)

    for name in cfg.stages:
        require(name in STAGES, f"stages: unknown stage {name}")
    for cap, spec in cfg.backends.capabilities.items():
        require(cap in config.CAPABILITIES, f"backends.capabilities: unknown capability {cap}")
        require(spec.kind in ("fixture", "remote"), f"backends.capabilities.{cap}.kind must be fixture or remote")
        require(spec.kind == "fixture" or bool(spec.url), f"backends.capabilities.{cap}: remote needs a url")
    for cap, fault in cfg.backends.fixture.faults.items():
        require(cap in config.CAPABILITIES, f"backends.fixture.faults: unknown capability {cap}")
        require(
            fault.mode in ("unreachable", "quota", "empty", "malformed"),
            f"backends.fixture.faults.{cap}.mode: {fault.mode}",
        )
    require(cfg.backends.max_retries >= 1, "backends.max_retries must be >= 1")
    require(cfg.backends.retry_backoff >= 0, "backends.retry_backoff must be >= 0")
    require(cfg.concurrency >= 1, "concurrency must be >= 1")
    require(cfg.limit is None or cfg.limit >= 1, "limit must be >= 1")

    cur = cfg.curation
    require(bool(cur.person_prompt.strip()), "curation.person_prompt must be non-empty")
    for key in ("person_threshold", "face_containment", "nms_iou"):
        require(0.0 <= getattr(cur, key) <= 1.0, f"curation.{key} must be in [0,1]")
    require(0.0 <= cur.crop_margin <= 1.0, "curation.crop_margin must be in [0,1]")
    require(cur.augment_n >= 0, "curation.augment_n must be >= 0")

    syn = cfg.synthesis
    for kind, weight in syn.kind_weights.items():
        require(kind in KINDS, f"synthesis.kind_weights: unknown kind {kind}")
        require(weight >= 0, f"synthesis.kind_weights.{kind} must be >= 0")
    require(syn.kinds_per_person >= 1, "synthesis.kinds_per_person must be >= 1")
    require(syn.max_templates_per_kind >= 1, "synthesis.max_templates_per_kind must be >= 1")
    require(syn.name_repetitions >= 1, "synthesis.name_repetitions must be >= 1")
    for key in ("adv_name_ratio", "adv_image_ratio", "aug_prefix_prob", "extra_prefix_prob"):
        require(0.0 <= getattr(syn, key) <= 1.0, f"synthesis.{key} must be in [0,1]")
    require(syn.adv_name_ratio + syn.adv_image_ratio <= 1.0, "adversarial ratios exceed 1")
    probs = syn.scene_variant_probs
    require(len(probs) == 3 and all(p >= 0 for p in probs), "synthesis.scene_variant_probs needs 3 non-negative values")
    require(abs(sum(probs) - 1.0) < 1e-6, "synthesis.scene_variant_probs must sum to 1")

    require(0.0 < cfg.bench.holdout_fraction < 1.0, "bench.holdout_fraction must be in (0,1)")
    for name, quota in (cfg.bench.quotas or {}).items():
        require(name in BenchType.__members__, f"bench.quotas: unknown type {name}")
        require(int(quota) >= 0, f"bench.quotas.{name} must be >= 0")
    require(cfg.eval.concurrency >= 1, "eval.concurrency must be >= 1")
    require(cfg.eval.timeout > 0, "eval.timeout must be > 0")


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf8") as f:
                data = yaml.safe_load(f) or {}
        except FileNotFoundError:
            raise ConfigInvalid(f"config file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigInvalid(f"config file is not valid YAML: {e}")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    cfg = _build(RunConfig, data, "")
    if "stages" in data:
        cfg = dataclasses.replace(cfg, stages={**{s: True for s in STAGES}, **cfg.stages})
    _check(cfg)
    return cfg


def kind_weights(cfg: RunConfig) -> List[Tuple[str, float]]:
    return [(k, cfg.synthesis.kind_weights.get(k, 0.0)) for k in KINDS]

import importlib
from dataclasses import dataclass
from pathlib import Path
from typing import Awaitable, Callable, Dict, Optional

from prompts import get_prompts
from PvitForge.core.backends import Backends, build_backends
from PvitForge.core.cache import CallCache
from PvitForge.core.dir import dirr
from PvitForge.core.settings import RunConfig
from PvitForge.core.store import AssetStore
from PvitForge.pipeline.names import NamePool
from PvitForge.pipeline.pronouns import PronounLexicon

from ..logging import LOGGER, log_event


@dataclass
class RunContext:
    """Everything one command needs: config, prompts, assets, cache and backends."""

    cfg: RunConfig
    prompts: dict
    store: AssetStore
    cache: CallCache
    backends: Backends

    @property
    def seed(self) -> int:
        return self.cfg.master_seed

    def path(self, name: str) -> Path:
        return self.cfg.output_path / name

    def name_pool(self) -> NamePool:
        return NamePool.load(self.cfg.synthesis.names_file)

    def pronouns(self) -> PronounLexicon:
        return PronounLexicon.load(self.cfg.synthesis.pronouns_file)


@dataclass
class Command:
    name: str
    func: Callable[[RunContext], Awaitable[Optional[dict]]]
    stage: Optional[str]
    help: str


class Pvit:
    def __init__(self):
        self.commands: Dict[str, Command] = {}
        self.loaded = False

    def command(self, name: str, stage: Optional[str] = None):
        def decorator(func):
            doc = (func.__doc__ or "").strip().splitlines()
            self.commands[name] = Command(name, func, stage, doc[0] if doc else "")
            return func

        return decorator

    def load_plugins(self) -> None:
        if self.loaded:
            return
        from PvitForge.plugins import ALL_MODULES

        for all_module in ALL_MODULES:
            importlib.import_module("PvitForge.plugins" + all_module)
        self.loaded = True
        LOGGER("PvitForge.plugins").info("Successfully Imported Modules...")

    def context(self, cfg: RunConfig) -> RunContext:
        prompts = get_prompts(cfg.prompts_file)
        store = AssetStore(cfg.output_dir, cfg.corpus_dir)
        cache = CallCache(cfg.cache_path)
        backends = build_backends(cfg, store, cache, prompts)
        return RunContext(cfg, prompts, store, cache, backends)

    async def run(self, name: str, cfg: RunConfig, ctx: Optional[RunContext] = None) -> dict:
        """Run one command; PvitError subclasses propagate to the caller."""
        self.load_plugins()
        command = self.commands[name]
        if command.stage and not cfg.stages.get(command.stage, True):
            LOGGER(__name__).info(f"Stage {command.stage} is disabled in the config, skipping.")
            return {}
        dirr(cfg.output_dir)
        ctx = ctx or self.context(cfg)
        log_event(name, "-", "start", seed=cfg.master_seed, limit=cfg.limit)
        result = await command.func(ctx) or {}
        log_event(
            name,
            "-",
            "finish",
            cache_hits=ctx.cache.hits,
            upstream_calls=sum(ctx.backends.upstream_calls.values()),
            **{k: v for k, v in result.items() if isinstance(v, (int, float, str))},
        )
        return result

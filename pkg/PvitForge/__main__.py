import argparse
import asyncio
import sys

from PvitForge import LOGGER, app
from PvitForge.core.settings import load_config
from PvitForge.utils.exceptions import PvitError


def parse_args(argv=None) -> argparse.Namespace:
    app.load_plugins()
    parser = argparse.ArgumentParser(
        prog="pvit",
        description="Personalized visual-instruction data and benchmark pipeline.",
    )
    parser.add_argument(
        "command",
        choices=sorted(app.commands),
        help="; ".join(f"{c.name}: {c.help}" for c in sorted(app.commands.values(), key=lambda c: c.name)),
    )
    parser.add_argument("--config", help="run config YAML")
    parser.add_argument("--seed", type=int, help="override master_seed")
    parser.add_argument("--limit", type=int, help="cap the number of scenes (curate) or items (eval)")
    return parser.parse_args(argv)


async def init(args) -> int:
    cfg = load_config(args.config, {"master_seed": args.seed, "limit": args.limit})
    result = await app.run(args.command, cfg)
    return 2 if result.get("violations") else 0


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return asyncio.run(init(args))
    except PvitError as e:
        LOGGER("PvitForge").error(f"{args.command} failed: {type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

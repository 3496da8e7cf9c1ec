from pathlib import Path

from ..logging import LOGGER


def dirr(output_dir) -> Path:
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)

    # Half-written files from an interrupted run.
    for stale in root.rglob("*.part"):
        stale.unlink()

    for sub in ("assets", "cache", "review"):
        (root / sub).mkdir(exist_ok=True)

    LOGGER(__name__).info("Directories Updated.")
    return root

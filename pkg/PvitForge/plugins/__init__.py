from pathlib import Path

# stages run in pipeline order; tools only read manifests
PLUGIN_GROUPS = ("stages", "tools")


def __list_all_modules():
    work_dir = Path(__file__).parent
    return [
        f".{group}.{path.stem}"
        for group in PLUGIN_GROUPS
        for path in sorted((work_dir / group).glob("*.py"))
        if path.stem != "__init__"
    ]


ALL_MODULES = __list_all_modules()
__all__ = ALL_MODULES + ["ALL_MODULES"]

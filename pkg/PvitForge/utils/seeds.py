import hashlib
import random


def derive_seed(master_seed: int, *parts) -> int:
    """Fan a master seed out per (stage, item, ...) so ordering never matters."""
    tag = "::".join([str(master_seed), *(str(p) for p in parts)])
    return int(hashlib.sha256(tag.encode("utf-8")).hexdigest()[:16], 16)


def derive_rng(master_seed: int, *parts) -> random.Random:
    return random.Random(derive_seed(master_seed, *parts))


def stable_id(*parts, length: int = 16) -> str:
    tag = "::".join(str(p) for p in parts)
    return hashlib.sha256(tag.encode("utf-8")).hexdigest()[:length]

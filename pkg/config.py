from os import getenv

from dotenv import load_dotenv

load_dotenv()

# Where the pipeline log goes.
LOG_FILE = getenv("LOG_FILE", "log.txt")

# Content-addressed backend call cache, shared by every stage of a run.
# A relative path is resolved against the run's output dir.
PVIT_CACHE_DIR = getenv("PVIT_CACHE_DIR", "cache")

# Upstream attempts per backend call before giving up, and the base of the
# exponential wait between them (seconds).
MAX_RETRIES = int(getenv("MAX_RETRIES", 3))
RETRY_BACKOFF = float(getenv("RETRY_BACKOFF", 1.0))

# Each capability talks to its own service. Leave the URL empty to use the
# fixture backend for that capability.
CAPABILITIES = (
    "detect",
    "face",
    "augment",
    "caption",
    "complete",
    "similarity",
    "model_under_test",
)

_ENV_PREFIX = {
    "detect": "DETECT",
    "face": "FACE",
    "augment": "AUGMENT",
    "caption": "CAPTION",
    "complete": "COMPLETE",
    "similarity": "SIMILARITY",
    "model_under_test": "MUT",
}


def endpoint(capability: str) -> dict:
    prefix = _ENV_PREFIX[capability]
    return {
        "url": getenv(f"{prefix}_URL", ""),
        "api_key": getenv(f"{prefix}_API_KEY", ""),
        "timeout": float(getenv(f"{prefix}_TIMEOUT", 60)),
        "model": getenv(f"{prefix}_MODEL", ""),
    }


# Token budget for the multimodal prefix sent to the model under test.
# Each image slot costs IMAGE_TOKEN_COST tokens.
PREFIX_TOKEN_BUDGET = int(getenv("PREFIX_TOKEN_BUDGET", 4096))
IMAGE_TOKEN_COST = int(getenv("IMAGE_TOKEN_COST", 576))

# Upper bound of images per describe_image request.
CAPTION_IMAGE_LIMIT = int(getenv("CAPTION_IMAGE_LIMIT", 4))

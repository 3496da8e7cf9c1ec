import logging

import config

logging.basicConfig(
    level=logging.INFO,
    format="[%(asctime)s - %(levelname)s] - %(name)s - %(message)s",
    datefmt="%d-%b-%y %H:%M:%S",
    handlers=[
        logging.FileHandler(config.LOG_FILE),
        logging.StreamHandler(),
    ],
)

logging.getLogger("aiohttp").setLevel(logging.ERROR)
logging.getLogger("PIL").setLevel(logging.ERROR)
logging.getLogger("asyncio").setLevel(logging.ERROR)


def LOGGER(name: str) -> logging.Logger:
    return logging.getLogger(name)


def log_event(stage: str, item_id: str, event: str, **fields) -> None:
    """One structured line per pipeline event: stage, item, event, then sorted fields."""
    extra = " ".join(f"{k}={fields[k]}" for k in sorted(fields))
    line = f"stage={stage} item={item_id} event={event}"
    LOGGER(f"PvitForge.{stage}").info(f"{line} {extra}" if extra else line)

import logging
import logging.config
import os
from pathlib import Path
from typing import Optional

from dotenv import dotenv_values, load_dotenv

load_dotenv()

# Configuration
DATABASE_URL = os.getenv("DATABASE_URL", "sqlite:///./hermes_noc.db")
HERMES_WORKERS = int(os.getenv("HERMES_WORKERS", "1"))
HERMES_LOG_CONFIG = os.getenv("HERMES_LOG_CONFIG", "logging.ini")
HERMES_WATCHDOG_HORIZON = int(os.getenv("HERMES_WATCHDOG_HORIZON", "10000"))
HERMES_DEFAULT_SEEDS = int(os.getenv("HERMES_DEFAULT_SEEDS", "10"))


def configure_logging(path: Optional[str] = None, level: Optional[int] = None):
    """Load logging.ini (fileConfig format); plain console logging if it is missing."""
    config_path = Path(path or HERMES_LOG_CONFIG)
    if config_path.is_file():
        logging.config.fileConfig(config_path, disable_existing_loggers=False)
    else:
        logging.basicConfig(format="%(levelname)-5.5s [%(name)s] %(message)s", level=logging.INFO)
    if level is not None:
        logging.getLogger().setLevel(level)


def load_config_file(path: str) -> dict[str, Optional[str]]:
    """
    Read a flat key=value experiment file.

    Uses the .env grammar: ``#`` comments, optional quotes, one key per line.
    """
    if not Path(path).is_file():
        raise FileNotFoundError(f"config file {path} not found")
    return dict(dotenv_values(path))

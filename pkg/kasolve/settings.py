"""
Configuration loading for kasolve.

Reads config.json from the repository root (or the file named by the
KA_SOLVE_CONFIG environment variable) and sets up logging.
"""

import json
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import IoFailure

CONFIG_ENV = "KA_SOLVE_CONFIG"
DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config.json"

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def _load(path: str) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read config file {path}: {exc}", path) from exc


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Return the parsed config.json (cached per path)"""
    if path is None:
        path = os.environ.get(CONFIG_ENV, str(DEFAULT_CONFIG_PATH))
    return _load(str(path))


def defaults() -> Dict[str, Any]:
    return load_config()["defaults"]


def presets() -> Dict[str, Dict[str, Any]]:
    return load_config()["presets"]


def output_settings() -> Dict[str, Any]:
    return load_config()["output"]


def default_workers() -> int:
    """Worker count from the environment fallback, else available CPUs"""
    env_name = defaults().get("workers_env", "KA_SOLVE_WORKERS")
    raw = os.environ.get(env_name)
    if raw:
        try:
            workers = int(raw)
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", env_name, raw)
        else:
            if workers >= 1:
                return workers
            logger.warning("ignoring non-positive %s=%r", env_name, raw)
    return os.cpu_count() or 1


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stderr handler using the configured format"""
    log_config = load_config().get("logging", {})
    level_name = (level or log_config.get("level", "INFO")).upper()
    root = logging.getLogger("kasolve")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(log_config.get("format", logging.BASIC_FORMAT)))
    root.addHandler(handler)
    root.setLevel(level_name)

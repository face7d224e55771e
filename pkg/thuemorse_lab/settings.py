"""
Settings
Configuration loading (YAML defaults plus environment overrides) and logging setup
"""

import os
import sys
import logging
import threading
from pathlib import Path
from typing import Dict, Any, Optional

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

DEFAULT_CONFIG_PATH = Path(__file__).parent / "config" / "app_config.yaml"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

_ENV_OVERRIDES = {
    "TM_PRECISION_BITS": ("precision_bits", int),
    "TM_LOG_LEVEL": ("log_level", str),
    "TM_OUTPUT_DIR": ("output_dir", str),
    "TM_WORKERS": ("workers", int),
}

_config_cache: Optional[Dict[str, Any]] = None
_config_lock = threading.Lock()
_logging_ready = False


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load the YAML configuration and apply environment overrides

    Args:
        config_path: Alternative YAML file; falls back to TM_CONFIG, then the packaged defaults
    """
    load_dotenv()

    if config_path is None:
        config_path = os.getenv("TM_CONFIG") or DEFAULT_CONFIG_PATH

    try:
        with open(config_path, 'r') as f:
            config = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read configuration {config_path}: {e}") from e

    for env_name, (key, cast) in _ENV_OVERRIDES.items():
        value = os.getenv(env_name)
        if value:
            try:
                config[key] = cast(value)
            except ValueError as e:
                raise ConfigError(f"invalid {env_name}={value!r}") from e

    validate_config(config)
    return config


def validate_config(config: Dict[str, Any]):
    """Reject values the numerics cannot work with"""
    if config.get("precision_bits", 256) < 64:
        raise ConfigError("precision_bits must be at least 64")
    if config.get("workers", 1) < 1:
        raise ConfigError("workers must be positive")
    if config.get("output_format", "json") not in ("json", "csv"):
        raise ConfigError(f"unknown output_format {config.get('output_format')!r}")


def get_config() -> Dict[str, Any]:
    """Cached default configuration"""
    global _config_cache
    with _config_lock:
        if _config_cache is None:
            _config_cache = load_config()
        return _config_cache


def use_config(config_path: Optional[str] = None, **overrides) -> Dict[str, Any]:
    """Replace the cached configuration (CLI --config / --workers)"""
    global _config_cache
    config = load_config(config_path)
    config.update({k: v for k, v in overrides.items() if v is not None})
    validate_config(config)
    with _config_lock:
        _config_cache = config
    return config


def section(name: str) -> Dict[str, Any]:
    return get_config().get(name, {}) or {}


def workers() -> int:
    return int(get_config().get("workers", 4))


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Configure root logging once: stdout plus an optional log file"""
    global _logging_ready
    config = get_config()
    level = (level or config.get("log_level", "INFO")).upper()
    log_file = log_file if log_file is not None else config.get("log_file", "")

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=_logging_ready,
    )
    _logging_ready = True

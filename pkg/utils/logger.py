import sys
from pathlib import Path

from loguru import logger as _logger

from utils.config_loader import config, env

BASE_DIR = Path(__file__).resolve().parent.parent

_log_cfg = config.get("logging", {})
_log_path = BASE_DIR / _log_cfg.get("path", "logs/sdd_lab.log")
_format = _log_cfg.get("format", "{time} | {level} | {message}")


def _install(level: str) -> None:
    _log_path.parent.mkdir(parents=True, exist_ok=True)
    _logger.remove()
    _logger.add(sys.stderr, level=level, format=_format)
    # worker processes of a sweep share the file sink
    _logger.add(
        str(_log_path),
        level=level,
        format=_format,
        rotation=_log_cfg.get("rotation", "10 MB"),
        retention=_log_cfg.get("retention", "30 days"),
        encoding="utf-8",
        enqueue=True,
    )


def set_level(level: str) -> None:
    """Re-install both sinks at a new level (CLI --debug)."""
    _install(level)


_install(env.get("SDDLAB_LOG_LEVEL") or _log_cfg.get("level", "INFO"))

logger = _logger

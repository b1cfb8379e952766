"""
YAML configuration files for the command-line interface.

Top-level scalar keys apply to every command; a mapping named after a
command (``classify:``, ``calibrate:`` ...) overrides them for that command.
Keys are option names with dashes replaced by underscores.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

import structlog
import yaml

from quakeml.errors import InvalidInputError

logger = structlog.get_logger()


def load_config(path: str | Path) -> dict[str, Any]:
    """
    Read a configuration file.

    Raises:
        InvalidInputError: If the file is not valid YAML or not a mapping.
    """
    try:
        with open(path, encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise InvalidInputError(f"cannot read config {path}: {e}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise InvalidInputError(f"config {path} must be a mapping, got {type(raw).__name__}")
    return {str(k).replace("-", "_"): v for k, v in raw.items()}


def default_map(raw: Mapping[str, Any], commands: Iterable[str]) -> dict[str, dict[str, Any]]:
    """Per-command click defaults: shared keys overlaid by the command's section."""
    commands = list(commands)
    shared = {k: v for k, v in raw.items() if k not in commands and not isinstance(v, dict)}
    result = {}
    for name in commands:
        section = raw.get(name) or {}
        if not isinstance(section, dict):
            raise InvalidInputError(f"config section {name!r} must be a mapping")
        result[name] = {**shared, **{str(k).replace("-", "_"): v for k, v in section.items()}}
    logger.debug("Config loaded", shared=sorted(shared), sections=sorted(k for k in raw if k in commands))
    return result

"""
Loading of JSON simulation documents into SimulationConfig.

Keys starting with "_" are annotations and are dropped before validation.
Every failure surfaces as ConfigInvalid carrying the key path and, where it
can be located, the line number in the source text.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import ValidationError

from src.errors import ConfigInvalid
from src.models import SimulationConfig

logger = logging.getLogger(__name__)

_VALUE_ERROR = re.compile(r"^(?:Value error, )?([A-Za-z_][\w.]*): (.*)$", re.DOTALL)


def strip_annotations(data: Any) -> Any:
    """Recursively remove keys beginning with an underscore"""
    if isinstance(data, dict):
        return {k: strip_annotations(v) for k, v in data.items() if not str(k).startswith("_")}
    if isinstance(data, list):
        return [strip_annotations(v) for v in data]
    return data


def _key_line(text: Optional[str], key: Optional[str]) -> Optional[int]:
    """1-based line of the last path segment of key in text, if it appears"""
    if not text or not key:
        return None
    leaf = [part for part in key.split(".") if not part.isdigit()]
    if not leaf:
        return None
    needle = f'"{leaf[-1]}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def _first_error(exc: ValidationError) -> tuple:
    error = exc.errors()[0]
    key = ".".join(str(part) for part in error["loc"])
    message = error["msg"]
    if not key:
        match = _VALUE_ERROR.match(message)
        if match:
            key, message = match.group(1), match.group(2)
    elif message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return key, message


def config_from_dict(data: dict, text: Optional[str] = None) -> SimulationConfig:
    """Validate an already-parsed document"""
    if not isinstance(data, dict):
        raise ConfigInvalid("top level must be a JSON object")
    try:
        return SimulationConfig.model_validate(strip_annotations(data))
    except ValidationError as e:
        key, message = _first_error(e)
        raise ConfigInvalid(message, key=key, line=_key_line(text, key)) from e


def load_config(path: Union[str, Path]) -> SimulationConfig:
    """Read and validate a simulation document"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigInvalid(f"cannot read {path}: {e.strerror or e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"malformed JSON in {path}: {e.msg}", line=e.lineno) from e
    config = config_from_dict(data, text)
    logger.debug(f"Loaded configuration '{config.name}' from {path}")
    return config

"""Reading scenario files."""

import json
from pathlib import Path
from typing import List, Union

from pydantic import ValidationError

from ..models.scenario import ScenarioConfig


class ScenarioError(Exception):
    """A scenario file that cannot be used; the message names where it went wrong."""
    pass


def _location(error: dict) -> str:
    parts = []
    for part in error.get("loc", ()):
        if isinstance(part, int):
            parts.append(f"[{part}]")
        else:
            parts.append(("." if parts else "") + str(part))
    return "".join(parts) or "<root>"


def parse_scenario(data: Union[str, bytes, dict], source: str = "<scenario>") -> ScenarioConfig:
    try:
        if isinstance(data, dict):
            return ScenarioConfig.model_validate(data)
        return ScenarioConfig.model_validate_json(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ScenarioError(f"{source}: {_location(first)}: {first['msg']}") from exc


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"Cannot read scenario {path}: {exc}") from exc
    try:
        json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(text, str(path))


def bundled_scenarios(directory: Union[str, Path]) -> List[Path]:
    return sorted(Path(directory).glob("*.json"))

# kdda/cli/overrides.py
import copy
import json
from typing import Any, Sequence

from kdda.cli.errors import InvalidConfigError

TRAIN_SECTION = "train"


def parse_value(text: str) -> Any:
    """JSON when it parses (numbers, booleans, lists, null), otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def split_assignment(item: str) -> tuple[str, str]:
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise InvalidConfigError(f"override '{item}' must look like key=value")
    return key, value


def _resolve_path(raw: dict, key: str, train_keys: Sequence[str]) -> list[str]:
    parts = key.split(".")
    if len(parts) == 1:
        train = raw.get(TRAIN_SECTION)
        if key in train_keys or (isinstance(train, dict) and key in train):
            return [TRAIN_SECTION, key]
    return parts


def set_path(raw: dict, parts: list[str], value: Any) -> None:
    node = raw
    for depth, part in enumerate(parts[:-1]):
        node = _child(node, part, parts[:depth + 1], create=True)
    last = parts[-1]
    if isinstance(node, list):
        node[_index(node, last, parts)] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise InvalidConfigError(f"cannot set '{'.'.join(parts)}': parent is not an object or list")


def _index(node: list, part: str, path: list[str]) -> int:
    try:
        i = int(part)
    except ValueError:
        raise InvalidConfigError(f"'{'.'.join(path)}': '{part}' is not a list index")
    if not -len(node) <= i < len(node):
        raise InvalidConfigError(f"'{'.'.join(path)}': index {i} out of range for {len(node)} items")
    return i


def _child(node: Any, part: str, path: list[str], create: bool) -> Any:
    if isinstance(node, list):
        return node[_index(node, part, path)]
    if isinstance(node, dict):
        if part not in node and create:
            node[part] = {}
        if part not in node:
            raise InvalidConfigError(f"'{'.'.join(path)}' does not exist")
        return node[part]
    raise InvalidConfigError(f"'{'.'.join(path)}' is not an object or list")


def apply_overrides(raw: dict, overrides: Sequence[str], train_keys: Sequence[str] = ()) -> dict:
    """
    Applies `key=value` overrides to a copy of the raw config. Bare keys name
    the train section when it knows them, the top level otherwise; dotted keys
    walk objects and list indices (targets.0.rotation_deg=45).
    """
    resolved = copy.deepcopy(raw)
    for item in overrides:
        key, text = split_assignment(item)
        set_path(resolved, _resolve_path(resolved, key, train_keys), parse_value(text))
    return resolved

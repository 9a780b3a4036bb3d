"""Stable JSON/CSV output helpers shared by the file formats and the CLI."""

from __future__ import annotations

import json

from .errors import SchemaError

FORMAT_VERSION = "laakso-lab/1"


def dumps_stable(obj) -> str:
    """Deterministic JSON: sorted keys, repr-roundtrip floats, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def loads_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise SchemaError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"expected a JSON object at top level of {path}")
    return doc


def require_keys(doc: dict, keys, what: str) -> None:
    missing = [k for k in keys if k not in doc]
    if missing:
        raise SchemaError(f"{what} document is missing keys: {', '.join(missing)}")

"""Loading and applying the JSON schemas shipped with the package."""

import json
import os
from functools import lru_cache
from typing import Any, Dict, List, Optional

from jsonschema import Draft7Validator

SCHEMA_DIR = os.path.join(os.path.dirname(__file__), "schema")


@lru_cache(maxsize=None)
def load_schema(name: str) -> Dict[str, Any]:
    """Load ``schema/<name>`` from the package."""
    with open(os.path.join(SCHEMA_DIR, name)) as f:
        return json.load(f)


def _dotted(path: Any) -> str:
    return ".".join(str(part) for part in path) or "<root>"


def diagnostics(
    instance: Any, schema_name: str, definition: Optional[str] = None, prefix: str = ""
) -> List[str]:
    """
    Every violation of ``schema_name`` by ``instance``, as ``"<path>: <message>"``.

    ``definition`` validates against one entry of the schema's ``definitions``
    instead of the whole document; ``prefix`` is prepended to the paths.
    """
    schema = load_schema(schema_name)
    if definition is not None:
        schema = {
            "definitions": schema["definitions"],
            "$ref": f"#/definitions/{definition}",
        }
    validator = Draft7Validator(schema)
    errors = sorted(
        validator.iter_errors(instance), key=lambda e: list(map(str, e.absolute_path))
    )
    head = [prefix] if prefix else []
    return [
        f"{_dotted(head + list(error.absolute_path))}: {error.message}"
        for error in errors
    ]

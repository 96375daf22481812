from __future__ import annotations

import json
from pathlib import Path
from typing import Type, TypeVar

from pydantic import BaseModel, ValidationError

from ..errors import InputError

Model = TypeVar("Model", bound=BaseModel)


def format_validation_error(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(item) for item in error.get("loc", ()))
        parts.append(f"{location or '<root>'}: {error.get('msg')}")
    return "; ".join(parts)


def load_document(
    path: str | Path,
    model: Type[Model],
    parse_error: Type[InputError],
    validation_error: Type[InputError] | None = None,
) -> Model:
    """Read a JSON document and validate it against ``model``.

    Syntax problems raise ``parse_error`` with ``path:line:col``; schema
    problems raise ``validation_error`` (default ``parse_error``) naming the field.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise parse_error(f"cannot read {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise parse_error(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return model.model_validate(payload)
    except ValidationError as exc:
        raise (validation_error or parse_error)(f"{path}: {format_validation_error(exc)}") from exc

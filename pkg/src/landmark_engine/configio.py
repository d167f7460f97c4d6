"""Strict dataclass construction from parsed JSON.

Unknown keys are rejected with the full key path so config typos fail loudly
instead of silently falling back to defaults.
"""

from __future__ import annotations

import dataclasses
import types
import typing

from .errors import ValidationError


def dataclass_from_dict(cls, data, path: str = "config"):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name: hints[f.name] for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValidationError(
            f"{path}: unknown key(s) {sorted(unknown)}; allowed: {sorted(known)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(known[name], value, f"{path}.{name}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def _coerce(hint, value, path):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    # Optional[X] / unions, both typing.Optional and the X | None spelling
    if origin is typing.Union or origin is types.UnionType:
        if value is None:
            if type(None) in args:
                return None
            raise ValidationError(f"{path}: null not allowed")
        non_none = [a for a in args if a is not type(None)]
        if len(non_none) == 1:
            return _coerce(non_none[0], value, path)
        return value

    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ValidationError(f"{path}: expected a list")
        inner = args[0] if args else None
        items = [_coerce(inner, v, f"{path}[{i}]") if inner else v
                 for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items

    if origin is dict:
        if not isinstance(value, dict):
            raise ValidationError(f"{path}: expected an object")
        return dict(value)

    if dataclasses.is_dataclass(hint):
        return dataclass_from_dict(hint, value, path)

    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{path}: expected a number")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{path}: expected an integer")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ValidationError(f"{path}: expected true/false")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ValidationError(f"{path}: expected a string")
        return value
    return value

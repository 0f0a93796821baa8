"""JSON rendering with floats written at full round-trip precision.

Standard json uses shortest-repr floats, which round-trip but can carry fewer
digits than the on-disk contract asks for. Here every float is rendered with
17 significant digits, which is always exact for binary64.
"""

from __future__ import annotations

import json
import math


def _render(obj, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite float {obj!r} cannot be serialized")
        return format(obj, ".17g")
    if isinstance(obj, int):
        return repr(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        body = ",\n".join(pad_in + _render(x, indent, level + 1) for x in obj)
        return "[\n" + body + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for k, v in obj.items():
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be str, got {type(k).__name__}")
            items.append(pad_in + json.dumps(k) + ": " + _render(v, indent, level + 1))
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def dumps17(obj, indent: int = 2) -> str:
    return _render(obj, indent, 0) + "\n"


def loads(text: str):
    return json.loads(text)

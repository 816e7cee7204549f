"""JSON text helpers with explicit float precision.

Shot files, service bodies, and report files all serialize numbers at 17
significant digits so every IEEE-754 double round-trips losslessly through
text.
"""

import json
import math
from typing import Any

from .errors import ParseError


def format_float(x: float) -> str:
    """17-significant-digit decimal rendering; exact for float64."""
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite value not representable in JSON: {x}")
    if x == int(x) and abs(x) < 1e16:
        # Keep integral floats readable; still lossless.
        return repr(x)
    return format(x, ".17g")


def _encode(obj: Any) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, dict):
        parts = []
        for key, value in obj.items():
            if not isinstance(key, str):
                raise TypeError(f"object keys must be strings, got {type(key)}")
            parts.append(json.dumps(key, ensure_ascii=False) + ":" + _encode(value))
        return "{" + ",".join(parts) + "}"
    # numpy scalars/arrays arrive via .tolist() upstream; anything else is a bug
    raise TypeError(f"cannot serialize {type(obj)}")


def dumps(obj: Any) -> str:
    """Serialize to compact JSON with 17-significant-digit floats."""
    return _encode(obj)


def loads(text: str, *, where: str = "") -> Any:
    """Parse JSON, wrapping syntax errors in ParseError with location info."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        prefix = f"{where}: " if where else ""
        raise ParseError(f"{prefix}malformed JSON at position {exc.pos}: {exc.msg}") from exc

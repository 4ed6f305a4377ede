"""Text serialization helpers: JSON with 17 significant digits, CSV rows."""

import json
import math

from .errors import InvalidArgument

__all__ = ["format_float", "dumps", "write_json", "read_json", "write_csv"]


def format_float(x):
    """Round-trip safe decimal text of a float, 17 significant digits."""
    x = float(x)
    if not math.isfinite(x):
        raise InvalidArgument(f"cannot serialize non-finite value {x}")
    text = f"{x:.17g}"
    if "e" not in text and "." not in text and "n" not in text:
        text += ".0"
    return text


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1)) if indent else ""
    close = " " * (indent * level) if indent else ""
    sep = ",\n" if indent else ", "
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int) and not isinstance(obj, bool):
        return str(obj)
    if isinstance(obj, float) or hasattr(obj, "dtype"):
        if hasattr(obj, "dtype") and obj.dtype.kind in "iu":
            return str(int(obj))
        if hasattr(obj, "dtype") and obj.dtype.kind == "b":
            return "true" if bool(obj) else "false"
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        if indent:
            return "{\n" + sep.join(items) + "\n" + close + "}"
        return "{" + sep.join(items) + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # short numeric rows stay on one line
        if all(not isinstance(v, (list, tuple, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, 0, 0) for v in obj) + "]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        if indent:
            return "[\n" + sep.join(items) + "\n" + close + "]"
        return "[" + sep.join(items) + "]"
    raise InvalidArgument(f"cannot serialize object of type {type(obj).__name__}")


def dumps(obj, indent=1):
    """Serialize plain data to JSON, floats printed with ``%.17g``."""
    return _encode(obj, indent, 0)


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidArgument(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"invalid JSON in {path}: {exc}") from None


def write_csv(path, header, rows):
    """Write rows of numbers; floats use ``%.17g`` and '.' as decimal mark."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) if isinstance(v, int) else format_float(v) for v in row) + "\n")

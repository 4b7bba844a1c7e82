"""
Atomic CSV and JSON writers.

Files are written to a temporary sibling and renamed into place, UTF-8 with
LF line endings. Floats in CSV cells use 9 significant digits, so identical
inputs give identical bytes.
"""

import json
import math
import os
import tempfile
from pathlib import Path


def format_cell(value) -> str:
    """Render one CSV cell: ints verbatim, floats as %.9g, everything else str()."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return "%.9g" % value
    if hasattr(value, "item"):
        return format_cell(value.item())
    return str(value)


def atomic_write_text(path: Path, text: str) -> Path:
    """Write text via temp file + os.replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def write_csv(path: Path, header: list[str], rows) -> Path:
    """Header row plus one line per row."""
    lines = [",".join(header)]
    lines.extend(",".join(format_cell(v) for v in row) for row in rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_json(path: Path, payload: dict) -> Path:
    """Sorted-key, indented JSON document."""
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False)
    return atomic_write_text(path, text + "\n")

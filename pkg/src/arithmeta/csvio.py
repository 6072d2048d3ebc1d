"""Shared CSV/JSON output helpers.

All exports use ',' delimiters, '\n' line endings, and 17-significant-digit
decimals (lossless for float64).  Files are written atomically: content goes
to a temp file in the target directory which is then renamed, so interrupted
runs never leave truncated outputs.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def fmt(value) -> str:
    """Render a cell: floats at 17 significant digits, everything else via str."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_text_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv_atomic(path: str | Path, header: list[str], rows, comment: str | None = None) -> None:
    lines = []
    if comment is not None:
        lines.append(f"# {comment}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(cell) for cell in row))
    write_text_atomic(path, "\n".join(lines) + "\n")


def write_json_atomic(path: str | Path, payload) -> None:
    write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")

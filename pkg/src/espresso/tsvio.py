"""Small helpers for the tab-separated files every stage reads and writes."""

from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence


class TableError(ValueError):
    pass


def format_table(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join("" if v is None else str(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_table(text: str, required: Sequence[str] = ()) -> list[dict[str, str]]:
    """Parse TSV text with a header row into dicts; blank lines are skipped."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        if required:
            raise TableError("empty table, expected header with columns: " + ", ".join(required))
        return []
    header = lines[0].split("\t")
    missing = [c for c in required if c not in header]
    if missing:
        raise TableError("missing columns: " + ", ".join(missing))
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = ln.split("\t")
        if len(cells) < len(header):
            cells += [""] * (len(header) - len(cells))
        elif len(cells) > len(header):
            raise TableError(f"line {lineno}: {len(cells)} cells for {len(header)} columns")
        rows.append(dict(zip(header, cells)))
    return rows


def read_table(path: str | os.PathLike, required: Sequence[str] = ()) -> list[dict[str, str]]:
    return parse_table(Path(path).read_text(encoding="utf-8"), required)


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see half a file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def clone_sort_key(clone_id: str) -> tuple:
    """Numeric ids sort numerically and before non-numeric ones."""
    return (0, int(clone_id), "") if clone_id.isdigit() else (1, 0, clone_id)

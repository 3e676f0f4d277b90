"""Artifact writers: atomic CSV/JSON files with embedded provenance.

Every file carries the config hash, the seed, and the tool version, either
as leading `#` comment lines (CSV) or a `meta` object (JSON).  Writes go to
a temp file in the target directory followed by a rename, so readers never
observe a half-written artifact.  Infinite times serialize as empty fields;
finite times are printed with nine significant digits.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path


def config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            return ""
        return f"{v:.9g}"
    return str(v)


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, meta: dict, columns: list, rows) -> None:
    lines = [f"# {key}: {value}" for key, value in meta.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: Path, meta: dict, payload: dict) -> None:
    doc = {"meta": meta, **payload}
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")

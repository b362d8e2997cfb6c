"""Self-describing fit-result files: magic header line plus canonical JSON."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from airdelta.errors import DataError

MAGIC = "airdelta-run 1"


def dataset_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_run_file(path: str | Path, payload: dict) -> None:
    body = json.dumps(payload, indent=2, sort_keys=True)
    Path(path).write_text(MAGIC + "\n" + body + "\n", encoding="utf-8")


def read_run_file(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    first, _, rest = text.partition("\n")
    if first.strip() != MAGIC:
        raise DataError(f"{path}: not a run file (expected magic header {MAGIC!r})")
    try:
        return json.loads(rest)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt run file body: {exc}") from exc

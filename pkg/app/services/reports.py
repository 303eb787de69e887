"""Report files: CSV curves, JSON documents and the provenance record.

Every file carries the hash of the configuration that produced it, so a
re-run of the same configuration rewrites identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pydantic


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def config_hash(doc: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form; any change in keys or values changes it."""
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]], digest: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_to_builtin(v) if isinstance(v, (np.generic, np.ndarray)) else v for v in row])
    return p


def read_csv(path: str | Path) -> Tuple[str, List[Dict[str, str]]]:
    """Return (config hash, rows as dicts)."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        digest = first.split("=", 1)[1] if first.startswith("# config_hash=") else ""
        return digest, list(csv.DictReader(fh))


def write_json(path: str | Path, doc: Dict[str, Any], digest: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    body = {"config_hash": digest, **doc}
    p.write_text(json.dumps(body, indent=2, sort_keys=True, default=_to_builtin) + "\n", encoding="utf-8")
    return p


def versions() -> Dict[str, str]:
    return {"numpy": np.__version__, "pydantic": pydantic.VERSION, "python": platform.python_version()}


def write_provenance(out_dir: str | Path, experiment: str, seed: int, config: Dict[str, Any], outputs: Sequence[str]) -> Path:
    doc = {
        "experiment": experiment,
        "seed": seed,
        "config": config,
        "outputs": sorted(outputs),
        "versions": versions(),
    }
    return write_json(Path(out_dir) / "provenance.json", doc, config_hash(config))

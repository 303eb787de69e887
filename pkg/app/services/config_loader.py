from __future__ import annotations

import json
from pathlib import Path
from threading import RLock
from typing import Any, Dict, Optional, Tuple

from app.config import settings
from app.errors import InputError

# Cache: absolute path -> (mtime_ns, size, parsed document)
_cache: Dict[str, Tuple[int, int, Dict[str, Any]]] = {}
_lock = RLock()


def _resolve_path(path: Optional[str]) -> Path:
    """
    Resolve an explicit path, else NEUROATTACK_CONFIG, to an absolute Path.
    Errors if neither is set or if it points to a directory.
    """
    p_str = path or settings.config_file
    if not p_str:
        raise InputError("no experiment config given (use --config or NEUROATTACK_CONFIG)")
    p = Path(p_str).expanduser()
    if p.is_dir():
        raise InputError(f"expected a config file, got directory: {p}")
    try:
        return p.resolve(strict=True)
    except FileNotFoundError as e:
        raise InputError(f"config file not found: {p}") from e


def _normalize_newlines(text: str) -> str:
    if "\r" in text:
        text = text.replace("\r\n", "\n").replace("\r", "\n")
    return text


def read_config_document(path: Optional[str] = None, *, force_reload: bool = False) -> Dict[str, Any]:
    """
    Load a JSON experiment config with a small mtime/size cache.

    - If `path` is None, use NEUROATTACK_CONFIG.
    - `force_reload=True` bypasses the cache.
    - Returns a fresh copy; callers may mutate it.
    """
    p = _resolve_path(path)
    key = str(p)
    stat = p.stat()

    with _lock:
        entry = _cache.get(key)
        if force_reload or not entry or entry[0] != stat.st_mtime_ns or entry[1] != stat.st_size:
            text = _normalize_newlines(p.read_text(encoding="utf-8", errors="strict"))
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as e:
                raise InputError(f"{p}: invalid JSON at line {e.lineno}: {e.msg}") from e
            if not isinstance(doc, dict):
                raise InputError(f"{p}: an experiment config is a JSON object")
            entry = (stat.st_mtime_ns, stat.st_size, doc)
            _cache[key] = entry
        return json.loads(json.dumps(entry[2]))

from __future__ import annotations

import logging
import sys

_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """
    Install one stream handler on the package logger.

    Calling it again only updates the level.
    """
    root = logging.getLogger("app")
    root.setLevel(level.upper())
    if not any(getattr(h, "_neuroattack", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(_FORMAT))
        handler._neuroattack = True  # type: ignore[attr-defined]
        root.addHandler(handler)


def progress_enabled() -> bool:
    # tqdm bars only when INFO lines would be shown anyway
    return logging.getLogger("app").getEffectiveLevel() <= logging.INFO

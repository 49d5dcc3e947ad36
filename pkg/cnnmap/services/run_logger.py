import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

SERVICE = "cnnmap"
CONSOLE_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class ConsoleHandler(logging.StreamHandler):
    """Writes to the current sys.stderr, which may be swapped after configuration."""

    def emit(self, record: logging.LogRecord) -> None:
        self.stream = sys.stderr
        super().emit(record)


class JsonLineFormatter(logging.Formatter):
    """One JSON object per record: message, timestamp, service, source, status."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "message": record.getMessage(),
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc)
            .strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z",
            "service": SERVICE,
            "source": record.name,
            "status": record.levelname.lower(),
        }
        if record.exc_info:
            entry["error"] = self.formatException(record.exc_info)
        return json.dumps(entry)


def _ensure_log_directory(path: Path) -> bool:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return True
    except OSError:
        return False


def configure_logging(level: str = "INFO", json_path: Optional[str | Path] = None) -> logging.Logger:
    """Console lines on stderr plus an optional JSON-lines file; safe to call repeatedly."""
    root = logging.getLogger(SERVICE)
    root.setLevel(level.upper())
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    console = ConsoleHandler(sys.stderr)
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    root.addHandler(console)

    if json_path is not None:
        path = Path(json_path)
        if _ensure_log_directory(path):
            try:
                handler = logging.FileHandler(path, mode="a", encoding="utf-8")
            except OSError as e:
                root.warning("JSON log %s not writable (%s), logging to console only", path, e)
            else:
                handler.setFormatter(JsonLineFormatter())
                root.addHandler(handler)
        else:
            root.warning("Log directory not available: %s, logging to console only", path.parent)
    return root

import json
import math
from pathlib import Path
from typing import Optional

from cnnmap.models import LearningLogEntry
from cnnmap.services.reports import write_learning_log


class TrainingHistory:
    """Per-epoch learning log of one training run, oldest epoch first."""

    def __init__(self, tag: str = ""):
        self.tag = tag
        self._entries: list[LearningLogEntry] = []

    def add(self, epoch: int, train_loss: float, val_pos_err_m: float = math.nan) -> LearningLogEntry:
        entry = LearningLogEntry(epoch=epoch, train_loss=train_loss, val_pos_err_m=val_pos_err_m)
        self._entries.append(entry)
        return entry

    def get_all(self, limit: Optional[int] = None) -> list[LearningLogEntry]:
        entries = list(self._entries)
        if limit:
            return entries[-limit:]
        return entries

    def latest(self) -> Optional[LearningLogEntry]:
        return self._entries[-1] if self._entries else None

    def train_losses(self) -> list[float]:
        return [e.train_loss for e in self._entries]

    def clear(self):
        self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)

    def export_csv(self, path: str | Path) -> Path:
        return write_learning_log(self._entries, path)

    def export_json(self) -> str:
        return json.dumps([e.model_dump(mode="json") for e in self._entries], indent=2, default=str)

"""Report output directory: JSON, CSV and plot-data files."""
from __future__ import annotations
import csv
import json
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from ..logger import logger

__all__ = ["ReportWriter", "to_jsonable"]


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays (nested in dicts/lists) to JSON types."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


class ReportWriter:
    """Writes report files below one output directory."""

    def __init__(self, root: str | Path = "out"):
        """Initialize the writer.

        Args:
            root: Output directory, created if missing
        """
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        target = self.root / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def write(self, name: str, data: Any) -> Path:
        """Write data to a file.

        Args:
            name: Relative path within the output directory
            data: dicts and lists are written as JSON, anything else as text

        Returns:
            Path of the written file
        """
        target = self.path(name)
        if isinstance(data, (dict, list)):
            text = json.dumps(to_jsonable(data), indent=2)
        else:
            text = str(data)
        target.write_text(text, encoding="utf-8")
        logger.debug("Wrote report file", path=str(target), bytes=len(text))
        return target

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        target = self.path(name)
        with target.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        logger.debug("Wrote CSV", path=str(target))
        return target

    def read(self, name: str) -> Optional[str]:
        """Contents of a report file, or None if it does not exist."""
        target = self.root / name
        if not target.exists():
            return None
        return target.read_text(encoding="utf-8")

    def list(self, pattern: str = "**/*") -> list[str]:
        """Relative paths of written files matching a glob pattern."""
        return sorted(str(p.relative_to(self.root)) for p in self.root.glob(pattern) if p.is_file())


def _cell(value: Any) -> Any:
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(str(_cell(v)) for v in value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.generic):
        return value.item()
    return value

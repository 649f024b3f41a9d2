"""Artifact writing: CSV tables, JSON reports, MatrixMarket matrices.

Every file is written to a temporary sibling first and moved into place with
``os.replace``, so a failed run never leaves a half-written artifact.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from ..core.grid import Grid, GridFunction, node_classes

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.8e"


@contextlib.contextmanager
def atomic_path(path: Path) -> Iterator[Path]:
    """Yield a temporary path next to ``path``; replace ``path`` with it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> Path:
    with atomic_path(path) as tmp:
        tmp.write_text(text, encoding="utf-8")
    return Path(path)


def format_cell(value: Any) -> str:
    """CSV cell: floats in scientific notation, ``None`` as an empty cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            return "nan" if np.isnan(value) else ("inf" if value > 0 else "-inf")
        return FLOAT_FORMAT % value
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class ArtifactWriter:
    """Writes run artifacts into one output directory."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        return self.directory / name

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        logger.info("wrote %s", path)
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        return self._record(atomic_write_text(self.path(name), render_csv(header, rows)))

    def write_json(self, name: str, payload: Any) -> Path:
        text = json.dumps(payload, indent=2, default=_jsonable) + "\n"
        return self._record(atomic_write_text(self.path(name), text))

    def write_matrix(self, name: str, matrix: sp.spmatrix, comment: str = "") -> Path:
        path = self.path(name)
        with atomic_path(path) as tmp:
            # mmwrite appends ".mtx" to names without it
            target = tmp.with_suffix(".mtx")
            scipy.io.mmwrite(str(target), sp.coo_matrix(matrix), comment=comment)
            os.replace(target, tmp)
        return self._record(path)

    def write_grid(self, grid: Grid, name: str = "grid.csv") -> Path:
        """One row per extended node: ``flat_id, class, x_1 .. x_d``."""
        header = ["flat_id", "class"] + [f"x{i + 1}" if grid.dim > 2 else "xy"[i] for i in range(grid.dim)]
        classes = node_classes(grid)
        coords = grid.coordinates()
        rows = ([k, classes[k].value, *coords[k]] for k in range(grid.size))
        return self.write_csv(name, header, rows)

    def write_solution(self, U: GridFunction, name: str = "solution.csv", exact: Optional[np.ndarray] = None) -> Path:
        """Real nodes only; adds an ``exact`` column when given (values per real node)."""
        grid = U.grid
        ids = grid.real_ids
        coords = grid.coordinates(ids)
        header = [f"x{i + 1}" if grid.dim > 2 else "xy"[i] for i in range(grid.dim)] + ["U"]
        columns = [coords[:, i] for i in range(grid.dim)] + [U.values[ids]]
        if exact is not None:
            header.append("exact")
            columns.append(np.asarray(exact, dtype=float))
        return self.write_csv(name, header, zip(*columns))

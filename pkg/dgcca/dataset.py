"""Matrix and multi-view dataset types, file loading, centering and persistence."""

import logging
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from dgcca.errors import ArityError, ConfigError, EmptyInput, NumericsError, ParseError, ShapeError

logger = logging.getLogger(__name__)

BINARY_MAGIC = b"DGCCA1"
_BINARY_HEADER = struct.Struct("<6sQQ")


class MatrixFormat(str, Enum):
    """On-disk matrix formats."""

    CSV = "csv"
    TSV = "tsv"
    BINARY = "binary"

    @classmethod
    def from_path(cls, path: str | Path) -> "MatrixFormat":
        """Infer the format from a file suffix (.csv, .tsv/.txt, anything else is binary)."""
        suffix = Path(path).suffix.lower()
        if suffix == ".csv":
            return cls.CSV
        if suffix in (".tsv", ".txt", ".tab"):
            return cls.TSV
        return cls.BINARY


@dataclass(frozen=True, eq=False)
class Matrix:
    """Dense real matrix: rows are variables (p), columns are samples (n).

    The stored array is a read-only float64 copy, so a Matrix can be shared
    across threads.
    """

    values: np.ndarray
    row_labels: tuple[str, ...] | None = None
    col_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise ShapeError(f"matrix must be two-dimensional, got {values.ndim} dimensions")
        p, n = values.shape
        if p < 1 or n < 2:
            raise ShapeError(f"matrix needs p >= 1 and n >= 2, got {p}x{n}", p=p, n=n)
        if not np.isfinite(values).all():
            raise NumericsError("matrix contains NaN or Inf entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.row_labels is not None:
            labels = tuple(str(label) for label in self.row_labels)
            if len(labels) != p:
                raise ShapeError(f"{len(labels)} row labels for {p} rows")
            object.__setattr__(self, "row_labels", labels)
        if self.col_labels is not None:
            labels = tuple(str(label) for label in self.col_labels)
            if len(labels) != n:
                raise ShapeError(f"{len(labels)} column labels for {n} columns")
            object.__setattr__(self, "col_labels", labels)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "Matrix":
        """Return a matrix of the same shape with new entries and the same labels."""
        return Matrix(values, row_labels=self.row_labels, col_labels=self.col_labels)

    def to_frame(self) -> pd.DataFrame:
        """Labelled DataFrame view, used when writing tables."""
        return pd.DataFrame(
            self.values,
            index=list(self.row_labels) if self.row_labels else None,
            columns=list(self.col_labels) if self.col_labels else None,
        )


@dataclass(frozen=True, eq=False)
class MultiViewDataset:
    """K >= 2 views observed on the same n samples."""

    views: tuple[Matrix, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        views = tuple(self.views)
        if len(views) < 2:
            raise ArityError(f"need at least 2 views, got {len(views)}", k=len(views))
        widths = [view.n for view in views]
        if len(set(widths)) != 1:
            raise ShapeError(f"views disagree on sample count: {widths}", n=widths)
        object.__setattr__(self, "views", views)
        names = tuple(self.names) or tuple(f"view{k}" for k in range(len(views)))
        if len(names) != len(views):
            raise ArityError(f"{len(names)} names for {len(views)} views")
        object.__setattr__(self, "names", names)

    @property
    def k(self) -> int:
        return len(self.views)

    @property
    def n(self) -> int:
        return self.views[0].n

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(view.p for view in self.views)

    def is_centered(self) -> bool:
        """Check every row sums to zero within 1e-8 * n * (row max-abs)."""
        for view in self.views:
            sums = np.abs(view.values.sum(axis=1))
            scale = np.abs(view.values).max(axis=1)
            if (sums > 1e-8 * view.n * scale).any():
                return False
        return True


def _numeric_mask(cells: pd.DataFrame | pd.Series) -> np.ndarray:
    if isinstance(cells, pd.Series):
        return pd.to_numeric(cells, errors="coerce").notna().to_numpy()
    return cells.apply(lambda col: pd.to_numeric(col, errors="coerce")).notna().to_numpy()


def _parse_table(path: Path, sep: str) -> Matrix:
    try:
        raw = pd.read_csv(
            path,
            sep=sep,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            engine="c",
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyInput(f"{path} is empty", path=str(path)) from e
    except pd.errors.ParserError as e:
        raise ParseError(f"{path}: rows have different lengths ({e})", path=str(path)) from e

    if raw.empty:
        raise EmptyInput(f"{path} is empty", path=str(path))
    if raw.isna().to_numpy().any():
        raise ParseError(f"{path}: rows have different lengths", path=str(path))

    raw = raw.apply(lambda col: col.str.strip())
    # A label column / header row is present when all of its cells are non-numeric.
    has_labels = raw.shape[1] > 1 and raw.shape[0] > 1 and not _numeric_mask(raw.iloc[1:, 0]).any()
    has_header = raw.shape[0] > 1 and not _numeric_mask(raw.iloc[0, int(has_labels):]).any()

    body = raw.iloc[int(has_header):, int(has_labels):]
    if body.size == 0:
        raise EmptyInput(f"{path} has labels but no values", path=str(path))
    # to_numeric only locates bad cells; it is not correctly rounded.
    coerced = body.apply(lambda col: pd.to_numeric(col, errors="coerce")).to_numpy(dtype=np.float64)
    bad = ~np.isfinite(coerced)
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        cell = body.iat[row, col]
        raise ParseError(
            f"{path}: non-numeric cell {cell!r} at row {row + int(has_header) + 1}, "
            f"column {col + int(has_labels) + 1}",
            path=str(path),
        )
    numeric = body.to_numpy(dtype=object).astype(np.float64)

    row_labels = tuple(raw.iloc[int(has_header):, 0]) if has_labels else None
    col_labels = tuple(raw.iloc[0, int(has_labels):]) if has_header else None
    return Matrix(numeric, row_labels=row_labels, col_labels=col_labels)


def _read_binary(path: Path) -> Matrix:
    data = path.read_bytes()
    if not data:
        raise EmptyInput(f"{path} is empty", path=str(path))
    if len(data) < _BINARY_HEADER.size:
        raise ParseError(f"{path}: truncated header", path=str(path))
    magic, p, n = _BINARY_HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}", path=str(path))
    expected = _BINARY_HEADER.size + 8 * p * n
    if len(data) != expected:
        raise ParseError(
            f"{path}: expected {expected} bytes for a {p}x{n} matrix, found {len(data)}",
            path=str(path),
        )
    if p == 0 or n == 0:
        raise EmptyInput(f"{path} holds a {p}x{n} matrix", path=str(path))
    values = np.frombuffer(data, dtype="<f8", offset=_BINARY_HEADER.size).reshape(p, n)
    if not np.isfinite(values).all():
        raise ParseError(f"{path}: non-finite values", path=str(path))
    return Matrix(values)


def load_matrix(path: str | Path, format: MatrixFormat | str | None = None) -> Matrix:
    """Load a matrix from CSV, TSV or the dgcca binary format.

    Args:
        path: File to read.
        format: One of csv, tsv, binary. Inferred from the suffix when omitted.

    Returns:
        The parsed Matrix. Labels are attached when a header row or label
        column is present.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}", path=str(path))
    fmt = MatrixFormat(format) if format is not None else MatrixFormat.from_path(path)
    if fmt is MatrixFormat.BINARY:
        matrix = _read_binary(path)
    else:
        matrix = _parse_table(path, "," if fmt is MatrixFormat.CSV else "\t")
    logger.debug("loaded %s as %dx%d %s matrix", path, matrix.p, matrix.n, fmt.value)
    return matrix


def save_matrix(matrix: Matrix | np.ndarray, path: str | Path, format: MatrixFormat | str | None = None) -> Path:
    """Write a matrix; CSV/TSV keep labels, binary stores values only."""
    path = Path(path)
    if not isinstance(matrix, Matrix):
        matrix = Matrix(matrix)
    fmt = MatrixFormat(format) if format is not None else MatrixFormat.from_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt is MatrixFormat.BINARY:
        p, n = matrix.shape
        payload = _BINARY_HEADER.pack(BINARY_MAGIC, p, n) + matrix.values.astype("<f8").tobytes(order="C")
        path.write_bytes(payload)
    else:
        matrix.to_frame().to_csv(
            path,
            sep="," if fmt is MatrixFormat.CSV else "\t",
            header=matrix.col_labels is not None,
            index=matrix.row_labels is not None,
            float_format="%.17g",
        )
    return path


def row_center(m: Matrix) -> Matrix:
    """Subtract each row's mean."""
    return m.with_values(m.values - m.values.mean(axis=1, keepdims=True))


def assemble_dataset(views: Sequence[Matrix], names: Sequence[str] | None = None) -> MultiViewDataset:
    """Validate a shared sample count and row-center every view."""
    if len(views) < 2:
        raise ArityError(f"need at least 2 views, got {len(views)}", k=len(views))
    widths = [view.n for view in views]
    if len(set(widths)) != 1:
        raise ShapeError(f"views disagree on sample count: {widths}", n=widths)
    return MultiViewDataset(tuple(row_center(view) for view in views), names=tuple(names or ()))


def load_dataset(paths: Sequence[str | Path], format: MatrixFormat | str | None = None) -> MultiViewDataset:
    """Load and assemble views from files, naming each view after its file stem.

    Clashing stems fall back to view0, view1, ...
    """
    views = [load_matrix(path, format) for path in paths]
    names = [Path(path).stem for path in paths]
    if len(set(names)) != len(names):
        names = [f"view{k}" for k in range(len(paths))]
    return assemble_dataset(views, names=names)

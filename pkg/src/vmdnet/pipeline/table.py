"""Raw tabular data: CSV ingestion and the in-memory table type."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, ParseError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, CATEGORICAL)


@dataclass
class RawTable:
    """Column-oriented table with explicit missing markers.

    Continuous columns are float arrays using NaN as the missing marker;
    categorical columns are object arrays of ``str`` using ``None``.
    ``labels`` is an int array (or ``None`` for unlabeled data).
    """

    columns: list
    kinds: dict
    values: dict
    labels: np.ndarray | None = None
    label_name: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = None
        for c in self.columns:
            if self.kinds.get(c) not in KINDS:
                raise ConfigError(f"column {c!r} has unknown kind {self.kinds.get(c)!r}")
            size = len(self.values[c])
            if n is None:
                n = size
            elif size != n:
                raise DataError(f"column {c!r} has {size} rows, expected {n}")
        if self.labels is not None and n is not None and len(self.labels) != n:
            raise DataError(f"{len(self.labels)} labels for {n} rows")

    @property
    def n_rows(self):
        if self.columns:
            return len(self.values[self.columns[0]])
        return 0 if self.labels is None else len(self.labels)

    def continuous_columns(self):
        return [c for c in self.columns if self.kinds[c] == CONTINUOUS]

    def missing_mask(self, column):
        v = self.values[column]
        if self.kinds[column] == CONTINUOUS:
            return np.isnan(v)
        return np.array([x is None for x in v], dtype=bool)

    def n_missing(self):
        return int(sum(self.missing_mask(c).sum() for c in self.columns))

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return RawTable(
            columns=list(self.columns),
            kinds=dict(self.kinds),
            values={c: self.values[c][rows] for c in self.columns},
            labels=None if self.labels is None else self.labels[rows],
            label_name=self.label_name,
            meta=dict(self.meta),
        )

    def copy(self):
        return self.take(np.arange(self.n_rows))


def _parse_float(cell):
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(path, label=None, kinds=None, missing_token="NA"):
    """Read a CSV with a header row.

    Empty cells and ``missing_token`` become missing markers.  Column kinds
    come from ``kinds`` when given, otherwise a column is continuous iff every
    non-missing cell parses as a finite float.
    """
    kinds = dict(kinds or {})
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: missing header row", line=1) from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise ParseError(f"{path}: duplicate column names in header", line=1)
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: expected {len(header)} cells, found {len(row)}", line=reader.line_num
                )
            rows.append(row)

    if label is not None and label not in header:
        raise ConfigError(f"label column {label!r} not found in {path}")
    unknown = set(kinds) - set(header)
    if unknown:
        raise ConfigError(f"schema names unknown column(s): {', '.join(sorted(unknown))}")

    raw = {h: [r[i].strip() for r in rows] for i, h in enumerate(header)}

    def is_missing(cell):
        return cell == "" or cell == missing_token

    labels = None
    if label is not None:
        labels = np.empty(len(rows), dtype=np.int64)
        for i, cell in enumerate(raw[label]):
            v = _parse_float(cell) if not is_missing(cell) else None
            if v not in (0.0, 1.0):
                raise DataError(f"label {cell!r} on data row {i + 1} is not 0 or 1")
            labels[i] = int(v)

    columns = [h for h in header if h != label]
    out_kinds, values = {}, {}
    for c in columns:
        cells = raw[c]
        kind = kinds.get(c)
        if kind is None:
            parsed = [_parse_float(x) for x in cells if not is_missing(x)]
            kind = CONTINUOUS if all(p is not None for p in parsed) else CATEGORICAL
        if kind == CONTINUOUS:
            arr = np.empty(len(cells))
            for i, x in enumerate(cells):
                if is_missing(x):
                    arr[i] = np.nan
                    continue
                v = _parse_float(x)
                if v is None:
                    raise ParseError(f"{path}: column {c!r}: {x!r} is not a number", line=i + 2)
                arr[i] = v
        elif kind == CATEGORICAL:
            arr = np.array([None if is_missing(x) else x for x in cells], dtype=object)
        else:
            raise ConfigError(f"column {c!r} has unknown kind {kind!r}")
        out_kinds[c] = kind
        values[c] = arr
    return RawTable(columns=columns, kinds=out_kinds, values=values, labels=labels, label_name=label)


def format_float(v):
    """17 significant digits: enough for an exact round trip."""
    return format(float(v), ".17g")


def write_csv(table, path):
    header = list(table.columns)
    if table.labels is not None:
        header.append(table.label_name or "label")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(table.n_rows):
            row = []
            for c in table.columns:
                v = table.values[c][i]
                if table.kinds[c] == CONTINUOUS:
                    row.append("" if np.isnan(v) else format_float(v))
                else:
                    row.append("" if v is None else v)
            if table.labels is not None:
                row.append(str(int(table.labels[i])))
            w.writerow(row)

"""Imputation, z-score outlier removal, min-max scaling and modality grouping.

The fitted statistics of each step are kept in plain JSON-friendly dicts so
that a checkpoint can re-apply them to unseen data.
"""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from .table import CATEGORICAL, CONTINUOUS, RawTable

Z_THRESHOLD = 3.0
DEFAULT_MODALITY_ORDER = ("demographics", "clinical", "hormonal", "metabolic", "imaging")


def impute(t):
    """Median fill for continuous columns, mode fill for categorical ones.

    Mode ties go to the level seen first.  The fill values are recorded in
    ``meta["impute"]`` of the returned table.
    """
    out = t.copy()
    fills = {}
    for c in t.columns:
        missing = t.missing_mask(c)
        if t.n_rows and missing.all():
            raise DataError(f"column {c!r} has no observed values to impute from")
        if t.kinds[c] == CONTINUOUS:
            fill = float(np.median(t.values[c][~missing])) if (~missing).any() else 0.0
            col = t.values[c].copy()
            col[missing] = fill
        else:
            observed = [v for v in t.values[c] if v is not None]
            counts = Counter(observed)
            best = max(counts.values()) if counts else 0
            fill = next((v for v in observed if counts[v] == best), None)
            col = t.values[c].copy()
            col[missing] = fill
        fills[c] = fill
        out.values[c] = col
    out.meta["impute"] = fills
    return out


def zscores(col):
    mean = col.mean()
    std = col.std()
    if std == 0 or not np.isfinite(std):
        return np.zeros_like(col)
    return (col - mean) / std


def filter_outliers(t, threshold=Z_THRESHOLD):
    """Drop rows where any continuous column has ``|z| > threshold``.

    z uses the population mean and standard deviation of the whole column.
    Returns ``(table, removed_row_indices)``.
    """
    if t.n_rows == 0:
        return t.copy(), np.array([], dtype=np.int64)
    flagged = np.zeros(t.n_rows, dtype=bool)
    for c in t.continuous_columns():
        col = t.values[c]
        if np.isnan(col).any():
            raise DataError(f"column {c!r} still has missing values; impute first")
        flagged |= np.abs(zscores(col)) > threshold
    removed = np.nonzero(flagged)[0]
    out = t.take(np.nonzero(~flagged)[0])
    out.meta["outliers_removed"] = removed.tolist()
    return out, removed


def normalize_minmax(t):
    """Scale continuous columns to [0, 1]; constant columns become 0.

    Returns ``(table, stats)`` with ``stats = {column: [min, max]}``.
    """
    out = t.copy()
    stats = {}
    for c in t.continuous_columns():
        col = t.values[c]
        lo = float(np.min(col)) if col.size else 0.0
        hi = float(np.max(col)) if col.size else 0.0
        stats[c] = [lo, hi]
        out.values[c] = _scale(col, lo, hi)
    out.meta["minmax"] = stats
    return out, stats


def _scale(col, lo, hi):
    if hi > lo:
        return np.clip((col - lo) / (hi - lo), 0.0, 1.0)
    return np.zeros_like(col)


def apply_minmax(t, stats):
    """Apply stored min/max to unseen data, clamping into [0, 1]."""
    out = t.copy()
    for c, (lo, hi) in stats.items():
        if c not in out.values:
            raise ConfigError(f"normalization stats name unknown column {c!r}")
        out.values[c] = _scale(out.values[c], lo, hi)
    return out


def apply_imputation(t, fills):
    out = t.copy()
    for c, fill in fills.items():
        if c not in out.values:
            raise ConfigError(f"imputation stats name unknown column {c!r}")
        col = out.values[c].copy()
        col[out.missing_mask(c)] = fill
        out.values[c] = col
    return out


def preprocess(t, impute_missing=True, remove_outliers=True, normalize=True):
    """Imputation, then outlier removal, then normalization.

    Returns ``(table, stats)``; ``stats`` is JSON-serializable.
    """
    stats = {"impute": {}, "minmax": {}, "outliers_removed": []}
    if impute_missing:
        t = impute(t)
        stats["impute"] = t.meta["impute"]
    elif t.n_missing():
        raise DataError("table has missing values and imputation is disabled")
    if remove_outliers:
        t, removed = filter_outliers(t)
        stats["outliers_removed"] = removed.tolist()
    if normalize:
        t, mm = normalize_minmax(t)
        stats["minmax"] = mm
    return t, stats


def apply_preprocessing(t, stats):
    """Re-apply fitted imputation and scaling to new rows (no rows are dropped)."""
    t = apply_imputation(t, stats.get("impute", {}))
    if t.n_missing():
        raise DataError("table still has missing values after imputation")
    return apply_minmax(t, stats.get("minmax", {}))


# ----------------------------------------------------------------------------
# modality grouping


@dataclass
class Dataset:
    """Numeric feature matrix with modality groups acting as pseudo-timesteps.

    Columns are stored group by group in timestep order; ``groups`` holds
    ``(name, [column indices])`` pairs that partition ``range(D)``.
    """

    features: np.ndarray
    labels: np.ndarray
    columns: list
    kinds: list
    groups: list
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = sorted(i for _, idx in self.groups for i in idx)
        if seen != list(range(len(self.columns))):
            raise ConfigError("modality groups must partition the feature columns exactly once")
        if self.features.shape != (len(self.labels), len(self.columns)):
            raise DataError(
                f"features shape {self.features.shape} inconsistent with "
                f"{len(self.labels)} labels and {len(self.columns)} columns"
            )

    @property
    def n_records(self):
        return self.features.shape[0]

    @property
    def seq_len(self):
        return len(self.groups)

    @property
    def input_dim(self):
        return max(len(idx) for _, idx in self.groups)

    def group_of(self, column):
        j = self.columns.index(column)
        for g, (_, idx) in enumerate(self.groups):
            if j in idx:
                return g, idx.index(j)
        raise ConfigError(f"column {column!r} is in no group")

    def padding_mask(self):
        """``(T, d)`` boolean mask, True where a cell holds a real feature."""
        mask = np.zeros((self.seq_len, self.input_dim), dtype=bool)
        for t, (_, idx) in enumerate(self.groups):
            mask[t, :len(idx)] = True
        return mask

    def to_tensor(self):
        """Right-zero-padded ``(N, T, d)`` sequence array."""
        out = np.zeros((self.n_records, self.seq_len, self.input_dim))
        for t, (_, idx) in enumerate(self.groups):
            out[:, t, :len(idx)] = self.features[:, idx]
        return out

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows], labels=self.labels[rows], columns=list(self.columns),
            kinds=list(self.kinds), groups=[(n, list(i)) for n, i in self.groups],
            stats=self.stats,
        )

    def with_labels(self, labels):
        return Dataset(
            features=self.features, labels=np.asarray(labels, dtype=np.int64),
            columns=list(self.columns), kinds=list(self.kinds),
            groups=[(n, list(i)) for n, i in self.groups], stats=self.stats,
        )


def order_groups(grouping):
    """Accept a list of ``(name, columns)`` pairs or a dict; dicts follow the default modality order."""
    if isinstance(grouping, dict):
        items = list(grouping.items())
        rank = {name: i for i, name in enumerate(DEFAULT_MODALITY_ORDER)}
        items.sort(key=lambda kv: rank.get(kv[0], len(rank)))
        return [(n, list(c)) for n, c in items]
    return [(n, list(c)) for n, c in grouping]


def build_sequences(t, grouping, categories=None):
    """Turn a preprocessed table into a :class:`Dataset`.

    Each modality group becomes one pseudo-timestep; within a group columns
    follow the order listed in ``grouping``.  Categorical levels are coded as
    ``rank / (levels - 1)`` over the sorted level set (or the supplied
    ``categories`` mapping), which keeps every feature in [0, 1].
    """
    groups = order_groups(grouping)
    if not groups:
        raise ConfigError("grouping has no modality groups")
    owner = {}
    for name, cols in groups:
        if not cols:
            raise ConfigError(f"modality group {name!r} is empty")
        for c in cols:
            if c not in t.values:
                raise ConfigError(f"modality group {name!r} names unknown column {c!r}")
            if c in owner:
                raise ConfigError(f"column {c!r} appears in groups {owner[c]!r} and {name!r}")
            owner[c] = name
    stray = [c for c in t.columns if c not in owner]
    if stray:
        raise ConfigError(f"column(s) in no modality group: {', '.join(stray)}")
    if t.labels is None:
        raise DataError("table has no label column")
    if t.n_missing():
        raise DataError("table has missing values; impute before building sequences")

    categories = dict(categories or {})
    columns, kinds, blocks, index_groups = [], [], [], []
    for name, cols in groups:
        idx = []
        for c in cols:
            idx.append(len(columns))
            columns.append(c)
            kinds.append(t.kinds[c])
            if t.kinds[c] == CATEGORICAL:
                levels = categories.setdefault(c, sorted(set(t.values[c])))
                code = {lvl: i for i, lvl in enumerate(levels)}
                unknown = set(t.values[c]) - set(code)
                if unknown:
                    raise DataError(f"column {c!r} has unseen level(s) {sorted(unknown)}")
                denom = max(len(levels) - 1, 1)
                blocks.append(np.array([code[v] / denom for v in t.values[c]], dtype=np.float64))
            else:
                blocks.append(np.asarray(t.values[c], dtype=np.float64))
        index_groups.append((name, idx))
    features = np.column_stack(blocks) if blocks else np.zeros((t.n_rows, 0))
    return Dataset(
        features=features, labels=np.asarray(t.labels, dtype=np.int64), columns=columns,
        kinds=kinds, groups=index_groups, stats={"categories": categories},
    )


def prepare_dataset(t, grouping, impute_missing=True, remove_outliers=True, normalize=True):
    """Full recipe: preprocess then group into pseudo-timesteps.

    The returned dataset's ``stats`` hold everything needed to re-apply the
    recipe to unseen rows.
    """
    t, stats = preprocess(t, impute_missing, remove_outliers, normalize)
    data = build_sequences(t, grouping)
    data.stats = {**stats, **data.stats, "grouping": [[n, list(c)] for n, c in order_groups(grouping)]}
    return data


def prepare_unseen(t, stats):
    """Apply a fitted recipe (from :func:`prepare_dataset`) to new rows."""
    t = apply_preprocessing(t, stats)
    data = build_sequences(t, stats["grouping"], categories=stats.get("categories"))
    data.stats = stats
    return data

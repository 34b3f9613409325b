"""Seeded synthetic stand-in for a multimodal single-visit clinical table.

Continuous features are class-conditional Gaussians; a random subset of
them (the "informative" features) has its positive-class mean shifted by
``separation`` standard deviations.  Binary categorical features get a
class-dependent "yes" probability.  Missing cells and gross outliers are
injected afterwards at the configured rates.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import make_rng
from ..errors import ConfigError
from .table import CATEGORICAL, CONTINUOUS, RawTable


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    continuous: tuple = ()
    categorical: tuple = ()

    @classmethod
    def counts(cls, name, n_continuous, n_categorical=0):
        return cls(
            name,
            tuple(f"{name}_x{i + 1}" for i in range(n_continuous)),
            tuple(f"{name}_c{i + 1}" for i in range(n_categorical)),
        )

    @property
    def columns(self):
        return list(self.continuous) + list(self.categorical)


DEFAULT_MODALITIES = (
    ModalitySpec("demographics", ("age", "height", "weight", "bmi"), ("sex",)),
    ModalitySpec("clinical", ("hirsutism_score",), ("menstrual_irregularity", "acne", "alopecia")),
    ModalitySpec("hormonal", ("lh", "fsh", "testosterone", "shbg", "lh_fsh_ratio")),
    ModalitySpec("metabolic", ("fasting_glucose", "fasting_insulin", "homa_ir")),
    ModalitySpec("imaging", ("organ_volume", "follicle_count")),
)

# separation used when a run asks for "strong" class structure
STRONG_SEPARATION = 1.5


@dataclass(frozen=True)
class SynthConfig:
    rows: int = 648
    modalities: tuple = DEFAULT_MODALITIES
    positive_fraction: float = 0.4
    separation: float = 1.0
    informative_fraction: float = 0.5
    missing_rate: float = 0.05
    outlier_rate: float = 0.01
    seed: int = 0
    label_name: str = "label"

    def __post_init__(self):
        if int(self.rows) != self.rows or self.rows < 0:
            raise ConfigError(f"rows must be a non-negative integer, got {self.rows}")
        for name in ("positive_fraction", "informative_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        for name in ("missing_rate", "outlier_rate"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        if not (math.isfinite(self.separation) and self.separation >= 0):
            raise ConfigError(f"separation must be a finite non-negative number, got {self.separation}")
        if not self.modalities:
            raise ConfigError("at least one modality is required")
        names = [c for m in self.modalities for c in m.columns]
        if len(set(names)) != len(names) or self.label_name in names:
            raise ConfigError("synthetic column names must be unique and differ from the label")

    def grouping(self):
        return [(m.name, m.columns) for m in self.modalities]


def synth_generate(cfg=None, seed=None):
    """Draw a :class:`RawTable`; ``meta["informative"]`` maps informative columns to their shift sign."""
    cfg = cfg or SynthConfig()
    rng = make_rng(cfg.seed if seed is None else seed)
    n = cfg.rows

    n_pos = int(round(n * cfg.positive_fraction))
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_pos] = 1
    labels = rng.permutation(labels)
    y = labels == 1

    cont = [c for m in cfg.modalities for c in m.continuous]
    cat = [c for m in cfg.modalities for c in m.categorical]
    all_cols = cont + cat
    n_inf = int(round(cfg.informative_fraction * len(all_cols)))
    informative = set(rng.choice(len(all_cols), size=n_inf, replace=False).tolist()) if n_inf else set()
    signs = {}

    values, kinds, scale = {}, {}, {}
    for j, c in enumerate(all_cols):
        sign = 1.0 if rng.random() < 0.5 else -1.0
        shift = cfg.separation if j in informative else 0.0
        if j in informative:
            signs[c] = sign
        if c in cont:
            mu = rng.uniform(10.0, 100.0)
            sd = mu * rng.uniform(0.1, 0.3)
            col = rng.normal(mu, sd, size=n) + y * sign * shift * sd
            values[c] = col
            kinds[c] = CONTINUOUS
            scale[c] = (mu, sd)
        else:
            base = rng.uniform(0.2, 0.5)
            logit = math.log(base / (1.0 - base))
            p1 = 1.0 / (1.0 + math.exp(-(logit + sign * shift)))
            draw = rng.random(n)
            yes = np.where(y, draw < p1, draw < base)
            values[c] = np.where(yes, "yes", "no").astype(object)
            kinds[c] = CATEGORICAL

    # gross outliers: one continuous cell pushed 8 standard deviations out
    if cont and cfg.outlier_rate > 0:
        hit = np.nonzero(rng.random(n) < cfg.outlier_rate)[0]
        for i in hit:
            c = cont[rng.integers(len(cont))]
            mu, sd = scale[c]
            values[c][i] = mu + (8.0 if rng.random() < 0.5 else -8.0) * sd

    if cfg.missing_rate > 0:
        for c in all_cols:
            miss = rng.random(n) < cfg.missing_rate
            if kinds[c] == CONTINUOUS:
                values[c][miss] = np.nan
            else:
                values[c][miss] = None

    columns = [c for m in cfg.modalities for c in m.columns]
    table = RawTable(
        columns=columns, kinds={c: kinds[c] for c in columns}, values={c: values[c] for c in columns},
        labels=labels, label_name=cfg.label_name,
    )
    table.meta["informative"] = signs
    return table

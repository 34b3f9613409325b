"""Variational mode decomposition.

Splits a real 1-D signal into ``K`` band-limited modes by alternating, in the
frequency domain, a Wiener-filter update of each mode's analytic spectrum, a
power-weighted centroid update of its center frequency, and (optionally) a
dual-ascent step on the reconstruction constraint.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import fft, ifft, make_rng
from .errors import InputError

INIT_SCHEMES = ("zero", "uniform-spread", "random")
MIN_SIGNAL_LENGTH = 8


@dataclass(frozen=True)
class VmdConfig:
    k_modes: int = 2
    alpha: float = 2000.0
    tau: float = 1.0
    tol: float = 1e-7
    max_iter: int = 500
    init_scheme: str = "uniform-spread"

    def __post_init__(self):
        if int(self.k_modes) != self.k_modes or self.k_modes < 1:
            raise InputError(f"k_modes must be an integer >= 1, got {self.k_modes}")
        if not self.alpha > 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if not self.tau >= 0:
            raise InputError(f"tau must be non-negative, got {self.tau}")
        if not self.tol > 0:
            raise InputError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InputError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if self.init_scheme not in INIT_SCHEMES:
            raise InputError(f"init_scheme must be one of {INIT_SCHEMES}, got {self.init_scheme!r}")


@dataclass
class ModeSet:
    """Modes (shape ``(K, N)``) sorted by ascending center frequency."""

    modes: np.ndarray
    center_freqs: np.ndarray
    iterations_used: int
    converged: bool
    final_change: float = field(default=float("nan"))

    @property
    def k_modes(self):
        return self.modes.shape[0]


def _as_signal(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"signal must be 1-D, got shape {x.shape}")
    if x.size < MIN_SIGNAL_LENGTH:
        raise InputError(f"signal needs at least {MIN_SIGNAL_LENGTH} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InputError("signal contains non-finite samples")
    return x


def _initial_omegas(cfg, n_ext, rng):
    k = cfg.k_modes
    if cfg.init_scheme == "zero":
        return np.zeros(k)
    if cfg.init_scheme == "uniform-spread":
        return (np.arange(1, k + 1) - 0.5) / (2 * k)
    if rng is None:
        rng = make_rng(0)
    # log-uniform between the lowest resolvable frequency and Nyquist
    lo = np.log(1.0 / n_ext)
    return np.sort(np.exp(lo + (np.log(0.5) - lo) * rng.random(k)))


def vmd_decompose(x, cfg=None, rng=None):
    """Decompose ``x`` into ``cfg.k_modes`` modes.

    The signal is mirror-extended by half its length on each side before the
    transform and cropped back afterwards.  ``rng`` is only consulted for the
    ``random`` init scheme.
    """
    cfg = cfg or VmdConfig()
    x = _as_signal(x)
    n = x.size
    k = cfg.k_modes
    if k > n / 2:
        raise InputError(f"more modes than resolvable bands: K={k} for {n} samples")

    left = n // 2
    ext = np.concatenate([x[:left][::-1], x, x[left:][::-1]])
    t_ext = ext.size
    freqs = np.fft.fftfreq(t_ext)
    positive = freqs >= 0
    f_pos = fft(ext) * positive
    f_pos_freqs = freqs[positive]

    u = np.zeros((k, t_ext), dtype=np.complex128)
    omega = _initial_omegas(cfg, t_ext, rng)
    lam = np.zeros(t_ext, dtype=np.complex128)
    total = np.zeros(t_ext, dtype=np.complex128)

    change = np.inf
    it = 0
    while it < cfg.max_iter:
        it += 1
        u_old = u.copy()
        for j in range(k):
            total -= u[j]
            u[j] = (f_pos - total - lam / 2) / (1.0 + cfg.alpha * (freqs - omega[j]) ** 2)
            u[j] *= positive
            total += u[j]
            power = np.abs(u[j][positive]) ** 2
            p_sum = power.sum()
            if p_sum > 0:
                omega[j] = np.dot(f_pos_freqs, power) / p_sum
        if cfg.tau > 0:
            lam = lam + cfg.tau * (total - f_pos)
        diff = np.sum(np.abs(u - u_old) ** 2, axis=1)
        ref = np.sum(np.abs(u_old) ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            rel = np.where(ref > 0, diff / ref, np.where(diff > 0, np.inf, 0.0))
        change = float(np.sum(rel))
        if change <= cfg.tol:
            break

    # rebuild the full Hermitian spectrum from the analytic half
    full = u.copy()
    pos_idx = np.nonzero(freqs > 0)[0]
    full[:, (t_ext - pos_idx) % t_ext] = np.conj(u[:, pos_idx])
    modes = np.real(ifft(full))[:, left:left + n]

    order = np.argsort(omega, kind="stable")
    return ModeSet(
        modes=np.ascontiguousarray(modes[order]),
        center_freqs=np.clip(omega[order], 0.0, 0.5),
        iterations_used=it,
        converged=change <= cfg.tol,
        final_change=change,
    )


def vmd_reconstruct(m):
    """Sum of all modes."""
    return np.sum(m.modes, axis=0)


def vmd_features(data, columns, cfg=None):
    """Replace each selected column of a ``Dataset`` with ``K`` mode columns.

    If the column's modality group is at least 8 wide, each record's group
    vector is decomposed and the column keeps its own position in every mode.
    Otherwise the column itself, read across records in index order, is the
    signal.  Mode columns keep the group slot of the column they replace and
    are named ``<column>_mode<k>``.
    """
    from .pipeline.preprocess import Dataset
    from .pipeline.table import CONTINUOUS

    cfg = cfg or VmdConfig()
    columns = list(columns or [])
    if not columns:
        return data
    for c in columns:
        if c not in data.columns:
            raise InputError(f"unknown column {c!r}")
        if data.kinds[data.columns.index(c)] != CONTINUOUS:
            raise InputError(f"column {c!r} is categorical; VMD needs a continuous column")
    if len(set(columns)) != len(columns):
        raise InputError("duplicate column in VMD selection")

    k = cfg.k_modes
    replaced = {}
    per_record_cache = {}
    for c in columns:
        g, pos = data.group_of(c)
        idx = data.groups[g][1]
        if len(idx) >= MIN_SIGNAL_LENGTH:
            if g not in per_record_cache:
                per_record_cache[g] = np.stack(
                    [vmd_decompose(row, cfg).modes for row in data.features[:, idx]]
                )  # (N, K, width)
            replaced[c] = per_record_cache[g][:, :, pos]
        else:
            replaced[c] = vmd_decompose(data.features[:, data.columns.index(c)], cfg).modes.T

    new_cols, new_kinds, blocks, new_groups = [], [], [], []
    for name, idx in data.groups:
        gidx = []
        for j in idx:
            c = data.columns[j]
            if c in replaced:
                for m in range(k):
                    gidx.append(len(new_cols))
                    new_cols.append(f"{c}_mode{m + 1}")
                    new_kinds.append(CONTINUOUS)
                    blocks.append(replaced[c][:, m])
            else:
                gidx.append(len(new_cols))
                new_cols.append(c)
                new_kinds.append(data.kinds[j])
                blocks.append(data.features[:, j])
        new_groups.append((name, gidx))
    return Dataset(
        features=np.column_stack(blocks), labels=data.labels.copy(), columns=new_cols,
        kinds=new_kinds, groups=new_groups, stats=data.stats,
    )

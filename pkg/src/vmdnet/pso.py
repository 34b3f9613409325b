"""Particle swarm search over a mixed continuous / integer / divisor box.

Particles live in a continuous relaxation of the box.  Integer dimensions
are rounded and divisor dimensions snapped only when a position is decoded
for evaluation; the velocity and position updates never see the rounding.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import derive_seed, make_rng
from .errors import ConfigError, TrainingError

log = logging.getLogger(__name__)

KINDS = ("continuous", "integer", "divisor")


@dataclass(frozen=True)
class Dimension:
    """One searched coordinate.

    A ``divisor`` dimension is snapped to a divisor of ``factor * <of>``,
    where ``of`` names another (integer) dimension; e.g. attention heads must
    divide the BiLSTM output width ``2 * hidden_size``.
    """

    name: str
    kind: str
    lower: float
    upper: float
    of: str | None = None
    factor: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"dimension {self.name!r}: unknown kind {self.kind!r}")
        if not self.lower < self.upper:
            raise ConfigError(f"dimension {self.name!r}: need lower < upper, got [{self.lower}, {self.upper}]")
        if self.kind != "continuous" and (self.lower != int(self.lower) or self.upper != int(self.upper)):
            raise ConfigError(f"dimension {self.name!r}: integer bounds required")
        if self.kind == "divisor" and not self.of:
            raise ConfigError(f"dimension {self.name!r}: divisor dimension needs 'of'")

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "lower": self.lower, "upper": self.upper}
        if self.kind == "divisor":
            d.update(of=self.of, factor=self.factor)
        return d


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ConfigError("search space dimension names must be unique")
        for d in self.dimensions:
            if d.kind == "divisor":
                ref = next((e for e in self.dimensions if e.name == d.of), None)
                if ref is None or ref.kind != "integer":
                    raise ConfigError(f"dimension {d.name!r} refers to {d.of!r}, which is not an integer dimension")

    @property
    def lower(self):
        return np.array([d.lower for d in self.dimensions], dtype=np.float64)

    @property
    def upper(self):
        return np.array([d.upper for d in self.dimensions], dtype=np.float64)

    @property
    def names(self):
        return [d.name for d in self.dimensions]

    def __len__(self):
        return len(self.dimensions)

    @classmethod
    def from_list(cls, dims):
        return cls(tuple(Dimension(**d) for d in dims))

    def to_list(self):
        return [d.to_dict() for d in self.dimensions]


DEFAULT_SPACE = SearchSpace((
    Dimension("hidden_size", "integer", 8, 32),
    Dimension("num_heads", "divisor", 1, 4, of="hidden_size", factor=2),
    Dimension("k_modes", "integer", 1, 4),
    Dimension("dropout_rate", "continuous", 0.0, 0.5),
))


def round_half_away(x):
    return float(math.copysign(math.floor(abs(x) + 0.5), x))


def divisors(n):
    small = [i for i in range(1, int(math.isqrt(n)) + 1) if n % i == 0]
    return sorted(set(small + [n // i for i in small]))


def _snap_divisor(value, width, lower, upper):
    cands = [q for q in divisors(width) if lower <= q <= upper] or divisors(width)
    # nearest; ties go to the smaller divisor
    return min(cands, key=lambda q: (abs(q - value), q))


def decode_position(pos, space):
    """Map a raw position to concrete hyperparameters (``{name: value}``).

    Continuous values pass through, integers round half away from zero and
    divisor dimensions snap to the nearest divisor of their reference width.
    """
    pos = np.asarray(pos, dtype=np.float64)
    out = {}
    for d, v in zip(space.dimensions, pos):
        if d.kind == "continuous":
            out[d.name] = float(v)
        elif d.kind == "integer":
            out[d.name] = int(round_half_away(v))
    for d, v in zip(space.dimensions, pos):
        if d.kind == "divisor":
            width = d.factor * out[d.of]
            out[d.name] = _snap_divisor(float(v), width, d.lower, d.upper)
    return {d.name: out[d.name] for d in space.dimensions}


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 10
    iterations: int = 10
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    velocity_clamp: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ConfigError(f"swarm_size must be >= 2, got {self.swarm_size}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        for name in ("inertia", "cognitive", "social", "velocity_clamp"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_score: float = -math.inf


@dataclass
class SwarmResult:
    best_position: dict
    best_raw_position: np.ndarray
    best_score: float
    history: list
    evaluations: int
    trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    particles: list = field(default_factory=list)


def pso_optimize(objective, space, cfg=None, init_positions=None, init_velocities=None, threads=1):
    """Maximize ``objective(decoded_hyperparameters)`` over ``space``.

    Each iteration evaluates every particle, updates personal and global
    bests, then applies

        v <- w v + c1 r1 (p_best - x) + c2 r2 (g_best - x),   x <- x + v

    with ``r1, r2 ~ U(0, 1)`` drawn per coordinate.  Velocities are clamped
    to ``velocity_clamp`` times each dimension's range and positions are
    clipped to the box.  A non-finite score counts as ``-inf``.
    """
    cfg = cfg or PsoConfig()
    rng = make_rng(cfg.seed)
    lo, hi = space.lower, space.upper
    span = hi - lo
    vmax = cfg.velocity_clamp * span
    n, dim = cfg.swarm_size, len(space)

    x = lo + span * rng.random((n, dim)) if init_positions is None else np.array(init_positions, dtype=np.float64)
    v = np.zeros((n, dim)) if init_velocities is None else np.array(init_velocities, dtype=np.float64)
    if x.shape != (n, dim) or v.shape != (n, dim):
        raise ConfigError(f"initial positions/velocities must have shape {(n, dim)}")
    x = np.clip(x, lo, hi)
    v = np.clip(v, -vmax, vmax)
    pbest = x.copy()
    pbest_score = np.full(n, -math.inf)
    gbest = x[0].copy()
    gbest_score = -math.inf
    history, trace, warns = [], [], []
    evaluations = 0

    def score(i_pos):
        i, pos = i_pos
        hp = decode_position(pos, space)
        s = objective(hp)
        return hp, s

    pool = ThreadPoolExecutor(max_workers=threads) if threads and threads > 1 else None
    try:
        for it in range(cfg.iterations):
            items = list(enumerate(x.copy()))
            results = list(pool.map(score, items)) if pool else [score(item) for item in items]
            for i, (hp, s) in enumerate(results):
                evaluations += 1
                s = float(s) if s is not None else math.nan
                if not math.isfinite(s):
                    msg = f"iteration {it} particle {i}: non-finite score {s} for {hp}; scored -inf"
                    log.warning(msg)
                    warns.append(msg)
                    s = -math.inf
                trace.append({
                    "iteration": it, "particle": i, "position": x[i].tolist(),
                    "velocity": v[i].tolist(), "hyperparameters": hp, "score": s,
                })
                if s > pbest_score[i]:
                    pbest_score[i] = s
                    pbest[i] = x[i]
                if s > gbest_score:
                    gbest_score = s
                    gbest = x[i].copy()
            history.append(gbest_score)

            r1 = rng.random((n, dim))
            r2 = rng.random((n, dim))
            v = (cfg.inertia * v + cfg.cognitive * r1 * (pbest - x)
                 + cfg.social * r2 * (gbest - x))
            v = np.clip(v, -vmax, vmax)
            x = np.clip(x + v, lo, hi)
    finally:
        if pool:
            pool.shutdown()

    particles = [Particle(x[i].copy(), v[i].copy(), pbest[i].copy(), float(pbest_score[i])) for i in range(n)]
    return SwarmResult(
        best_position=decode_position(gbest, space), best_raw_position=gbest, best_score=gbest_score,
        history=history, evaluations=evaluations, trace=trace, warnings=warns, particles=particles,
    )


def hp_objective(hp, data, protocol=None, spec=None, seed=0, vmd_columns=None, vmd_cfg=None):
    """Validation AUC of a model trained with hyperparameters ``hp``.

    ``data`` is split once (stratified, from ``seed``) into training and
    validation parts; training runs for at most ``protocol.search_max_epochs``
    epochs.  A diverging run scores 0.0.
    """
    from .pipeline.experiment import AblationSpec, HyperParams, apply_vmd, fit_and_score
    from .pipeline.training import TrainProtocol, stratified_holdout

    protocol = protocol or TrainProtocol()
    spec = spec or AblationSpec()
    if isinstance(hp, dict):
        hp = HyperParams(**hp)
    if spec.use_vmd:
        data = apply_vmd(data, hp, vmd_columns, vmd_cfg)
    train_idx, val_idx = stratified_holdout(data.labels, protocol.val_fraction, derive_seed(seed, 0))
    try:
        _, _, _, report = fit_and_score(
            data, train_idx, val_idx, hp, spec, protocol, derive_seed(seed, 1),
            max_epochs=protocol.search_max_epochs,
        )
    except TrainingError as exc:
        log.warning("training diverged for %s: %s; scoring 0.0", hp, exc)
        return 0.0
    return 0.0 if report.auc is None else report.auc

"""Stratified k-fold plans and mini-batch Adam training with early stopping."""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..core import make_rng
from ..errors import ConfigError, TrainingError
from ..model import AdamState, adam_step, backward_model, bce_loss, forward_model, init_params, predict_proba

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainProtocol:
    k_folds: int = 5
    patience: int = 10
    max_epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    # share of each training fold held out for early stopping / search scoring
    val_fraction: float = 0.2
    # epoch cap used while scoring PSO particles
    search_max_epochs: int = 30
    threshold: float = 0.5

    def __post_init__(self):
        if self.k_folds < 2:
            raise ConfigError(f"k_folds must be >= 2, got {self.k_folds}")
        for name in ("patience", "max_epochs", "batch_size", "search_max_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


@dataclass
class FoldPlan:
    k: int
    folds: list  # [(train_idx, val_idx)]
    seed: int


def kfold_split(n, k, seed=0, labels=None):
    """Stratified k-fold assignment.

    Each class is shuffled and dealt round-robin into folds, continuing the
    deal across classes, so per-class and total fold sizes differ by at most 1.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if n < k:
        raise ConfigError(f"cannot make {k} folds from {n} samples")
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels)
    if labels.shape != (n,):
        raise ConfigError(f"expected {n} labels, got shape {labels.shape}")
    rng = make_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        members = np.nonzero(labels == cls)[0]
        if members.size < k:
            warnings.warn(
                f"class {cls} has {members.size} members for {k} folds; "
                "some validation folds will not contain it",
                stacklevel=2,
            )
        members = rng.permutation(members)
        fold_of[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    folds = []
    for f in range(k):
        val = np.nonzero(fold_of == f)[0]
        train = np.nonzero(fold_of != f)[0]
        folds.append((train, val))
    return FoldPlan(k=k, folds=folds, seed=seed)


def stratified_holdout(labels, fraction, seed):
    """Split indices into (keep, held_out) with ``fraction`` of each class held out."""
    labels = np.asarray(labels)
    rng = make_rng(seed)
    held = []
    for cls in np.unique(labels):
        members = rng.permutation(np.nonzero(labels == cls)[0])
        n_out = int(round(fraction * members.size))
        if members.size > 1:
            n_out = min(max(n_out, 1), members.size - 1)
        else:
            n_out = 0
        held.append(members[:n_out])
    held = np.sort(np.concatenate(held)) if held else np.array([], dtype=np.int64)
    keep = np.setdiff1d(np.arange(labels.size), held)
    return keep, held


class EarlyStopping:
    """Track the best validation loss; stop after ``patience`` epochs without strict improvement."""

    def __init__(self, patience=10):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = None
        self.bad_epochs = 0

    def update(self, epoch, loss):
        """Record one epoch; returns True if it is the new best."""
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self):
        return self.bad_epochs >= self.patience


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int | None = None
    stopped_epoch: int = 0
    early_stopped: bool = False


def mean_loss(params, cfg, x, y):
    return float(np.mean(bce_loss(y, predict_proba(params, cfg, x))))


def train_with_early_stopping(x_train, y_train, x_val, y_val, cfg, protocol=None, seed=0,
                              max_epochs=None, params=None):
    """Mini-batch Adam on BCE, shuffled every epoch, early-stopped on validation loss.

    Returns ``(params, history)`` where ``params`` are the weights from the
    best validation epoch (epochs are numbered from 1).
    """
    protocol = protocol or TrainProtocol()
    max_epochs = max_epochs or protocol.max_epochs
    rng = make_rng(seed)
    params = params if params is not None else init_params(cfg, rng)
    state = AdamState(learning_rate=protocol.learning_rate)
    y_train = np.asarray(y_train, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    n = x_train.shape[0]
    stopper = EarlyStopping(protocol.patience)
    history = TrainHistory()
    best = params.copy()

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, protocol.batch_size):
            idx = order[start:start + protocol.batch_size]
            yhat, cache = forward_model(params, cfg, x_train[idx], rng=rng, training=True)
            total += float(np.sum(bce_loss(y_train[idx], yhat)))
            grads = backward_model(cache, y_train[idx])
            adam_step(params, grads, state, scale=1.0 / idx.size)
        train_loss = total / n
        val_loss = mean_loss(params, cfg, x_val, y_val)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.stopped_epoch = epoch
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingError(
                f"non-finite loss at epoch {epoch} (train={train_loss}, val={val_loss})"
            )
        if stopper.update(epoch, val_loss):
            best = params.copy()
        if stopper.should_stop:
            history.early_stopped = True
            break
    history.best_epoch = stopper.best_epoch
    log.debug("trained %d epochs, best epoch %s (val %.5f)", history.stopped_epoch,
              history.best_epoch, stopper.best_loss)
    return best, history

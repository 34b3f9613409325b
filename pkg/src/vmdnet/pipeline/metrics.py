"""Binary classification metrics: rank AUC, ROC points and threshold metrics."""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from ..errors import InputError


def auc_rank(scores, labels):
    """Mann-Whitney AUC from average ranks; tied positive/negative pairs count 0.5.

    Returns ``None`` when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise InputError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels):
    """``(fpr, tpr, threshold)`` triples, one per distinct score plus the origin.

    A sample is called positive when ``score >= threshold``; points are in
    non-decreasing fpr order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y == 1)
    fp = np.cumsum(y != 1)
    # last index of each run of equal scores
    ends = np.nonzero(np.append(s[1:] != s[:-1], True))[0] if s.size else np.array([], dtype=int)
    pts = [(0.0, 0.0, float("inf"))]
    for e in ends:
        fpr = fp[e] / n_neg if n_neg else 0.0
        tpr = tp[e] / n_pos if n_pos else 0.0
        pts.append((float(fpr), float(tpr), float(s[e])))
    return pts


@dataclass
class EvalReport:
    auc: float | None
    f1: float | None
    sensitivity: float | None
    specificity: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float
    roc_points: list = field(default_factory=list)
    auc_note: str | None = None

    @property
    def n(self):
        return self.tp + self.fp + self.tn + self.fn

    def confusion(self):
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}

    def summary(self):
        """Metric dict without ROC points."""
        d = asdict(self)
        d.pop("roc_points")
        return d


def _ratio(num, den):
    return None if den == 0 else num / den


def evaluate_scores(scores, labels, threshold=0.5):
    """Metrics for predicted probabilities; ``score >= threshold`` is positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise InputError(f"{scores.size} scores for {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise InputError("labels must be 0 or 1")
    pred = scores >= threshold
    truth = labels == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    tn = int(np.sum(~pred & ~truth))
    fn = int(np.sum(~pred & truth))
    auc = auc_rank(scores, labels)
    note = None if auc is not None else "AUC undefined: labels contain a single class"
    return EvalReport(
        auc=auc,
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
        tp=tp, fp=fp, tn=tn, fn=fn,
        threshold=float(threshold),
        roc_points=roc_points(scores, labels),
        auc_note=note,
    )


def evaluate(params, cfg, x, labels, threshold=0.5):
    """Run the model in inference mode on ``x`` and score it against ``labels``."""
    from ..model import predict_proba

    return evaluate_scores(predict_proba(params, cfg, x), labels, threshold)


def aggregate(reports, keys=("auc", "f1", "sensitivity", "specificity")):
    """Mean and population std of each metric across reports, skipping undefined values."""
    out = {}
    for k in keys:
        vals = [getattr(r, k) for r in reports if getattr(r, k) is not None]
        if vals:
            out[k] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "n": len(vals)}
        else:
            out[k] = {"mean": None, "std": None, "n": 0}
    return out

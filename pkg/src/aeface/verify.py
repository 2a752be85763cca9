"""Cosine scoring and the k-fold pair verification protocol."""

import json
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .errors import DataError, NumericError, ProtocolError

THRESHOLD_EPS = 1e-9


def cosine_score(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError(f"cannot compare vectors of length {a.size} and {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise NumericError("cosine score is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def score_pairs(emb: Dict[str, np.ndarray], pairs):
    scores = np.empty(len(pairs.entries))
    for i, p in enumerate(pairs.entries):
        for key in (p.id_a, p.id_b):
            if key not in emb:
                raise DataError(f"no embedding for id {key!r}")
        scores[i] = cosine_score(emb[p.id_a], emb[p.id_b])
    return scores


def _eps(v):
    return THRESHOLD_EPS * max(1.0, abs(v))


def threshold_candidates(scores):
    u = np.unique(scores)
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate([[u[0] - _eps(u[0])], mids, [u[-1] + _eps(u[-1])]])


def accuracy_at(scores, same, threshold):
    pred = np.asarray(scores) >= threshold
    return float(np.mean(pred == np.asarray(same, dtype=bool)))


def choose_threshold(scores, same):
    """Best accuracy threshold under "same iff score >= t"; ties go to the smallest t."""
    scores = np.asarray(scores, dtype=np.float64)
    same = np.asarray(same, dtype=bool)
    if scores.size == 0:
        raise DataError("need at least one score")
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    same_sorted = same[order]
    cands = threshold_candidates(scores)
    below = np.searchsorted(s_sorted, cands, side="left")
    same_cum = np.concatenate([[0], np.cumsum(same_sorted)])
    same_below = same_cum[below]
    diff_below = below - same_below
    correct = (same.sum() - same_below) + diff_below
    best = int(np.argmax(correct))
    return float(cands[best]), float(correct[best] / scores.size)


@dataclass
class FoldResult:
    fold: int
    threshold: float
    accuracy: float


@dataclass
class EvalReport:
    folds: List[FoldResult]
    mean_accuracy: float
    std_accuracy: float
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "folds": [{"fold": f.fold, "threshold": f.threshold, "accuracy": f.accuracy} for f in self.folds],
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "meta": self.meta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        folds = [FoldResult(int(f["fold"]), float(f["threshold"]), float(f["accuracy"])) for f in d["folds"]]
        return cls(folds, float(d["mean_accuracy"]), float(d["std_accuracy"]), dict(d.get("meta", {})))


def kfold_accuracy(scores, same, fold_of, k, meta=None):
    """Pick the threshold on the other k-1 folds, measure accuracy on the held-out one."""
    scores = np.asarray(scores, dtype=np.float64)
    same = np.asarray(same, dtype=bool)
    fold_of = np.asarray(fold_of)
    if not (len(scores) == len(same) == len(fold_of)):
        raise DataError("scores, flags and fold indices differ in length")
    if fold_of.size and (fold_of.min() < 0 or fold_of.max() >= k):
        raise ProtocolError(f"fold indices must lie in [0, {k})")
    results = []
    for f in range(k):
        test = fold_of == f
        if not test.any():
            raise ProtocolError(f"fold {f} is empty")
        train = ~test
        if train.any():
            t, _ = choose_threshold(scores[train], same[train])
        else:
            # k == 1: nothing held out, tune on the fold itself
            t, _ = choose_threshold(scores, same)
        results.append(FoldResult(f, t, accuracy_at(scores[test], same[test], t)))
    accs = np.array([r.accuracy for r in results])
    meta = dict(meta or {})
    meta.setdefault("k", k)
    meta.setdefault("n_pairs", int(len(scores)))
    meta.setdefault("n_same", int(same.sum()))
    meta.setdefault("n_diff", int((~same).sum()))
    return EvalReport(results, float(accs.mean()), float(accs.std()), meta)

"""ROC/AUC, threshold confusion, score histograms and the policy simulation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .aggregation import AggregationPolicy, Label, aggregate_many
from .errors import InvalidParameter, SingleClass, SpecError


@dataclass(frozen=True)
class LabeledScore:
    score: float
    truth: Label

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise InvalidParameter(f"non-finite score {self.score}")
        object.__setattr__(self, "truth", Label.parse(self.truth))


def _split(samples):
    """Return ``(scores, is_synthetic)`` arrays from LabeledScores or a pair of arrays."""
    if isinstance(samples, tuple) and len(samples) == 2 and not isinstance(samples[0], LabeledScore):
        scores = np.asarray(samples[0], dtype=np.float64)
        labels = np.asarray(samples[1])
        if labels.dtype == bool:
            positive = labels
        else:
            positive = np.array([Label.parse(t) is Label.SYNTHETIC for t in labels.tolist()],
                                dtype=bool)
    else:
        samples = list(samples)
        scores = np.array([s.score for s in samples], dtype=np.float64)
        positive = np.array([s.truth is Label.SYNTHETIC for s in samples], dtype=bool)
    if scores.shape != positive.shape:
        raise InvalidParameter("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise InvalidParameter("scores must be finite")
    return scores, positive


def _require_both(positive: np.ndarray):
    n_pos = int(positive.sum())
    if n_pos == 0 or n_pos == positive.size:
        missing = "synthetic" if n_pos == 0 else "real"
        raise SingleClass(f"no {missing} samples")


@dataclass(frozen=True)
class Confusion:
    tpr: float
    fpr: float
    tp: int
    fn: int
    fp: int
    tn: int
    threshold: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RocResult:
    auc: float
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    tpr_at_zero: float
    fpr_at_zero: float

    @property
    def curve(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_dict(self, with_curve: bool = False) -> dict:
        d = {"auc": self.auc, "tpr_at_zero": self.tpr_at_zero, "fpr_at_zero": self.fpr_at_zero}
        if with_curve:
            d["curve"] = [list(p) for p in self.curve]
        return d

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()):
            w.writerow([repr(t), repr(f), repr(p)])
        return buf.getvalue()


def mann_whitney_auc(scores, positive) -> float:
    """P(synthetic score > real score) with ties counted one half."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    pos = np.sort(scores[positive])
    neg = np.sort(scores[~positive])
    greater, ties = kernels.mann_whitney_counts(pos, neg)
    return (2 * greater + ties) / (2 * pos.size * neg.size)


def roc_curve(scores, positive):
    """Points for every distinct threshold, from (0, 0) to (1, 1).

    A sample is called synthetic when ``score >= threshold``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = positive[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    return fpr, tpr, thresholds


def confusion_at(samples, threshold: float = 0.0) -> Confusion:
    scores, positive = _split(samples)
    _require_both(positive)
    called = scores >= threshold
    tp = int(np.count_nonzero(called & positive))
    fn = int(np.count_nonzero(~called & positive))
    fp = int(np.count_nonzero(called & ~positive))
    tn = int(np.count_nonzero(~called & ~positive))
    return Confusion(tp / (tp + fn), fp / (fp + tn), tp, fn, fp, tn, float(threshold))


def compute_auc(samples) -> RocResult:
    """ROC analysis; ``samples`` is a list of LabeledScore or ``(scores, labels)``."""
    scores, positive = _split(samples)
    _require_both(positive)
    fpr, tpr, thresholds = roc_curve(scores, positive)
    conf = confusion_at((scores, positive))
    return RocResult(mann_whitney_auc(scores, positive), fpr, tpr, thresholds, conf.tpr, conf.fpr)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    real: np.ndarray
    synthetic: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "real", "synthetic"])
        for i in range(self.real.size):
            w.writerow([repr(float(self.edges[i])), repr(float(self.edges[i + 1])),
                        int(self.real[i]), int(self.synthetic[i])])
        return buf.getvalue()


def histogram(samples, bin_count: int = 50) -> Histogram:
    """Per-class counts over equal-width bins spanning all scores."""
    if bin_count < 1:
        raise InvalidParameter("bin_count must be >= 1")
    scores, positive = _split(samples)
    if scores.size == 0:
        raise InvalidParameter("histogram needs at least one sample")
    lo, hi = float(scores.min()), float(scores.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bin_count + 1)
    real, _ = np.histogram(scores[~positive], bins=edges)
    synth, _ = np.histogram(scores[positive], bins=edges)
    return Histogram(edges, real, synth)


# -- simulation ------------------------------------------------------------


@dataclass(frozen=True)
class SimulationSpec:
    """Score model standing in for a trained patch CNN.

    Real patches score ``Normal(real_mean, sigma)``. Each patch of a synthetic
    image independently carries the synthetic signal with probability
    ``fraction`` and then scores ``Normal(synthetic_mean, sigma)``.
    """

    images_per_class: int = 500
    patches_per_image: int = 100
    real_mean: float = -2.0
    synthetic_mean: float = 2.0
    sigma: float = 0.5
    fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.images_per_class < 1 or self.patches_per_image < 1:
            raise SpecError("images_per_class and patches_per_image must be >= 1")
        if not self.sigma > 0:
            raise SpecError("sigma must be > 0")
        if not 0 < self.fraction <= 1:
            raise SpecError("fraction must be in (0, 1]")
        if not (self.real_mean < 0 < self.synthetic_mean):
            raise SpecError("need real_mean < 0 < synthetic_mean")

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown simulation fields {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SpecError(str(exc)) from exc


def simulate_scores(spec: SimulationSpec):
    """Patch score matrices ``(real, synthetic)``, each ``(images, patches)``.

    Every image owns a stream seeded by ``(seed, class, index)``.
    """
    n, p = spec.images_per_class, spec.patches_per_image
    real = np.empty((n, p))
    synth = np.empty((n, p))
    for i in range(n):
        rng = np.random.default_rng([spec.seed, 0, i])
        real[i] = rng.normal(spec.real_mean, spec.sigma, p)
        rng = np.random.default_rng([spec.seed, 1, i])
        carries = rng.random(p) < spec.fraction
        base = rng.normal(spec.real_mean, spec.sigma, p)
        signal = rng.normal(spec.synthetic_mean, spec.sigma, p)
        synth[i] = np.where(carries, signal, base)
    return real, synth


@dataclass(frozen=True)
class PolicyRow:
    policy: str
    auc: float
    tpr: float
    fpr: float

    def to_dict(self) -> dict:
        return asdict(self)


def simulate_policy_comparison(spec: SimulationSpec, policies, threshold: float = 0.0) -> list[PolicyRow]:
    real, synth = simulate_scores(spec)
    labels = np.r_[np.zeros(real.shape[0], bool), np.ones(synth.shape[0], bool)]
    rows = []
    for policy in policies:
        policy = AggregationPolicy.parse(policy)
        scores = np.r_[aggregate_many(real, policy), aggregate_many(synth, policy)]
        roc = compute_auc((scores, labels))
        conf = confusion_at((scores, labels), threshold)
        rows.append(PolicyRow(policy.name, roc.auc, conf.tpr, conf.fpr))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "auc", "tpr", "fpr"])
    for r in rows:
        w.writerow([r.policy, repr(r.auc), repr(r.tpr), repr(r.fpr)])
    return buf.getvalue()

"""Patch-score aggregation and ensemble fusion.

The proposed rule trusts the real class: an image is real for a scorer only
when every patch score is negative, and then gets the most negative score;
otherwise it gets the largest (most synthetic) score.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import EmptyEnsemble, EmptyScores, InvalidParameter


class Label(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, cls):
            return value
        if isinstance(value, bool) or value in (0, 1):
            return cls.SYNTHETIC if value else cls.REAL
        key = str(value).strip().lower()
        aliases = {"real": cls.REAL, "0": cls.REAL, "pristine": cls.REAL,
                   "synthetic": cls.SYNTHETIC, "fake": cls.SYNTHETIC, "1": cls.SYNTHETIC}
        try:
            return aliases[key]
        except KeyError:
            raise InvalidParameter(f"unknown label {value!r}") from None


_MODES = {
    "proposed": kernels.MODE_PROPOSED,
    "kthreshold": kernels.MODE_KTHRESHOLD,
    "mean": kernels.MODE_MEAN,
    "median": kernels.MODE_MEDIAN,
}


@dataclass(frozen=True)
class AggregationPolicy:
    variant: str = "proposed"
    k: int = 1

    def __post_init__(self):
        if self.variant not in _MODES:
            raise InvalidParameter(f"unknown aggregation variant {self.variant!r}")
        if self.k < 1:
            raise InvalidParameter("k must be >= 1")
        if self.variant == "proposed" and self.k != 1:
            raise InvalidParameter("the proposed rule has k = 1")

    @classmethod
    def proposed(cls):
        return cls("proposed")

    @classmethod
    def kthreshold(cls, k: int):
        return cls("kthreshold", int(k))

    @classmethod
    def mean(cls):
        return cls("mean")

    @classmethod
    def median(cls):
        return cls("median")

    @classmethod
    def parse(cls, text) -> "AggregationPolicy":
        """Accepts ``proposed``, ``mean``, ``median``, ``k5``, ``k=5`` or ``kthreshold:5``."""
        if isinstance(text, cls):
            return text
        if isinstance(text, dict):
            return cls(text.get("variant", "proposed"), int(text.get("k", 1)))
        s = str(text).strip().lower().replace("_", "").replace("k-threshold", "kthreshold")
        if s in ("proposed", "mean", "median"):
            return cls(s)
        for prefix in ("kthreshold:", "kthreshold=", "kthreshold", "k=", "k:", "k"):
            if s.startswith(prefix) and s[len(prefix):].isdigit():
                return cls.kthreshold(int(s[len(prefix):]))
        raise InvalidParameter(f"cannot parse aggregation policy {text!r}")

    @property
    def name(self) -> str:
        return f"kthreshold:{self.k}" if self.variant == "kthreshold" else self.variant

    def __str__(self):
        return self.name


def _as_scores(scores) -> np.ndarray:
    arr = np.asarray(getattr(scores, "scores", scores), dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyScores("cannot aggregate an empty score vector")
    return arr


def aggregate(scores, policy: AggregationPolicy = AggregationPolicy()) -> float:
    """Image score from one scorer's patch scores (array or PatchScoreVector)."""
    arr = _as_scores(scores)
    return float(kernels.aggregate_rows(arr[None, :], _MODES[policy.variant], policy.k)[0])


def aggregate_many(score_matrix, policy: AggregationPolicy = AggregationPolicy()) -> np.ndarray:
    """Row-wise :func:`aggregate` over an ``(n_images, n_patches)`` matrix."""
    m = np.asarray(score_matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise EmptyScores("need a non-empty (n_images, n_patches) matrix")
    return kernels.aggregate_rows(m, _MODES[policy.variant], policy.k)


def fuse_ensemble(image_scores) -> float:
    """Equal-weight mean of the per-scorer image scores (correctly rounded sum)."""
    values = [float(v) for v in image_scores]
    if not values:
        raise EmptyEnsemble("fusion needs at least one scorer")
    return math.fsum(values) / len(values)


def classify(score: float, threshold: float = 0.0) -> Label:
    if not math.isfinite(score):
        raise InvalidParameter(f"cannot classify non-finite score {score}")
    return Label.REAL if score < threshold else Label.SYNTHETIC


@dataclass(frozen=True)
class ScorerVerdict:
    id: str
    score: float
    policy: AggregationPolicy
    patches: int = 0

    def to_dict(self) -> dict:
        return {"id": self.id, "score": self.score, "policy": self.policy.name}


@dataclass(frozen=True)
class ImageVerdict:
    image: str
    fused_score: float
    label: Label
    per_scorer: tuple[ScorerVerdict, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "fused_score": self.fused_score,
            "label": self.label.value,
            "per_scorer": [s.to_dict() for s in self.per_scorer],
        }

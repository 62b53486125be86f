"""Patch scorers: one signed real per patch (negative = real, positive = synthetic)."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import InvalidParameter, ModelLoadError, ScoringError, ShapeMismatch
from .patching import PatchRegion, as_image

_LUMA = np.array([0.299, 0.587, 0.114])


@runtime_checkable
class PatchScorer(Protocol):
    id: str

    def score_batch(self, patches: Sequence[np.ndarray]) -> np.ndarray:
        """Return a float64 array with one score per patch."""
        ...


@dataclass(frozen=True)
class PatchScoreVector:
    scorer: str
    scores: np.ndarray
    regions: tuple[PatchRegion, ...]

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size < 1:
            raise InvalidParameter("a score vector needs at least one score")
        if len(self.regions) != scores.size:
            raise InvalidParameter(f"{scores.size} scores for {len(self.regions)} regions")
        if not np.all(np.isfinite(scores)):
            raise InvalidParameter("scores must be finite")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "regions", tuple(self.regions))

    def __len__(self):
        return self.scores.size


# -- analytic scorers ------------------------------------------------------


class ConstantScorer:
    def __init__(self, value: float, id: str = "constant"):
        self.value = float(value)
        self.id = id

    def score_batch(self, patches):
        return np.full(len(patches), self.value, dtype=np.float64)


class LumaThresholdScorer:
    """``gain * (mean luma - pivot)`` with luma scaled to [0, 1]."""

    def __init__(self, pivot: float = 0.5, gain: float = 1.0, id: str = "luma"):
        self.pivot = float(pivot)
        self.gain = float(gain)
        self.id = id

    def _one(self, patch):
        luma = float((as_image(patch).astype(np.float64) @ _LUMA).mean()) / 255.0
        return self.gain * (luma - self.pivot)

    def score_batch(self, patches):
        return np.array([self._one(p) for p in patches], dtype=np.float64)


class PlantedSignalScorer:
    """``gain`` times the normalized cross-correlation with a template.

    The template has shape ``(N, N)`` (compared against luma) or ``(N, N, 3)``.
    Flat patches or templates correlate to 0.
    """

    def __init__(self, template, gain: float = 1.0, id: str = "planted"):
        template = np.asarray(template, dtype=np.float64)
        if template.ndim not in (2, 3) or (template.ndim == 3 and template.shape[2] != 3):
            raise InvalidParameter(f"template must be (N, N) or (N, N, 3), got {template.shape}")
        self.template = template
        self._t = (template - template.mean()).ravel()
        self._t_norm = float(np.sqrt(self._t @ self._t))
        self.gain = float(gain)
        self.id = id

    def _one(self, patch):
        x = as_image(patch).astype(np.float64)
        if self.template.ndim == 2:
            x = x @ _LUMA
        if x.shape != self.template.shape:
            raise ShapeMismatch(f"patch {x.shape} does not match template {self.template.shape}")
        d = (x - x.mean()).ravel()
        norm = float(np.sqrt(d @ d))
        if norm == 0.0 or self._t_norm == 0.0:
            return 0.0
        ncc = float(d @ self._t) / (norm * self._t_norm)
        return self.gain * min(1.0, max(-1.0, ncc))

    def score_batch(self, patches):
        return np.array([self._one(p) for p in patches], dtype=np.float64)


def checkerboard(size: int, period: int = 8) -> np.ndarray:
    """Luma template alternating 0/255 squares of side ``period``."""
    idx = np.arange(size) // period
    return ((idx[:, None] + idx[None, :]) % 2 * 255).astype(np.float64)


@dataclass(frozen=True)
class AnalyticScorerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("constant", "luma_threshold", "planted_signal")

    def __post_init__(self):
        kind = self.kind.lower().replace("-", "_")
        kind = {"constantscore": "constant", "lumathreshold": "luma_threshold",
                "plantedsignal": "planted_signal"}.get(kind, kind)
        if kind not in self.KINDS:
            raise InvalidParameter(f"unknown analytic scorer kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        for key, value in self.params.items():
            if isinstance(value, (int, float)) and not math.isfinite(value):
                raise InvalidParameter(f"parameter {key} must be finite")

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticScorerSpec":
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, d)


def make_analytic_scorer(spec: AnalyticScorerSpec, id: str | None = None, *,
                         patch_size: int = 128):
    p = spec.params
    if spec.kind == "constant":
        return ConstantScorer(p.get("value", 0.0), id=id or "constant")
    if spec.kind == "luma_threshold":
        return LumaThresholdScorer(p.get("pivot", 0.5), p.get("gain", 1.0), id=id or "luma")
    if "template" in p:
        template = np.asarray(p["template"], dtype=np.float64)
    elif "template_path" in p:
        template = np.load(p["template_path"])
    else:
        template = checkerboard(int(p.get("size", patch_size)), int(p.get("period", 8)))
    return PlantedSignalScorer(template, p.get("gain", 1.0), id=id or "planted")


# -- model backend ---------------------------------------------------------

OUTPUT_CONVENTIONS = ("logit", "negated_logit", "two_class_margin")


@dataclass(frozen=True)
class ModelBackendConfig:
    """Settings for an ONNX patch classifier.

    ``output_convention``: ``logit`` uses a single output as-is,
    ``negated_logit`` flips its sign, ``two_class_margin`` returns
    ``logit[synthetic] - logit[real]`` from a two-column output.
    """

    model_path: str
    input_size: int = 128
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)
    output_convention: str = "logit"
    synthetic_index: int = 1
    batch_size: int = 1

    def __post_init__(self):
        if self.output_convention not in OUTPUT_CONVENTIONS:
            raise InvalidParameter(f"unknown output_convention {self.output_convention!r}")
        if len(self.mean) != 3 or len(self.std) != 3 or any(s <= 0 for s in self.std):
            raise InvalidParameter("normalization needs three means and three positive stds")
        if self.batch_size < 1:
            raise InvalidParameter("batch_size must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | None = None) -> "ModelBackendConfig":
        d = dict(d)
        norm = d.pop("normalization", None) or {}
        for key in ("mean", "std"):
            if key in norm:
                d[key] = norm[key]
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        path = d.pop("model_path", None) or d.pop("path", None)
        if path is None:
            raise InvalidParameter("backend declaration needs a model_path")
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return cls(model_path=path, **d)


class OnnxScorer:
    """Adapter running an ONNX network on NCHW float32 patches in [0, 1], normalized."""

    def __init__(self, config: ModelBackendConfig, id: str | None = None):
        self.config = config
        self.id = id or os.path.splitext(os.path.basename(config.model_path))[0]
        if not os.path.isfile(config.model_path):
            raise ModelLoadError(f"model file not found: {config.model_path}")
        try:
            import onnxruntime as ort
        except ImportError as exc:
            raise ModelLoadError("onnxruntime is required for model backends "
                                 "(pip install 'patchensemble[onnx]')") from exc
        opts = ort.SessionOptions()
        opts.intra_op_num_threads = 1
        try:
            self._session = ort.InferenceSession(config.model_path, sess_options=opts,
                                                 providers=["CPUExecutionProvider"])
        except Exception as exc:  # onnxruntime raises its own exception types
            raise ModelLoadError(f"cannot load {config.model_path}: {exc}") from exc
        inputs = self._session.get_inputs()
        if len(inputs) != 1:
            raise ShapeMismatch(f"model must take one input, takes {len(inputs)}")
        self._input = inputs[0].name
        shape = inputs[0].shape
        n = config.input_size
        if len(shape) != 4:
            raise ShapeMismatch(f"model input must be 4-D NCHW, got {shape}")
        for got, want in zip(shape[1:], (3, n, n)):
            if isinstance(got, int) and got != want:
                raise ShapeMismatch(f"model expects input {shape}, patches are (N, 3, {n}, {n})")
        self._mean = np.asarray(config.mean, dtype=np.float32).reshape(1, 3, 1, 1)
        self._std = np.asarray(config.std, dtype=np.float32).reshape(1, 3, 1, 1)

    def _prepare(self, patches) -> np.ndarray:
        n = self.config.input_size
        arr = np.stack([as_image(p) for p in patches])
        if arr.shape[1:] != (n, n, 3):
            raise ShapeMismatch(f"patches of shape {arr.shape[1:]} but model takes {n}x{n}x3")
        x = arr.astype(np.float32).transpose(0, 3, 1, 2) / np.float32(255.0)
        return np.ascontiguousarray((x - self._mean) / self._std)

    def _to_scores(self, raw: np.ndarray, batch: int) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        conv = self.config.output_convention
        if conv == "two_class_margin":
            if raw.shape != (batch, 2):
                raise ShapeMismatch(f"two_class_margin needs output (N, 2), got {raw.shape}")
            s = self.config.synthetic_index
            return raw[:, s] - raw[:, 1 - s]
        if raw.size != batch:
            raise ShapeMismatch(f"expected one scalar per patch, got output {raw.shape}")
        raw = raw.reshape(batch)
        return -raw if conv == "negated_logit" else raw

    def score_batch(self, patches):
        out = []
        step = self.config.batch_size
        for start in range(0, len(patches), step):
            chunk = patches[start:start + step]
            x = self._prepare(chunk)
            try:
                raw = self._session.run(None, {self._input: x})[0]
            except Exception as exc:
                raise ShapeMismatch(f"model rejected input {x.shape}: {exc}") from exc
            out.append(self._to_scores(raw, len(chunk)))
        if not out:
            return np.empty(0, dtype=np.float64)
        return np.concatenate(out)


def load_model_backend(config: ModelBackendConfig, id: str | None = None) -> OnnxScorer:
    return OnnxScorer(config, id=id)


def score_patches(scorer: PatchScorer, patches, regions) -> PatchScoreVector:
    """Score ``patches`` (parallel to ``regions``) and wrap the result."""
    patches = list(patches)
    regions = list(regions)
    if not patches:
        raise InvalidParameter("score_patches needs at least one patch")
    if len(patches) != len(regions):
        raise InvalidParameter(f"{len(patches)} patches but {len(regions)} regions")
    try:
        scores = np.asarray(scorer.score_batch(patches), dtype=np.float64)
    except ScoringError:
        raise
    except Exception as exc:
        raise ScoringError(f"scorer {scorer.id!r} failed: {exc}", index=_failing_index(scorer, patches)) from exc
    if scores.shape != (len(patches),):
        raise ScoringError(f"scorer {scorer.id!r} returned {scores.shape} for {len(patches)} patches")
    bad = np.flatnonzero(~np.isfinite(scores))
    if bad.size:
        raise ScoringError(f"scorer {scorer.id!r} produced a non-finite score", index=int(bad[0]))
    return PatchScoreVector(scorer.id, scores, tuple(regions))


def _failing_index(scorer, patches):
    for i, patch in enumerate(patches):
        try:
            scorer.score_batch([patch])
        except Exception:
            return i
    return None


def load_analytic_spec(path: str) -> AnalyticScorerSpec:
    with open(path) as fh:
        return AnalyticScorerSpec.from_dict(json.load(fh))

"""Stochastic editing pipeline used to prepare training patches.

Every operation is a pure function of ``(image, parameters)``. The pipeline
first draws all decisions and parameters into an :class:`AugmentationLog`
and then replays that log, so ``replay(image, log)`` reproduces the output
bit-exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, fields, replace

import numpy as np
from PIL import Image, ImageFilter, ImageOps

from .errors import CodecFailure, InvalidParameter
from .patching import as_image, derive_seed

OPERATIONS = (
    "hflip",
    "vflip",
    "rot90",
    "hist_eq",
    "blur",
    "brightness",
    "contrast",
    "color",
    "saturation",
    "down_up_scale",
    "jpeg",
)

_LUMA = np.array([0.299, 0.587, 0.114])


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def _pil(image: np.ndarray) -> Image.Image:
    return Image.fromarray(as_image(image), mode="RGB")


def hflip(image):
    return np.ascontiguousarray(as_image(image)[:, ::-1])


def vflip(image):
    return np.ascontiguousarray(as_image(image)[::-1])


def rot90(image, k: int = 1):
    """Rotate counterclockwise by ``k`` quarter turns."""
    if int(k) != k:
        raise InvalidParameter(f"rot90 expects an integer k, got {k!r}")
    return np.ascontiguousarray(np.rot90(as_image(image), int(k) % 4))


def hist_eq(image):
    """Per-channel histogram equalization."""
    return np.asarray(ImageOps.equalize(_pil(image)), dtype=np.uint8)


def blur(image, radius: int):
    """Box blur with a ``(2 * radius + 1)`` square kernel."""
    if int(radius) != radius or radius < 0:
        raise InvalidParameter(f"blur radius must be a non-negative integer, got {radius!r}")
    if radius == 0:
        return as_image(image).copy()
    return np.asarray(_pil(image).filter(ImageFilter.BoxBlur(int(radius))), dtype=np.uint8)


def brightness(image, delta: float):
    """Add ``delta * 255`` to every sample."""
    if not -1.0 <= delta <= 1.0:
        raise InvalidParameter(f"brightness delta must be in [-1, 1], got {delta}")
    return _to_uint8(as_image(image).astype(np.float64) + delta * 255.0)


def contrast(image, delta: float):
    """Scale deviations from the mean luma by ``1 + delta``."""
    if not -1.0 <= delta <= 1.0:
        raise InvalidParameter(f"contrast delta must be in [-1, 1], got {delta}")
    img = as_image(image).astype(np.float64)
    pivot = float((img @ _LUMA).mean())
    return _to_uint8((img - pivot) * (1.0 + delta) + pivot)


def saturation(image, delta: float):
    """Blend each pixel away from (or toward) its gray level by ``1 + delta``."""
    if not -1.0 <= delta <= 1.0:
        raise InvalidParameter(f"saturation delta must be in [-1, 1], got {delta}")
    img = as_image(image).astype(np.float64)
    gray = (img @ _LUMA)[..., None]
    return _to_uint8(gray + (img - gray) * (1.0 + delta))


def color(image, shifts):
    """Shift each RGB channel by ``shift * 255``."""
    shifts = np.asarray(shifts, dtype=np.float64)
    if shifts.shape != (3,) or np.any(np.abs(shifts) > 1.0):
        raise InvalidParameter(f"color expects three shifts in [-1, 1], got {shifts.tolist()}")
    return _to_uint8(as_image(image).astype(np.float64) + shifts * 255.0)


def down_up_scale(image, factor: float):
    """Bilinear resize to ``factor`` times the size and back to the original size."""
    if not 0.0 < factor <= 1.0:
        raise InvalidParameter(f"scale factor must be in (0, 1], got {factor}")
    image = as_image(image)
    height, width = image.shape[:2]
    small = (max(1, round(width * factor)), max(1, round(height * factor)))
    if small == (width, height):
        return image.copy()
    pil = _pil(image).resize(small, Image.Resampling.BILINEAR)
    return np.asarray(pil.resize((width, height), Image.Resampling.BILINEAR), dtype=np.uint8)


def jpeg_roundtrip(image, quality: int):
    """Baseline JPEG encode at ``quality`` followed by a decode."""
    if int(quality) != quality or not 1 <= quality <= 100:
        raise InvalidParameter(f"JPEG quality must be an integer in [1, 100], got {quality!r}")
    buf = io.BytesIO()
    try:
        _pil(image).save(buf, format="JPEG", quality=int(quality), optimize=False,
                         progressive=False)
        buf.seek(0)
        with Image.open(buf) as decoded:
            out = np.asarray(decoded.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise CodecFailure(f"JPEG roundtrip failed: {exc}") from exc
    return np.ascontiguousarray(out)


@dataclass(frozen=True)
class AugmentationConfig:
    """Application probabilities and parameter ranges.

    Ranges are closed intervals; ``blur_radii`` is the set sampled from.
    """

    hflip_p: float = 0.5
    vflip_p: float = 0.5
    rot90_p: float = 0.5
    hist_eq_p: float = 0.5
    blur_p: float = 0.5
    brightness_p: float = 0.5
    contrast_p: float = 0.5
    color_p: float = 0.5
    saturation_p: float = 0.5
    down_up_scale_p: float = 0.5
    jpeg_p: float = 0.7
    blur_radii: tuple[int, ...] = (1, 2, 3)
    brightness_range: tuple[float, float] = (-0.2, 0.2)
    contrast_range: tuple[float, float] = (-0.2, 0.2)
    color_range: tuple[float, float] = (-0.2, 0.2)
    saturation_range: tuple[float, float] = (-0.2, 0.2)
    scale_range: tuple[float, float] = (0.25, 0.5)
    jpeg_quality_range: tuple[int, int] = (30, 100)
    seed: int = 0

    def __post_init__(self):
        for op in OPERATIONS:
            p = self.probability(op)
            if not 0.0 <= p <= 1.0:
                raise InvalidParameter(f"{op} probability must be in [0, 1], got {p}")
        lo, hi = self.jpeg_quality_range
        if not (1 <= lo <= hi <= 100):
            raise InvalidParameter(f"invalid JPEG quality range {self.jpeg_quality_range}")
        for name in ("brightness_range", "contrast_range", "color_range", "saturation_range"):
            lo, hi = getattr(self, name)
            if not -1.0 <= lo <= hi <= 1.0:
                raise InvalidParameter(f"invalid {name} {(lo, hi)}")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi <= 1.0:
            raise InvalidParameter(f"invalid scale_range {self.scale_range}")
        if not self.blur_radii or any(r < 0 for r in self.blur_radii):
            raise InvalidParameter(f"invalid blur_radii {self.blur_radii}")

    def probability(self, op: str) -> float:
        return getattr(self, f"{op}_p")

    @classmethod
    def disabled(cls, **overrides) -> "AugmentationConfig":
        """Config with every probability set to zero."""
        zeros = {f"{op}_p": 0.0 for op in OPERATIONS}
        zeros.update(overrides)
        return cls(**zeros)

    def with_overrides(self, **overrides) -> "AugmentationConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise InvalidParameter(f"unknown augmentation fields {sorted(unknown)}")
        coerced = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()}
        return replace(self, **coerced)

    def to_dict(self) -> dict:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v
                for f in fields(self)}


@dataclass(frozen=True)
class LogEntry:
    op: str
    applied: bool
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"op": self.op, "applied": self.applied, "params": dict(self.params)}


@dataclass(frozen=True)
class AugmentationLog:
    entries: tuple[LogEntry, ...]

    def applied_ops(self) -> list[str]:
        return [e.op for e in self.entries if e.applied]

    def to_list(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]

    @classmethod
    def from_list(cls, items) -> "AugmentationLog":
        return cls(tuple(LogEntry(d["op"], bool(d["applied"]), dict(d.get("params", {})))
                         for d in items))


def _draw_params(op: str, config: AugmentationConfig, rng: np.random.Generator) -> dict:
    if op in ("hflip", "vflip", "hist_eq"):
        return {}
    if op == "rot90":
        return {"k": int(rng.integers(1, 4))}
    if op == "blur":
        return {"radius": int(config.blur_radii[rng.integers(len(config.blur_radii))])}
    if op == "color":
        lo, hi = config.color_range
        return {"shifts": [float(v) for v in rng.uniform(lo, hi, size=3)]}
    if op in ("brightness", "contrast", "saturation"):
        lo, hi = getattr(config, f"{op}_range")
        return {"delta": float(rng.uniform(lo, hi))}
    if op == "down_up_scale":
        lo, hi = config.scale_range
        return {"factor": float(rng.uniform(lo, hi))}
    if op == "jpeg":
        lo, hi = config.jpeg_quality_range
        return {"quality": int(rng.integers(lo, hi + 1))}
    raise InvalidParameter(f"unknown operation {op!r}")


def draw_log(config: AugmentationConfig, stream: np.random.Generator) -> AugmentationLog:
    """Draw every gate and parameter, in pipeline order, without touching pixels."""
    entries = []
    for op in OPERATIONS:
        applied = bool(stream.random() < config.probability(op))
        params = _draw_params(op, config, stream) if applied else {}
        entries.append(LogEntry(op, applied, params))
    return AugmentationLog(tuple(entries))


_APPLY = {
    "hflip": lambda img, p: hflip(img),
    "vflip": lambda img, p: vflip(img),
    "rot90": lambda img, p: rot90(img, p["k"]),
    "hist_eq": lambda img, p: hist_eq(img),
    "blur": lambda img, p: blur(img, p["radius"]),
    "brightness": lambda img, p: brightness(img, p["delta"]),
    "contrast": lambda img, p: contrast(img, p["delta"]),
    "color": lambda img, p: color(img, p["shifts"]),
    "saturation": lambda img, p: saturation(img, p["delta"]),
    "down_up_scale": lambda img, p: down_up_scale(img, p["factor"]),
    "jpeg": lambda img, p: jpeg_roundtrip(img, p["quality"]),
}


def replay(image, log: AugmentationLog) -> np.ndarray:
    """Apply the operations recorded as applied in ``log``, in order."""
    out = as_image(image).copy()
    for entry in log.entries:
        if entry.applied:
            out = _APPLY[entry.op](out, entry.params)
    return out


def apply_pipeline(image, config: AugmentationConfig,
                   stream: np.random.Generator | None = None):
    """Run the pipeline; returns ``(augmented, log)``.

    Without an explicit ``stream`` one is seeded from ``config.seed``.
    """
    image = as_image(image)
    if stream is None:
        stream = np.random.default_rng(config.seed)
    log = draw_log(config, stream)
    return replay(image, log), log


def stream_for(seed: int, *key) -> np.random.Generator:
    """Independent random stream for one work item (e.g. an image path)."""
    return np.random.default_rng(derive_seed(seed, *key))

"""Square patch extraction, either at random offsets or on the 8x8 JPEG grid.

Images are plain ``numpy`` arrays of shape ``(height, width, 3)`` and dtype
``uint8`` (row-major, interleaved RGB).
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ImageTooSmall, InvalidImage, InvalidParameter, OutOfBounds

JPEG_BLOCK = 8
DEFAULT_PATCH_SIZE = 128
DEFAULT_RANDOM_COUNT = 200
DEFAULT_ALIGNED_COUNT = 180


def as_image(data) -> np.ndarray:
    """Validate and return ``data`` as a C-contiguous ``(H, W, 3)`` uint8 array."""
    arr = np.asarray(data)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidImage(f"expected an (H, W, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidImage("image must be at least 1x1")
    if arr.dtype != np.uint8:
        raise InvalidImage(f"expected uint8 samples, got {arr.dtype}")
    return np.ascontiguousarray(arr)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary (str/int) parts, independent of PYTHONHASHSEED."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little")


class SamplingMode(str, enum.Enum):
    RANDOM = "random"
    GRID_ALIGNED = "grid_aligned"

    @classmethod
    def parse(cls, value) -> "SamplingMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"random": cls.RANDOM, "grid_aligned": cls.GRID_ALIGNED,
                   "gridaligned": cls.GRID_ALIGNED, "aligned": cls.GRID_ALIGNED}
        try:
            return aliases[key]
        except KeyError:
            raise InvalidParameter(f"unknown sampling mode {value!r}") from None


@dataclass(frozen=True, order=True, kw_only=True)
class PatchRegion:
    """Top-left corner and side length of a square crop."""

    y: int
    x: int
    size: int
    aligned: bool = False

    def __post_init__(self):
        if self.size < 1:
            raise InvalidParameter("patch size must be >= 1")
        if self.x < 0 or self.y < 0:
            raise OutOfBounds(f"negative offset ({self.x}, {self.y})")
        if self.aligned and (self.x % JPEG_BLOCK or self.y % JPEG_BLOCK):
            raise InvalidParameter(f"region ({self.x}, {self.y}) tagged aligned but off-grid")

    def fits(self, width: int, height: int) -> bool:
        return self.x + self.size <= width and self.y + self.size <= height

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "size": self.size, "aligned": self.aligned}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchRegion":
        return cls(x=int(d["x"]), y=int(d["y"]), size=int(d["size"]),
                   aligned=bool(d.get("aligned", False)))


@dataclass(frozen=True)
class SamplingPolicy:
    mode: SamplingMode = SamplingMode.RANDOM
    count: int = DEFAULT_RANDOM_COUNT
    size: int = DEFAULT_PATCH_SIZE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", SamplingMode.parse(self.mode))
        if self.count < 1:
            raise InvalidParameter("count must be >= 1")
        if self.size < 1:
            raise InvalidParameter("size must be >= 1")

    def with_seed(self, seed: int) -> "SamplingPolicy":
        return SamplingPolicy(self.mode, self.count, self.size, seed)

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "count": self.count, "size": self.size}


def _check_fits(image: np.ndarray, size: int) -> tuple[int, int]:
    height, width = image.shape[:2]
    if width < size or height < size:
        raise ImageTooSmall(f"image {width}x{height} is smaller than patch size {size}")
    return width, height


def enumerate_aligned_positions(image, size: int = DEFAULT_PATCH_SIZE) -> list[PatchRegion]:
    """All grid-aligned regions of side ``size`` that fit in ``image``, row-major."""
    width, height = _check_fits(as_image(image), size)
    return [
        PatchRegion(x=x, y=y, size=size, aligned=True)
        for y in range(0, height - size + 1, JPEG_BLOCK)
        for x in range(0, width - size + 1, JPEG_BLOCK)
    ]


def sample_patches(image, policy: SamplingPolicy) -> list[PatchRegion]:
    """Draw ``min(count, available)`` distinct regions, sorted row-major.

    Sampling is without replacement and fully determined by ``policy.seed``.
    """
    width, height = _check_fits(as_image(image), policy.size)
    rng = np.random.default_rng(policy.seed)
    if policy.mode is SamplingMode.GRID_ALIGNED:
        step = JPEG_BLOCK
        aligned = True
    else:
        step = 1
        aligned = False
    nx = (width - policy.size) // step + 1
    ny = (height - policy.size) // step + 1
    total = nx * ny
    take = min(policy.count, total)
    picks = np.sort(rng.choice(total, size=take, replace=False))
    return [
        PatchRegion(x=int(i % nx) * step, y=int(i // nx) * step, size=policy.size, aligned=aligned)
        for i in picks
    ]


def crop(image, region: PatchRegion) -> np.ndarray:
    """Copy of the ``region`` pixels as a ``(size, size, 3)`` array."""
    image = as_image(image)
    height, width = image.shape[:2]
    if not region.fits(width, height):
        raise OutOfBounds(f"region {region.to_dict()} exceeds image {width}x{height}")
    return image[region.y:region.y + region.size, region.x:region.x + region.size].copy()


def extract(image, regions) -> list[np.ndarray]:
    image = as_image(image)
    return [crop(image, r) for r in regions]

"""Image decoding, ensemble config files and score-file readers for the CLI."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..aggregation import AggregationPolicy
from ..ensemble import EnsembleConfig, EnsembleMember
from ..errors import ConfigError, InvalidImage, PatchEnsembleError
from ..patching import (
    DEFAULT_ALIGNED_COUNT,
    DEFAULT_PATCH_SIZE,
    DEFAULT_RANDOM_COUNT,
    SamplingMode,
    SamplingPolicy,
)
from ..scoring import AnalyticScorerSpec, ModelBackendConfig, load_model_backend, make_analytic_scorer

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
MODEL_DIR_ENV = "PATCHENSEMBLE_MODEL_DIR"


def read_image(path: str) -> np.ndarray:
    """Decode a PNG/JPEG file into an ``(H, W, 3)`` uint8 array."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "RGB":
                log.info("%s: converting %s to RGB", path, img.mode)
                img = img.convert("RGB")
            return np.ascontiguousarray(np.asarray(img, dtype=np.uint8))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InvalidImage(f"cannot decode {path}: {exc}") from exc


def write_png(path: str, image: np.ndarray) -> None:
    Image.fromarray(image, mode="RGB").save(path, format="PNG")


def list_images(inputs) -> list[str]:
    """Expand files and directories into a sorted, de-duplicated image list."""
    found = set()
    for item in inputs:
        if os.path.isdir(item):
            for root, _dirs, files in os.walk(item):
                for name in files:
                    if name.lower().endswith(IMAGE_EXTENSIONS):
                        found.add(os.path.join(root, name))
        else:
            found.add(item)
    return sorted(found)


# -- ensemble config -------------------------------------------------------


@dataclass(frozen=True)
class ScorerDeclaration:
    id: str
    analytic: dict | None
    backend: dict | None
    sampling: SamplingPolicy
    aggregation: AggregationPolicy


def _sampling(decl, index: int, patch_size: int, aligned_count: int) -> SamplingPolicy:
    if decl is None:
        decl = {"mode": "random" if index == 0 else "grid_aligned"}
    elif isinstance(decl, str):
        decl = {"mode": decl}
    mode = SamplingMode.parse(decl.get("mode", "random"))
    default_count = DEFAULT_RANDOM_COUNT if mode is SamplingMode.RANDOM else aligned_count
    size = int(decl.get("size", patch_size))
    if size != patch_size:
        raise ConfigError(f"scorer {index}: patch size {size} differs from ensemble size {patch_size}")
    return SamplingPolicy(mode, int(decl.get("count", default_count)), size,
                          int(decl.get("seed", 0)))


def parse_ensemble_config(data: dict, *, base_dir: str = ".",
                          aligned_count: int = DEFAULT_ALIGNED_COUNT):
    """Validate a config mapping; returns ``(declarations, patch_size, threshold)``."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    patch_size = int(data.get("patch_size", DEFAULT_PATCH_SIZE))
    threshold = float(data.get("threshold", 0.0))
    scorers = data.get("scorers")
    if not scorers:
        raise ConfigError("config declares no scorers")
    fusion = data.get("fusion", "mean")
    if fusion != "mean":
        raise ConfigError(f"unsupported fusion {fusion!r}; only 'mean' is available")
    decls = []
    for i, s in enumerate(scorers):
        try:
            if ("analytic" in s) == ("backend" in s):
                raise ConfigError(f"scorer {i}: declare exactly one of 'analytic' or 'backend'")
            backend = s.get("backend")
            if isinstance(backend, str):
                backend = {"model_path": backend}
            if backend is not None:
                backend = dict(backend)
                path = backend.get("model_path", "")
                if path and not os.path.isabs(path):
                    backend["model_path"] = os.path.join(base_dir, path)
                backend.setdefault("input_size", patch_size)
            decls.append(ScorerDeclaration(
                id=str(s.get("id", f"scorer{i + 1}")),
                analytic=s.get("analytic"),
                backend=backend,
                sampling=_sampling(s.get("sampling"), i, patch_size, aligned_count),
                aggregation=AggregationPolicy.parse(s.get("aggregation", "proposed")),
            ))
        except ConfigError:
            raise
        except (PatchEnsembleError, TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"scorer {i}: {exc}") from exc
    return decls, patch_size, threshold


def default_config_dict(model_dir: str) -> dict:
    """Five ONNX scorers ``cnn1.onnx`` .. ``cnn5.onnx`` in ``model_dir``."""
    return {
        "patch_size": DEFAULT_PATCH_SIZE,
        "threshold": 0.0,
        "fusion": "mean",
        "scorers": [
            {"id": f"cnn{c}", "backend": {"model_path": os.path.join(model_dir, f"cnn{c}.onnx")},
             "sampling": {"mode": "random" if c == 1 else "grid_aligned"},
             "aggregation": "proposed"}
            for c in range(1, 6)
        ],
    }


def load_config_file(path: str | None, aligned_count: int = DEFAULT_ALIGNED_COUNT):
    if path is None:
        model_dir = os.environ.get(MODEL_DIR_ENV)
        if not model_dir:
            raise ConfigError(f"no --config given and {MODEL_DIR_ENV} is not set")
        return parse_ensemble_config(default_config_dict(model_dir), aligned_count=aligned_count)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_ensemble_config(data, base_dir=os.path.dirname(os.path.abspath(path)),
                                 aligned_count=aligned_count)


def build_ensemble(decls, patch_size: int, threshold: float) -> EnsembleConfig:
    members = []
    for d in decls:
        try:
            if d.analytic is not None:
                scorer = make_analytic_scorer(AnalyticScorerSpec.from_dict(d.analytic), id=d.id,
                                              patch_size=patch_size)
            else:
                scorer = load_model_backend(ModelBackendConfig.from_dict(d.backend), id=d.id)
        except PatchEnsembleError as exc:
            raise ConfigError(f"scorer {d.id!r}: {exc}") from exc
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"scorer {d.id!r}: bad declaration ({exc})") from exc
        members.append(EnsembleMember(scorer, d.sampling, d.aggregation))
    try:
        return EnsembleConfig(tuple(members), threshold, patch_size)
    except PatchEnsembleError as exc:
        raise ConfigError(str(exc)) from exc


# -- score / label files ---------------------------------------------------


def read_records(path: str) -> list[dict]:
    """Rows of a JSON-lines or CSV file (chosen by extension)."""
    with open(path, newline="") as fh:
        if path.lower().endswith(".csv"):
            return [dict(r) for r in csv.DictReader(fh)]
        rows = []
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        return rows


def record_id(row: dict):
    for key in ("image", "id", "path"):
        if key in row:
            return row[key]
    return None

"""Declarative construction rules for the five orthogonal training datasets.

A recipe filters a :class:`SourceManifest`, then either augments whole
images and crops random (off-grid) patches, or crops grid-aligned patches
and augments each one. Output is a patch-level manifest with the full
augmentation log for every row.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .aggregation import Label
from .augmentation import AugmentationConfig, AugmentationLog, apply_pipeline, stream_for
from .errors import EmptyAfterFilter, InvalidParameter, PatchEnsembleError, UnknownRecipe
from .patching import (
    DEFAULT_PATCH_SIZE,
    PatchRegion,
    SamplingMode,
    SamplingPolicy,
    crop,
    derive_seed,
    sample_patches,
)

CATEGORIES = ("ffhq", "metfaces", "afhq2")
GENERATORS = ("stylegan2", "stargan-v2", "taming", "facev2v", "score-based")

AUGMENT_THEN_CROP = "augment_then_crop"
CROP_THEN_AUGMENT = "crop_then_augment"


@dataclass(frozen=True)
class SourceEntry:
    path: str
    label: Label
    generator: str = "none"
    category: str = ""

    def __post_init__(self):
        object.__setattr__(self, "label", Label.parse(self.label))
        object.__setattr__(self, "generator", (self.generator or "none").lower())
        object.__setattr__(self, "category", (self.category or "").lower())
        if self.label is Label.REAL and self.generator != "none":
            raise InvalidParameter(f"{self.path}: real images must have generator 'none'")
        if self.label is Label.SYNTHETIC and self.generator == "none":
            raise InvalidParameter(f"{self.path}: synthetic images need a generator tag")

    def to_dict(self) -> dict:
        return {"path": self.path, "label": self.label.value,
                "generator": self.generator, "category": self.category}


@dataclass(frozen=True)
class SourceManifest:
    entries: tuple[SourceEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        seen = set()
        for e in entries:
            if e.path in seen:
                raise InvalidParameter(f"duplicate manifest path {e.path}")
            seen.add(e.path)
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_jsonl(cls, path: str) -> "SourceManifest":
        base = os.path.dirname(os.path.abspath(path))
        entries = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    p = d["path"]
                    if not os.path.isabs(p):
                        p = os.path.normpath(os.path.join(base, p))
                    entries.append(SourceEntry(p, d["label"], d.get("generator", "none"),
                                               d.get("category", "")))
                except (KeyError, ValueError) as exc:
                    raise InvalidParameter(f"{path}:{lineno}: bad manifest row ({exc})") from exc
        return cls(tuple(entries))


@dataclass(frozen=True)
class DatasetRecipe:
    """``None`` for a filter means "accept anything"."""

    id: str
    order: str
    patches_per_image: int
    jpeg_enabled: bool
    categories: frozenset | None = None
    generators: frozenset | None = None
    labels: frozenset | None = None
    patch_size: int = DEFAULT_PATCH_SIZE
    augmentation: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order not in (AUGMENT_THEN_CROP, CROP_THEN_AUGMENT):
            raise InvalidParameter(f"unknown order {self.order!r}")
        if self.patches_per_image < 1:
            raise InvalidParameter("patches_per_image must be >= 1")
        for name in ("categories", "generators", "labels"):
            value = getattr(self, name)
            if value is not None:
                if name == "labels":
                    value = frozenset(Label.parse(v) for v in value)
                else:
                    value = frozenset(str(v).lower() for v in value)
                object.__setattr__(self, name, value)

    def accepts(self, entry: SourceEntry) -> bool:
        if self.categories is not None and entry.category not in self.categories:
            return False
        if self.labels is not None and entry.label not in self.labels:
            return False
        if (entry.label is Label.SYNTHETIC and self.generators is not None
                and entry.generator not in self.generators):
            return False
        return True

    def augmentation_config(self) -> AugmentationConfig:
        config = AugmentationConfig().with_overrides(**self.augmentation)
        if not self.jpeg_enabled:
            config = replace(config, jpeg_p=0.0)
        return config

    def sampling_mode(self) -> SamplingMode:
        if self.order == AUGMENT_THEN_CROP:
            return SamplingMode.RANDOM
        return SamplingMode.GRID_ALIGNED

    def to_dict(self) -> dict:
        def opt(s, key=str):
            return None if s is None else sorted(key(v) for v in s)

        return {
            "id": self.id,
            "order": self.order,
            "patches_per_image": self.patches_per_image,
            "jpeg_enabled": self.jpeg_enabled,
            "categories": opt(self.categories),
            "generators": opt(self.generators),
            "labels": opt(self.labels, lambda v: v.value),
            "patch_size": self.patch_size,
            "augmentation": dict(self.augmentation),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecipe":
        d = dict(d)
        for key in ("categories", "generators", "labels"):
            if d.get(key) is not None:
                d[key] = frozenset(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidParameter(f"bad recipe: {exc}") from exc


def _builtin_table(d4_ideal: bool = False) -> dict[str, DatasetRecipe]:
    everything = frozenset(CATEGORIES)
    all_gens = frozenset(GENERATORS)
    animal_gens = frozenset({"stylegan2", "stargan-v2"})
    d4_categories = frozenset({"metfaces"}) if d4_ideal else frozenset({"metfaces", "afhq2"})
    d4_generators = frozenset({"stylegan2"}) if d4_ideal else animal_gens
    return {
        "D1": DatasetRecipe("D1", AUGMENT_THEN_CROP, 1, True, everything, all_gens),
        "D2": DatasetRecipe("D2", CROP_THEN_AUGMENT, 1, True, everything, all_gens),
        "D3": DatasetRecipe("D3", CROP_THEN_AUGMENT, 10, False, frozenset({"afhq2"}), animal_gens),
        "D4": DatasetRecipe("D4", CROP_THEN_AUGMENT, 10, False, d4_categories, d4_generators),
        "D5": DatasetRecipe("D5", CROP_THEN_AUGMENT, 1, True, frozenset({"ffhq"}),
                            frozenset({"stylegan2", "taming", "facev2v", "score-based"})),
    }


def builtin_recipe(recipe_id: str, *, d4_ideal: bool = False) -> DatasetRecipe:
    """One of D1..D5. ``d4_ideal`` gives the Metfaces-only D4 variant."""
    table = _builtin_table(d4_ideal)
    key = str(recipe_id).strip().upper()
    if key not in table:
        raise UnknownRecipe(f"unknown recipe {recipe_id!r}; expected one of {sorted(table)}")
    return table[key]


# -- orthogonality ---------------------------------------------------------

CONDITIONS = ("semantic", "post_processing", "compression", "generators")


@dataclass(frozen=True)
class PairReport:
    a: str
    b: str
    conditions: dict

    @property
    def orthogonal(self) -> bool:
        return any(self.conditions.values())

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "orthogonal": self.orthogonal,
                "conditions": dict(self.conditions)}


def _categories(r: DatasetRecipe) -> frozenset:
    return frozenset(CATEGORIES) if r.categories is None else r.categories


def _generators(r: DatasetRecipe) -> frozenset:
    return frozenset(GENERATORS) if r.generators is None else r.generators


def validate_orthogonality(recipes: Iterable[DatasetRecipe]) -> list[PairReport]:
    """Which orthogonality conditions hold for every pair of recipes.

    semantic: disjoint categories; post_processing: different crop/augment
    order (changes JPEG-grid alignment); compression: JPEG on in one, off in
    the other; generators: different generator sets.
    """
    recipes = list(recipes)
    if len(recipes) < 2:
        raise InvalidParameter("need at least two recipes")
    reports = []
    for i, a in enumerate(recipes):
        for b in recipes[i + 1:]:
            reports.append(PairReport(a.id, b.id, {
                "semantic": _categories(a).isdisjoint(_categories(b)),
                "post_processing": a.order != b.order,
                "compression": a.jpeg_enabled != b.jpeg_enabled,
                "generators": _generators(a) != _generators(b),
            }))
    return reports


# -- materialization -------------------------------------------------------


@dataclass(frozen=True)
class DatasetRow:
    source: str
    label: Label
    generator: str
    category: str
    region: PatchRegion
    log: AugmentationLog
    patch_index: int
    patch_file: str | None = None

    def to_dict(self) -> dict:
        d = {
            "source": self.source,
            "label": self.label.value,
            "generator": self.generator,
            "category": self.category,
            "patch_index": self.patch_index,
            "region": self.region.to_dict(),
            "augmentation": self.log.to_list(),
        }
        if self.patch_file is not None:
            d["patch_file"] = self.patch_file
        return d


@dataclass(frozen=True)
class DatasetOutput:
    recipe: DatasetRecipe
    seed: int
    rows: tuple[DatasetRow, ...]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.rows)


class MaterializeError(PatchEnsembleError):
    """Wraps a failure for one source image with its path."""

    def __init__(self, path, cause):
        super().__init__(f"{path}: {type(cause).__name__}: {cause}")
        self.path = path
        self.cause = cause


def _materialize_entry(recipe, entry, seed, loader, config):
    image = loader(entry.path)
    rows = []
    patches = []
    sampling_seed = derive_seed(seed, entry.path, "regions")
    policy = SamplingPolicy(recipe.sampling_mode(), recipe.patches_per_image,
                            recipe.patch_size, sampling_seed)
    if recipe.order == AUGMENT_THEN_CROP:
        augmented, log = apply_pipeline(image, config, stream_for(seed, entry.path))
        for k, region in enumerate(sample_patches(augmented, policy)):
            rows.append(DatasetRow(entry.path, entry.label, entry.generator, entry.category,
                                   region, log, k))
            patches.append(crop(augmented, region))
    else:
        for k, region in enumerate(sample_patches(image, policy)):
            patch, log = apply_pipeline(crop(image, region), config,
                                        stream_for(seed, entry.path, k))
            rows.append(DatasetRow(entry.path, entry.label, entry.generator, entry.category,
                                   region, log, k))
            patches.append(patch)
    return rows, patches


def materialize(recipe: DatasetRecipe, manifest: SourceManifest, seed: int,
                loader: Callable[[str], np.ndarray], *, workers: int = 1,
                patch_writer: Callable[[DatasetRow, np.ndarray], str] | None = None
                ) -> DatasetOutput:
    """Build the patch manifest for ``recipe``.

    ``loader`` decodes a path into an RGB array. Each source image gets its
    own random streams derived from ``(seed, path)``, so the result is the
    same for any ``workers``. ``patch_writer`` (optional) stores a patch and
    returns the file name recorded in the row.
    """
    selected = [e for e in manifest.entries if recipe.accepts(e)]
    if not selected:
        raise EmptyAfterFilter(f"recipe {recipe.id}: no manifest entry passes the filter")
    config = recipe.augmentation_config()

    def work(entry):
        try:
            return _materialize_entry(recipe, entry, seed, loader, config)
        except Exception as exc:
            raise MaterializeError(entry.path, exc) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, selected))
    else:
        results = [work(e) for e in selected]

    rows = []
    for entry_rows, patches in results:
        for row, patch in zip(entry_rows, patches):
            if patch_writer is not None:
                row = replace(row, patch_file=patch_writer(row, patch))
            rows.append(row)
    return DatasetOutput(recipe, seed, tuple(rows))


@dataclass(frozen=True)
class TrainingConfigMetadata:
    """Training schedule for external trainers; never used by this package."""

    recipe: str
    backbone: str = "efficientnet-b4"
    pretrained: str = "imagenet"
    patch_size: int = DEFAULT_PATCH_SIZE
    train_fraction: float = 0.8
    validation_fraction: float = 0.2
    loss: str = "cross-entropy"
    optimizer: str = "adam"
    optimizer_params: dict = field(default_factory=lambda: {"betas": [0.9, 0.999], "eps": 1e-8})
    initial_learning_rate: float = 0.001
    plateau_decay_factor: float = 10.0
    plateau_patience_epochs: int = 10
    early_stop_patience_epochs: int = 20
    max_epochs: int = 500
    model_selection: str = "best-validation-loss"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

"""End-to-end detection for one image: patches -> scorers -> aggregation -> fusion."""

from __future__ import annotations

from dataclasses import dataclass, field

from .aggregation import AggregationPolicy, ImageVerdict, ScorerVerdict, aggregate, classify, fuse_ensemble
from .errors import EmptyEnsemble, InvalidParameter
from .patching import (
    DEFAULT_ALIGNED_COUNT,
    DEFAULT_PATCH_SIZE,
    DEFAULT_RANDOM_COUNT,
    SamplingMode,
    SamplingPolicy,
    as_image,
    derive_seed,
    extract,
    sample_patches,
)
from .scoring import PatchScorer, score_patches


@dataclass(frozen=True)
class EnsembleMember:
    scorer: PatchScorer
    sampling: SamplingPolicy
    policy: AggregationPolicy = AggregationPolicy()


@dataclass(frozen=True)
class EnsembleConfig:
    members: tuple[EnsembleMember, ...]
    threshold: float = 0.0
    patch_size: int = field(default=DEFAULT_PATCH_SIZE)

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise EmptyEnsemble("an ensemble needs at least one scorer")
        for m in members:
            if m.sampling.size != self.patch_size:
                raise InvalidParameter(
                    f"scorer {m.scorer.id!r} samples {m.sampling.size}px patches, "
                    f"ensemble uses {self.patch_size}px")
        object.__setattr__(self, "members", members)


def deployment_sampling(n_scorers: int = 5, *, size: int = DEFAULT_PATCH_SIZE,
                        random_count: int = DEFAULT_RANDOM_COUNT,
                        aligned_count: int = DEFAULT_ALIGNED_COUNT) -> list[SamplingPolicy]:
    """Sampling used at deployment: random patches for the first scorer, grid-aligned after."""
    policies = [SamplingPolicy(SamplingMode.RANDOM, random_count, size)]
    policies += [SamplingPolicy(SamplingMode.GRID_ALIGNED, aligned_count, size)
                 for _ in range(n_scorers - 1)]
    return policies[:n_scorers]


def detect_image(image, ensemble: EnsembleConfig, *, key: str = "", seed: int = 0) -> ImageVerdict:
    """Score one decoded image.

    Patch positions for scorer ``c`` are seeded from ``(seed, key, c)`` so the
    result does not depend on processing order.
    """
    image = as_image(image)
    per_scorer = []
    for c, member in enumerate(ensemble.members):
        sampling = member.sampling.with_seed(derive_seed(seed, key, c, member.sampling.seed))
        regions = sample_patches(image, sampling)
        vector = score_patches(member.scorer, extract(image, regions), regions)
        per_scorer.append(ScorerVerdict(member.scorer.id, aggregate(vector, member.policy),
                                        member.policy, len(vector)))
    fused = fuse_ensemble(v.score for v in per_scorer)
    return ImageVerdict(key, fused, classify(fused, ensemble.threshold), tuple(per_scorer))

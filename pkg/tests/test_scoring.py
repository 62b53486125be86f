import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchensemble.errors import InvalidParameter, ScoringError
from patchensemble.patching import PatchRegion
from patchensemble.scoring import (
    AnalyticScorerSpec,
    PatchScoreVector,
    PatchScorer,
    checkerboard,
    make_analytic_scorer,
    score_patches,
)


def patches(n, size=16, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, (size, size, 3), dtype=np.uint8) for _ in range(n)]


def regions(n, size=16):
    return [PatchRegion(x=i, y=0, size=size) for i in range(n)]


def test_constant_scorer():
    s = make_analytic_scorer(AnalyticScorerSpec("constant", {"value": -1.5}))
    assert isinstance(s, PatchScorer)
    assert s.score_batch(patches(4)).tolist() == [-1.5] * 4


def test_luma_threshold_black_patch():
    s = make_analytic_scorer(AnalyticScorerSpec("luma_threshold", {"pivot": 0.5, "gain": 2}))
    assert s.score_batch([np.zeros((8, 8, 3), np.uint8)])[0] == pytest.approx(-1.0, abs=1e-15)


def test_luma_threshold_white_patch():
    s = make_analytic_scorer(AnalyticScorerSpec("LumaThreshold", {"pivot": 0.5, "gain": 2}))
    assert s.score_batch([np.full((8, 8, 3), 255, np.uint8)])[0] == pytest.approx(1.0)


def test_planted_signal_self_correlation():
    tmpl = checkerboard(32, 8)
    s = make_analytic_scorer(AnalyticScorerSpec("planted_signal", {"template": tmpl.tolist(), "gain": 3.0}))
    patch = np.repeat(tmpl.astype(np.uint8)[..., None], 3, axis=2)
    assert s.score_batch([patch])[0] == pytest.approx(3.0)
    inverted = 255 - patch
    assert s.score_batch([inverted])[0] == pytest.approx(-3.0)
    assert s.score_batch([np.full_like(patch, 9)])[0] == 0.0


def test_planted_signal_bounded():
    s = make_analytic_scorer(AnalyticScorerSpec("planted_signal", {"size": 16, "gain": 2.0}))
    scores = s.score_batch(patches(50))
    assert np.all(np.abs(scores) <= 2.0)


def test_spec_validation():
    with pytest.raises(InvalidParameter):
        AnalyticScorerSpec("oracle")
    with pytest.raises(InvalidParameter):
        AnalyticScorerSpec("constant", {"value": float("inf")})


def test_score_patches_constant():
    s = make_analytic_scorer(AnalyticScorerSpec("constant", {"value": 0.2}), id="c")
    v = score_patches(s, patches(3), regions(3))
    assert v.scorer == "c" and v.scores.tolist() == [0.2, 0.2, 0.2]


def test_score_patches_empty():
    s = make_analytic_scorer(AnalyticScorerSpec("constant", {"value": 0.2}))
    with pytest.raises(InvalidParameter):
        score_patches(s, [], [])


def test_score_patches_length_mismatch():
    s = make_analytic_scorer(AnalyticScorerSpec("constant", {"value": 0.2}))
    with pytest.raises(InvalidParameter):
        score_patches(s, patches(2), regions(3))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 30), cut=st.integers(1, 29), seed=st.integers(0, 1000),
       kind=st.sampled_from(["luma_threshold", "planted_signal"]))
def test_batch_invariance(n, cut, seed, kind):
    cut = min(cut, n - 1)
    s = make_analytic_scorer(AnalyticScorerSpec(kind, {"size": 16, "gain": 1.7}), patch_size=16)
    ps = patches(n, seed=seed)
    full = s.score_batch(ps)
    split = np.concatenate([s.score_batch(ps[:cut]), s.score_batch(ps[cut:])])
    np.testing.assert_array_equal(full, split)
    rev = s.score_batch(ps[::-1])[::-1]
    np.testing.assert_array_equal(full, rev)


class _Exploding:
    id = "boom"

    def score_batch(self, ps):
        if any(p[0, 0, 0] == 255 for p in ps):
            raise RuntimeError("bad patch")
        return np.zeros(len(ps))


def test_scorer_failure_reports_index():
    ps = [np.zeros((4, 4, 3), np.uint8) for _ in range(5)]
    ps[3] = np.full((4, 4, 3), 255, np.uint8)
    with pytest.raises(ScoringError) as info:
        score_patches(_Exploding(), ps, regions(5, 4))
    assert info.value.index == 3


class _NaN:
    id = "nan"

    def score_batch(self, ps):
        out = np.zeros(len(ps))
        out[1] = np.nan
        return out


def test_nonfinite_scores_rejected():
    with pytest.raises(ScoringError) as info:
        score_patches(_NaN(), patches(3), regions(3))
    assert info.value.index == 1


def test_score_vector_invariants():
    with pytest.raises(InvalidParameter):
        PatchScoreVector("x", np.array([]), ())
    with pytest.raises(InvalidParameter):
        PatchScoreVector("x", np.array([1.0, 2.0]), tuple(regions(1)))

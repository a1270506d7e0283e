import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skel_sentinel.errors import ContractError
from skel_sentinel.scoring import (
    ScoreSeries,
    SnippetScore,
    build_score_series,
    frame_level_scores,
    holistic_scores,
    read_frame_scores,
    smooth_scores,
    standardize,
    write_frame_scores,
)


def series_from(scored, video="v0"):
    snippets = [
        SnippetScore(f"{video}:{p}:{t}", p, t, 0.0, 0.0, s) for p, t, s in scored
    ]
    return ScoreSeries(video, snippets, np.empty(0))


class TestHolistic:
    def test_constant_uniqueness_contributes_nothing(self):
        st_scores = np.array([1.0, 3.0, 2.0, 8.0])
        su_scores = np.full(4, 5.5)
        fused = holistic_scores(st_scores, su_scores)
        np.testing.assert_allclose(fused, standardize(st_scores), atol=1e-12)

    def test_standardized_families_have_unit_moments(self):
        rng = np.random.default_rng(0)
        st_scores = rng.standard_normal(100) * 7 + 3
        z = standardize(st_scores)
        assert abs(z.mean()) <= 1e-9
        assert abs(z.std() - 1.0) <= 1e-9

    def test_affine_invariance(self):
        rng = np.random.default_rng(1)
        st_scores = rng.standard_normal(50)
        su_scores = rng.standard_normal(50)
        base = holistic_scores(st_scores, su_scores)
        moved = holistic_scores(3.7 * st_scores + 11.0, su_scores)
        np.testing.assert_allclose(base, moved, atol=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            holistic_scores(np.zeros(3), np.zeros(4))

    @settings(max_examples=30, deadline=None)
    @given(
        seed=st.integers(0, 2**16),
        a=st.floats(0.1, 50.0),
        b=st.floats(-100.0, 100.0),
    )
    def test_argmax_invariance_property(self, seed, a, b):
        rng = np.random.default_rng(seed)
        st_scores = rng.standard_normal(30)
        su_scores = rng.standard_normal(30)
        s0 = holistic_scores(st_scores, su_scores)
        s1 = holistic_scores(a * st_scores + b, su_scores)
        assert np.argmax(s0) == np.argmax(s1)


class TestFrameLevel:
    def test_max_across_persons(self):
        series = series_from([(0, 0, 0.2), (1, 0, 0.9)])
        frames = frame_level_scores(series, video_length=16, window_length=16)
        np.testing.assert_allclose(frames, 0.9)

    def test_empty_frames_get_video_minimum(self):
        series = series_from([(0, 0, -1.3), (0, 32, 0.4), (0, 64, 2.1)])
        frames = frame_level_scores(series, video_length=96, window_length=16)
        assert frames[20] == -1.3  # uncovered
        assert frames[95] == -1.3

    def test_window_coverage(self):
        # second snippet pins the fill value below the first one's score
        series = series_from([(0, 5, 1.5), (1, 0, -2.0)])
        frames = frame_level_scores(series, video_length=30, window_length=16)
        covered = np.flatnonzero(frames == 1.5)
        np.testing.assert_array_equal(covered, np.arange(5, 21))
        assert frames[25] == -2.0  # uncovered tail takes the video minimum

    def test_within_person_overlap_takes_max(self):
        series = series_from([(0, 0, 0.1), (0, 8, 0.7)])
        frames = frame_level_scores(series, video_length=24, window_length=16)
        assert frames[4] == 0.1
        assert frames[10] == 0.7  # overlap region
        assert frames[20] == 0.7

    def test_clipping_logs_and_survives(self, caplog):
        series = series_from([(0, 10, 0.5)])
        with caplog.at_level("WARNING"):
            frames = frame_level_scores(series, video_length=16, window_length=16)
        assert len(frames) == 16
        assert frames[15] == 0.5
        assert any("clipped" in r.message for r in caplog.records)

    def test_no_snippets_gives_zeros(self):
        frames = frame_level_scores(ScoreSeries("v0", [], np.empty(0)), 10, 16)
        np.testing.assert_array_equal(frames, 0.0)

    def test_length_and_finiteness(self):
        rng = np.random.default_rng(2)
        scored = [(p, t, float(rng.standard_normal())) for p in range(3) for t in range(0, 40, 4)]
        frames = frame_level_scores(series_from(scored), video_length=60, window_length=16)
        assert len(frames) == 60
        assert np.isfinite(frames).all()

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**16), bump=st.floats(0.1, 10.0))
    def test_monotone_in_snippet_scores(self, seed, bump):
        rng = np.random.default_rng(seed)
        scored = [(p, t, float(rng.standard_normal())) for p in range(2) for t in range(0, 30, 5)]
        base = frame_level_scores(series_from(scored), 50, 16)
        p, t, s = scored[rng.integers(len(scored))]
        raised = [(pp, tt, ss + bump if (pp, tt) == (p, t) else ss) for pp, tt, ss in scored]
        upper = frame_level_scores(series_from(raised), 50, 16)
        assert (upper >= base - 1e-12).all()


class TestSeriesAssembly:
    def test_build_score_series(self):
        st_scores = np.array([5.0, 1.0, 1.0])
        su_scores = np.array([0.5, 0.5, 4.0])
        series = build_score_series(
            "v0", ["v0:0:0", "v0:1:0", "v0:1:32"], [0, 1, 1], [0, 0, 32],
            st_scores, su_scores, video_length=48, window_length=16,
        )
        assert len(series.frame_scores) == 48
        assert series.snippets[0].holistic == pytest.approx(
            standardize(st_scores)[0] + standardize(su_scores)[0]
        )


class TestScoreFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        scores = {
            "va": rng.standard_normal(20).round(6),
            "vb": rng.standard_normal(8).round(6),
        }
        path = tmp_path / "scores.tsv"
        write_frame_scores(scores, path)
        back = read_frame_scores(path)
        assert sorted(back) == ["va", "vb"]
        for vid in scores:
            np.testing.assert_allclose(back[vid], scores[vid], atol=5e-7)

    def test_six_decimal_format(self, tmp_path):
        path = tmp_path / "scores.tsv"
        write_frame_scores({"v": np.array([1.23456789])}, path)
        assert path.read_text() == "v\t0\t1.234568\n"


def test_snippet_detail_format(tmp_path):
    from skel_sentinel.scoring import write_snippet_details

    snippets = [SnippetScore("v:2:5", 2, 5, 1.23456789, -0.5, 0.75)]
    series = {"v": ScoreSeries("v", snippets, np.zeros(21))}
    path = tmp_path / "details.tsv"
    write_snippet_details(series, path)
    assert path.read_text() == "v\t2\t5\t1.234568\t-0.500000\t0.750000\n"


class TestSmoothing:
    def test_window_one_is_identity(self):
        x = np.array([1.0, 5.0, 2.0])
        np.testing.assert_array_equal(smooth_scores(x, 1), x)

    def test_constant_preserved(self):
        x = np.full(10, 2.5)
        np.testing.assert_allclose(smooth_scores(x, 5), x)

    def test_mean_preserving_interior(self):
        x = np.arange(9, dtype=float)
        smoothed = smooth_scores(x, 3)
        np.testing.assert_allclose(smoothed[1:-1], x[1:-1])

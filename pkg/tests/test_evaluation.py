import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skel_sentinel.errors import SchemaError, UndefinedMetricError
from skel_sentinel.evaluation import (
    LabeledVideo,
    micro_auc,
    read_labels,
    write_labels,
    write_report,
)


def pair_counting_auc(labels, scores):
    """Mann-Whitney oracle: count correctly ordered positive-negative pairs."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def lv(labels, scores, vid="v"):
    return LabeledVideo(vid, np.asarray(labels, dtype=np.int8), np.asarray(scores, float))


class TestMicroAuc:
    def test_perfect_separation(self):
        assert micro_auc([lv([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])]) == 1.0

    def test_hand_case(self):
        assert micro_auc([lv([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])]) == pytest.approx(0.75)

    def test_ties_get_half_credit(self):
        assert micro_auc([lv([0, 1], [0.5, 0.5])]) == pytest.approx(0.5)

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedMetricError):
            micro_auc([lv([1, 1], [0.1, 0.2])])

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(0)
        labels = np.array([0, 1] * 5000, dtype=np.int8)
        scores = rng.standard_normal(10000)
        assert micro_auc([LabeledVideo("v", labels, scores)]) == pytest.approx(0.5, abs=0.02)

    def test_concatenation_across_videos(self):
        videos = [lv([0, 0], [0.3, 0.1], "a"), lv([1, 1], [0.2, 0.9], "b")]
        merged = lv([0, 0, 1, 1], [0.3, 0.1, 0.2, 0.9])
        assert micro_auc(videos) == micro_auc([merged])

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(5, 200))
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                continue
            scores = rng.choice([0.1, 0.25, 0.5, 0.8], n)  # force ties
            got = micro_auc([lv(labels, scores)])
            assert got == pytest.approx(pair_counting_auc(labels, scores), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 60
        labels = rng.integers(0, 2, n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        scores = rng.standard_normal(n)
        base = micro_auc([lv(labels, scores)])
        warped = micro_auc([lv(labels, np.exp(scores * 0.5) + 3)])
        assert warped == pytest.approx(base, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_sign_flip_maps_to_complement(self, seed):
        rng = np.random.default_rng(seed)
        n = 50
        labels = rng.integers(0, 2, n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        scores = rng.standard_normal(n)  # continuous, ties have measure zero
        base = micro_auc([lv(labels, scores)])
        flipped = micro_auc([lv(labels, -scores)])
        assert flipped == pytest.approx(1.0 - base, abs=1e-12)


class TestLabelFiles:
    def test_round_trip(self, tmp_path):
        labels = {"va": np.array([0, 0, 1, 1, 0], dtype=np.int8), "vb": np.array([1, 0], dtype=np.int8)}
        path = tmp_path / "labels.tsv"
        write_labels(labels, path)
        back = read_labels(path)
        assert sorted(back) == ["va", "vb"]
        for vid in labels:
            np.testing.assert_array_equal(back[vid], labels[vid])

    def test_gap_rejected(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("v\t0\t0\nv\t2\t1\n")
        with pytest.raises(SchemaError, match="gaps"):
            read_labels(path)

    def test_non_binary_rejected(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("v\t0\t2\n")
        with pytest.raises(SchemaError):
            read_labels(path)


def test_report_format(tmp_path):
    path = tmp_path / "report.txt"
    write_report([("micro_auc", 0.912345678), ("videos", 3), ("note", "ok")], path)
    assert path.read_text() == "micro_auc = 0.912346\nvideos = 3\nnote = ok\n"

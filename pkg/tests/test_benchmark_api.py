import dataclasses

import numpy as np
import pytest

from skel_sentinel.config import RunConfig
from skel_sentinel.errors import StageError
from skel_sentinel.evaluation import run_benchmark, write_labels
from skel_sentinel.featurize import FeatureStore, class_prototypes
from skel_sentinel.flow import TrainConfig, init_flow, save_flow, train_flow
from skel_sentinel.pipeline import extract_snippets, featurize_snippets
from skel_sentinel.pose_io import write_tracks
from skel_sentinel.synth import make_benchmark
from skel_sentinel.typicality import select_typical

SMALL_CFG = RunConfig(feature_dim=16, epochs=4, batch_size=256, k_neighbors=4, seed=0)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench_api")
    cfg = SMALL_CFG
    data = make_benchmark(seed=0, videos_per_class=2, test_counts={"pattern": 2, "outlier": 1})
    snippets = extract_snippets(data.corpus_videos, cfg.window_length, cfg.stride)
    refs, matrix, meta = featurize_snippets(snippets, cfg.feature_dim, cfg.seed)
    store = FeatureStore(refs, matrix)
    labels_map = {r: data.corpus_classes[meta[r].video_id] for r in refs}
    protos = class_prototypes(store, labels_map)
    sel = select_typical(store, protos, labels_map, data.typicality, 0.9, 0.1)
    data_n = np.vstack([store.lookup(r) for r in sel.normal_refs]).astype(np.float64)
    data_a = np.vstack([store.lookup(r) for r in sel.abnormal_refs]).astype(np.float64)
    model = init_flow(cfg.feature_dim, cfg.flow_layers, cfg.hidden_width, cfg.seed)
    train_flow(model, data_n, data_a, TrainConfig(batch_size=256, epochs=4, seed=0))

    write_tracks(data.test_videos, root / "tracks.tsv")
    write_labels(data.test_labels, root / "labels.tsv")
    save_flow(model, root / "model.skfl")
    return root, cfg


class TestRunBenchmark:
    def test_writes_report_and_scores(self, small_run, tmp_path):
        root, cfg = small_run
        report = run_benchmark(
            root / "tracks.tsv", "kinematic", root / "model.skfl",
            root / "labels.tsv", tmp_path, cfg,
        )
        assert (tmp_path / "scores.tsv").exists()
        assert (tmp_path / "details.tsv").exists()
        text = (tmp_path / "report.txt").read_text()
        for key in ("micro_auc", "videos", "frames", "wall_seconds"):
            assert f"{key} = " in text
        assert report.videos == 3
        assert 0.0 <= report.micro <= 1.0
        assert set(report.per_video_auc) <= set(report.frame_scores)

    def test_deterministic_scores(self, small_run, tmp_path):
        root, cfg = small_run
        a = run_benchmark(
            root / "tracks.tsv", "kinematic", root / "model.skfl",
            root / "labels.tsv", tmp_path / "a", cfg,
        )
        b = run_benchmark(
            root / "tracks.tsv", "kinematic", root / "model.skfl",
            root / "labels.tsv", tmp_path / "b", cfg,
        )
        assert a.micro == b.micro
        assert (tmp_path / "a" / "scores.tsv").read_bytes() == (
            tmp_path / "b" / "scores.tsv"
        ).read_bytes()

    def test_missing_model_names_stage_and_path(self, small_run, tmp_path):
        root, cfg = small_run
        with pytest.raises(StageError, match="load-model") as exc:
            run_benchmark(
                root / "tracks.tsv", "kinematic", root / "nope.skfl",
                root / "labels.tsv", tmp_path, cfg,
            )
        assert "nope.skfl" in str(exc.value)

    def test_threaded_scoring_matches_serial(self, small_run, tmp_path):
        root, cfg = small_run
        serial = run_benchmark(
            root / "tracks.tsv", "kinematic", root / "model.skfl",
            root / "labels.tsv", tmp_path / "s", cfg, threads=1,
        )
        threaded = run_benchmark(
            root / "tracks.tsv", "kinematic", root / "model.skfl",
            root / "labels.tsv", tmp_path / "t", cfg, threads=4,
        )
        assert (tmp_path / "s" / "scores.tsv").read_bytes() == (
            tmp_path / "t" / "scores.tsv"
        ).read_bytes()
        assert serial.micro == threaded.micro


class TestRunConfig:
    def test_file_round_trip_lossless(self, tmp_path):
        cfg = RunConfig(joints=13, alpha=2.5, beta_abnormal=0.25, features="file", seed=9)
        path = tmp_path / "run.cfg"
        cfg.to_file(path)
        assert RunConfig.from_file(path) == cfg

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("nonsense = 1\n")
        from skel_sentinel.errors import SchemaError

        with pytest.raises(SchemaError, match="nonsense"):
            RunConfig.from_file(path)

    def test_all_defaults_round_trip(self, tmp_path):
        cfg = RunConfig()
        cfg.to_file(tmp_path / "d.cfg")
        assert RunConfig.from_file(tmp_path / "d.cfg") == cfg
        # every field appears in the file
        text = (tmp_path / "d.cfg").read_text()
        for field in dataclasses.fields(RunConfig):
            assert f"{field.name} = " in text

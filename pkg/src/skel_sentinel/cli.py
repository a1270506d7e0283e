"""Command-line front end.

Subcommands mirror the pipeline stages: synth, featurize, select, train,
score, eval, check. Every run resolves one RunConfig (defaults, then
--config file, then explicit flags) and writes it next to its outputs as
``config.<stage>.resolved``. Failures print a single machine-parsable line

    error<TAB><stage><TAB><exception type><TAB><message>

to stderr and exit 1; usage problems exit 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import sys
import time
from pathlib import Path

import numpy as np

from . import checks
from .config import RunConfig, resolve_threads
from .errors import SchemaError, SentinelError
from .evaluation import (
    LabeledVideo,
    micro_auc,
    read_labels,
    write_labels,
    write_report,
)
from .featurize import (
    FeatureStore,
    class_prototypes,
    load_embeddings,
    load_text_embeddings,
    write_embeddings,
)
from .flow import TrainConfig, init_flow, load_flow, save_flow, train_flow
from .pipeline import (
    build_scene_indices,
    extract_snippets,
    featurize_snippets,
    score_scenes,
    snippet_features_from_store,
)
from .pose_io import load_tracks, write_tracks
from .scoring import (
    build_score_series,
    read_frame_scores,
    smooth_scores,
    write_frame_scores,
    write_snippet_details,
)
from .synth import make_benchmark, read_class_map, write_class_map
from .typicality import (
    load_typicality_spec,
    save_typicality_spec,
    select_typical,
)
from .errors import UndefinedMetricError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config file (key = value lines)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--threads", type=int, default=None,
        help="worker cap; falls back to $SKEL_SENTINEL_THREADS, then 1",
    )
    parser.add_argument(
        "--grid", action="append", default=[], metavar="KEY=V1,V2",
        help="expand into one run per value combination (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skel-sentinel",
        description="Skeleton-snippet video anomaly scoring pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        _add_common(p)
        return p

    p = add("synth", "generate the synthetic benchmark bundle")
    p.add_argument("--out", required=True, help="output directory")

    p = add("featurize", "tracks -> snippet embedding file")
    p.add_argument("--tracks", required=True, help="input track file")
    p.add_argument("--out", required=True, help="output .skem file or directory")
    p.add_argument("--classes", help="video_id<TAB>class map; enables --text-out")
    p.add_argument("--text-out", help="write per-class prototype embeddings here")

    p = add("select", "pick high-similarity typical snippets")
    p.add_argument("--features", required=True, help="snippet embedding file")
    p.add_argument("--texts", required=True, help="class embedding file")
    p.add_argument("--classes", required=True, help="video_id<TAB>class map")
    p.add_argument("--spec", required=True, help="typicality label list file")
    p.add_argument("--out", required=True, help="output directory")

    p = add("train", "train the typicality flow on selected snippets")
    p.add_argument("--features", required=True, help="snippet embedding file")
    p.add_argument("--selection", required=True, help="directory with selected_*.tsv")
    p.add_argument("--out", required=True, help="output directory")

    p = add("score", "score test tracks with a trained flow")
    p.add_argument("--tracks", required=True, help="input track file")
    p.add_argument("--model", required=True, help="flow checkpoint")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--features", help="embedding file (required when features = file)")

    p = add("eval", "micro-average frame-level AUC from score + label files")
    p.add_argument("--scores", required=True, help="frame score file")
    p.add_argument("--labels", required=True, help="frame label file")
    p.add_argument("--out", required=True, help="output directory")

    add("check", "run the numerical self-tests")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    cfg = cfg.replace(threads=resolve_threads(args.threads))
    return cfg


def _write_resolved(cfg: RunConfig, out: Path, stage: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg.to_file(out / f"config.{stage}.resolved")


def cmd_synth(args: argparse.Namespace, cfg: RunConfig, out: Path) -> int:
    data = make_benchmark(seed=cfg.seed)
    _write_resolved(cfg, out, "synth")
    write_tracks(data.corpus_videos, out / "corpus_tracks.tsv")
    write_class_map(data.corpus_classes, out / "corpus_classes.tsv")
    write_tracks(data.test_videos, out / "test_tracks.tsv")
    write_labels(data.test_labels, out / "test_labels.tsv")
    write_class_map(data.manifest, out / "benchmark_manifest.tsv")
    save_typicality_spec(data.typicality, out / "typicality.spec")
    print(f"benchmark written to {out}")
    return 0


def _featurize_out_paths(out: Path) -> tuple[Path, Path]:
    if out.suffix == ".skem":
        return out, out.parent
    return out / "features.skem", out


def cmd_featurize(args: argparse.Namespace, cfg: RunConfig, out: Path) -> int:
    features_path, out_dir = _featurize_out_paths(out)
    videos = load_tracks(args.tracks, cfg.joints)
    snippets = extract_snippets(videos, cfg.window_length, cfg.stride)
    refs, matrix, _ = featurize_snippets(snippets, cfg.feature_dim, cfg.seed)
    _write_resolved(cfg, out_dir, "featurize")
    write_embeddings(refs, matrix, features_path)
    print(f"wrote {len(refs)} features of dimension {cfg.feature_dim} to {features_path}")

    if args.classes or args.text_out:
        if not (args.classes and args.text_out):
            raise SchemaError("--classes and --text-out must be given together")
        class_map = read_class_map(args.classes)
        labels = {}
        for ref in refs:
            video_id = ref.rsplit(":", 2)[0]
            if video_id in class_map:
                labels[ref] = class_map[video_id]
        store = FeatureStore(refs, matrix)
        prototypes = class_prototypes(store, labels)
        names = sorted(prototypes)
        write_embeddings(
            names, np.vstack([prototypes[n].values for n in names]), Path(args.text_out)
        )
        print(f"wrote {len(names)} class embeddings to {args.text_out}")
    return 0


def cmd_select(args: argparse.Namespace, cfg: RunConfig, out: Path) -> int:
    store = load_embeddings(args.features)
    texts = load_text_embeddings(args.texts)
    class_map = read_class_map(args.classes)
    spec = load_typicality_spec(args.spec)
    labels = {}
    for ref in store.refs:
        video_id = ref.rsplit(":", 2)[0]
        if video_id in class_map:
            labels[ref] = class_map[video_id]
    result = select_typical(store, texts, labels, spec, cfg.beta_normal, cfg.beta_abnormal)
    _write_resolved(cfg, out, "select")
    for name, refs in (("normal", result.normal_refs), ("abnormal", result.abnormal_refs)):
        with open(out / f"selected_{name}.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for ref in refs:
                fh.write(f"{ref}\t{result.similarities[ref]:.6f}\n")
    print(
        f"selected {len(result.normal_refs)} normal and "
        f"{len(result.abnormal_refs)} abnormal snippets"
    )
    return 0


def _read_selection(path: Path) -> list[str]:
    refs = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line:
            refs.append(line.split("\t")[0])
    return refs


def cmd_train(args: argparse.Namespace, cfg: RunConfig, out: Path) -> int:
    store = load_embeddings(args.features)
    selection = Path(args.selection)
    normal_refs = _read_selection(selection / "selected_normal.tsv")
    abnormal_refs = _read_selection(selection / "selected_abnormal.tsv")
    data_n = np.vstack([store.lookup(r) for r in normal_refs]).astype(np.float64)
    data_a = (
        np.vstack([store.lookup(r) for r in abnormal_refs]).astype(np.float64)
        if abnormal_refs
        else None
    )
    model = init_flow(store.dimension, cfg.flow_layers, cfg.hidden_width, cfg.seed)
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
    )
    model, history = train_flow(model, data_n, data_a, train_cfg)
    _write_resolved(cfg, out, "train")
    save_flow(model, out / "model.skfl")
    with open(out / "loss_history.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for epoch, loss in enumerate(history):
            fh.write(f"{epoch}\t{loss:.6f}\n")
    final = f"{history[-1]:.4f}" if history else "n/a"
    print(f"trained {cfg.flow_layers}-layer flow for {cfg.epochs} epochs, final loss {final}")
    return 0


def cmd_score(args: argparse.Namespace, cfg: RunConfig, out: Path) -> int:
    model = load_flow(args.model)
    videos = load_tracks(args.tracks, cfg.joints)
    snippets = extract_snippets(videos, cfg.window_length, cfg.stride)
    if cfg.features == "file" or args.features:
        if not args.features:
            raise SchemaError("config says features = file but --features is missing")
        store = load_embeddings(args.features)
        refs, matrix, meta = snippet_features_from_store(snippets, store)
    else:
        refs, matrix, meta = featurize_snippets(snippets, cfg.feature_dim, cfg.seed)
    indices = build_scene_indices(refs, matrix, meta)
    scored = score_scenes(model, indices, cfg, cfg.threads)

    frame_scores = {}
    all_series = {}
    for video_id, vs in scored.items():
        video_length = max(vs.start_times) + cfg.window_length
        series = build_score_series(
            video_id, vs.refs, vs.person_ids, vs.start_times,
            vs.typicality, vs.uniqueness, video_length, cfg.window_length, cfg.epsilon,
        )
        all_series[video_id] = series
        scores = series.frame_scores
        if cfg.smoothing_window > 1:
            scores = smooth_scores(scores, cfg.smoothing_window)
        frame_scores[video_id] = scores

    _write_resolved(cfg, out, "score")
    write_frame_scores(frame_scores, out / "scores.tsv")
    write_snippet_details(all_series, out / "details.tsv")
    print(f"scored {len(frame_scores)} videos ({len(refs)} snippets)")
    return 0


def cmd_eval(args: argparse.Namespace, cfg: RunConfig, out: Path) -> int:
    started = time.perf_counter()
    scores = read_frame_scores(args.scores)
    labels = read_labels(args.labels)
    videos = []
    per_video = {}
    for video_id in sorted(labels):
        if video_id not in scores:
            raise SchemaError(f"no scores for labeled video {video_id!r}")
        frame_scores = scores[video_id]
        length = len(labels[video_id])
        if len(frame_scores) < length:
            # uncovered tail; extend with the video minimum, as for empty frames
            pad = np.full(length - len(frame_scores), frame_scores.min())
            frame_scores = np.concatenate([frame_scores, pad])
        video = LabeledVideo(video_id, labels[video_id], frame_scores[:length])
        videos.append(video)
        try:
            per_video[video_id] = micro_auc([video])
        except UndefinedMetricError:
            pass
    micro = micro_auc(videos)
    n_frames = sum(len(v.labels) for v in videos)
    _write_resolved(cfg, out, "eval")
    entries: list[tuple[str, object]] = [
        ("micro_auc", micro),
        ("videos", len(videos)),
        ("frames", n_frames),
        ("wall_seconds", time.perf_counter() - started),
    ]
    entries.extend((f"video_auc.{vid}", auc) for vid, auc in sorted(per_video.items()))
    write_report(entries, out / "report.txt")
    print(f"micro_auc = {micro:.6f} over {n_frames} frames in {len(videos)} videos")
    return 0


def cmd_check(args: argparse.Namespace, cfg: RunConfig, out: Path | None) -> int:
    results = checks.run_self_tests(cfg.seed)
    all_ok = True
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        all_ok = all_ok and ok
    return 0 if all_ok else 1


_HANDLERS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "select": cmd_select,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "check": cmd_check,
}


def _parse_grid(specs: list[str]) -> list[dict[str, object]]:
    if not specs:
        return [{}]
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    axes = []
    for spec in specs:
        if "=" not in spec:
            raise SchemaError(f"--grid expects KEY=V1,V2 ..., got {spec!r}")
        key, _, values_text = spec.partition("=")
        key = key.strip()
        if key not in fields:
            raise SchemaError(f"--grid: unknown config key {key!r}")
        caster = {"int": int, "float": float}.get(fields[key].type, str)
        axes.append([(key, caster(v)) for v in values_text.split(",") if v])
    return [dict(combo) for combo in itertools.product(*axes)]


def command_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        base_cfg = _resolve_config(args)
        combos = _parse_grid(args.grid)
        status = 0
        for i, combo in enumerate(combos):
            cfg = base_cfg.replace(**combo) if combo else base_cfg
            out = Path(args.out) if getattr(args, "out", None) else None
            if combo:
                tag = "_".join(f"{k}={v}" for k, v in combo.items())
                if out is None:
                    raise SchemaError("--grid needs --out")
                out = out / f"grid{i:03d}_{tag}"
                print(f"[grid {i}] {tag}")
            status = max(status, handler(args, cfg, out))
        return status
    except (SentinelError, OSError, ValueError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error\t{args.command}\t{type(exc).__name__}\t{message}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(command_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

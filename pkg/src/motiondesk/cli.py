"""Command-line interface: ``motiondesk <subcommand>``.

Exit codes: 0 success, 2 usage error or missing input, 3 numerical failure
(non-finite training loss).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .charts import bar_chart, line_chart
from .core import load_checkpoint, save_checkpoint
from .flowfeat import embed_corpus, read_embeddings, write_embeddings
from .nets import ModelBundle
from .pipeline import (
    VARIANTS,
    ConfigError,
    TrainConfig,
    TrainingDivergence,
    evaluate,
    generate_synthetic_corpus,
    load_config,
    load_dataset,
    make_training_data,
    read_pgm,
    retrieve_nearest_clips,
    sample_clip,
    train_family,
    write_dataset,
)
from .pipeline.data import read_manifest as read_dataset_manifest
from .pipeline.train import VARIANT_PLAN
from . import pseudolabel

log = logging.getLogger("motiondesk")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
_HEAD_MODE = {"theta_a": "fused", "theta_c": "visual_only", "theta_o": "motion_only"}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- helpers


def _require(path: str | Path | None, what: str) -> Path:
    if not path:
        raise CliError(f"missing required input: {what}")
    p = Path(path)
    if not p.exists():
        raise CliError(f"missing input {what}: {p}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory is not writable: {out}")
    return out


def worker_count(n_tasks: int) -> int:
    raw = os.environ.get("MD_THREADS", "")
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise CliError(f"MD_THREADS must be a positive integer, got {raw!r}") from None
        if cap < 1:
            raise CliError(f"MD_THREADS must be a positive integer, got {raw!r}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def _load_corpus(args, cfg: TrainConfig):
    root = _require(args.dataset, "--dataset")
    _require(root / "manifest.tsv", "dataset manifest")
    corpus = load_dataset(root)
    if len(corpus.train_images):
        size = corpus.train_images.shape[1]
        if size != cfg.frame_size:
            cfg = cfg.replace(frame_size=size)
    return corpus, cfg


def _video_clips(corpus, cfg: TrainConfig) -> np.ndarray:
    if len(corpus.videos) == 0:
        raise CliError("dataset has no videos")
    return np.stack([sample_clip(v, cfg.k) for v in corpus.videos])


def _labels_for_videos(path: Path, n_videos: int, K: int) -> np.ndarray:
    clips = pseudolabel.read_manifest(path, K)
    labels = {c.clip_id: c.label for c in clips}
    missing = [i for i in range(n_videos) if i not in labels]
    if missing:
        raise CliError(f"pseudo-label manifest {path} lacks clip ids {missing[:5]}")
    return np.array([labels[i] for i in range(n_videos)], dtype=np.int64)


def _model_from_checkpoint(path: Path, cfg: TrainConfig, n_classes: int, seed: int) -> ModelBundle:
    model = ModelBundle(cfg.net(n_classes), seed)
    try:
        model.load_values(load_checkpoint(path))
    except (KeyError, ValueError) as exc:
        raise CliError(f"checkpoint {path} does not match the configured model: {exc}") from None
    return model


def variant_results(model: ModelBundle, variant: str, images, labels) -> list[tuple[str, float]]:
    """(mode, accuracy) rows: ``fused`` is the variant's final classifier, ``visual_only`` is theta_c,
    ``motion_only`` is reported only when the variant trains the motion-only head."""
    final = VARIANT_PLAN[variant][2] or "theta_c"
    rows = [("fused", evaluate(model, images, labels, _HEAD_MODE[final]).accuracy)]
    rows.append(("visual_only", evaluate(model, images, labels, "visual_only").accuracy))
    if final == "theta_o":
        rows.append(("motion_only", rows[0][1]))
    return rows


def _fmt(x: float) -> str:
    return repr(float(x))


def write_metrics(path: Path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("variant,seed,step,iteration,loss\n")
        for variant, seed, step, it, loss in rows:
            fh.write(f"{variant},{seed},{step},{it},{_fmt(loss)}\n")


def write_results(path: Path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("variant,seed,mode,accuracy\n")
        for variant, seed, mode, acc in rows:
            fh.write(f"{variant},{seed},{mode},{_fmt(acc)}\n")


class RunManifest:
    """Config snapshot, seeds, artifact paths and timestamps for one command invocation."""

    def __init__(self, out: Path, command: str, cfg: TrainConfig, seeds):
        self.out = out
        self.command = command
        self.cfg = cfg
        self.seeds = list(seeds)
        self.artifacts: dict[str, str] = {}
        self.started = datetime.now(timezone.utc).isoformat()

    def add(self, kind: str, path: Path) -> None:
        self.artifacts[kind] = str(path)

    def write(self) -> Path:
        snapshot = self.out / "config.snapshot"
        snapshot.write_text(self.cfg.dumps())
        self.add("config_snapshot", snapshot)
        missing = [p for p in self.artifacts.values() if not Path(p).exists()]
        if missing:
            raise CliError(f"internal error: manifest names missing files {missing}")
        doc = {
            "version": __version__,
            "command": self.command,
            "config": self.cfg.dumps(),
            "seeds": self.seeds,
            "artifacts": self.artifacts,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        path = self.out / "run_manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------- subcommands


def cmd_gen_data(args, cfg: TrainConfig) -> int:
    out = _out_dir(args)
    corpus = generate_synthetic_corpus(cfg.corpus(), seed=cfg.data_seed)
    rows = write_dataset(corpus, out)
    log.info("wrote %d manifest rows to %s", len(rows), out / "manifest.tsv")
    return EXIT_OK


def compute_features(corpus, cfg: TrainConfig, out: Path):
    clips = _video_clips(corpus, cfg)
    emb = embed_corpus(list(clips), cfg.n_clusters, cfg.cluster_seed, cfg.flow(), workers=worker_count(len(clips)))
    cache = out / "embeddings.mdemb"
    write_embeddings(cache, emb.embeddings)
    sidecar = out / "embeddings.txt"
    lines = [
        f"otsu_threshold = {_fmt(emb.threshold)}",
        f"codebook_seed = {cfg.cluster_seed}",
        f"n_clusters = {cfg.n_clusters}",
        f"clips = {len(clips)}",
        f"dim = {emb.embeddings.shape[1]}",
    ]
    lines += [f"warning = {w}" for w in emb.warnings]
    sidecar.write_text("\n".join(lines) + "\n")
    return emb, cache, sidecar


def cmd_features(args, cfg: TrainConfig) -> int:
    corpus, cfg = _load_corpus(args, cfg)
    out = _out_dir(args)
    emb, cache, _ = compute_features(corpus, cfg, out)
    for w in emb.warnings:
        print(f"warning: {w}", file=sys.stderr)
    log.info("wrote %d embeddings (dim %d) to %s", *emb.embeddings.shape, cache)
    return EXIT_OK


def compute_pseudo_labels(embeddings: np.ndarray, cfg: TrainConfig, out: Path) -> tuple[np.ndarray, Path]:
    clips = pseudolabel.assign_pseudo_labels(embeddings, cfg.K, cfg.cluster_seed)
    path = out / "pseudo_labels.tsv"
    pseudolabel.write_manifest(path, clips)
    return np.array([c.label for c in clips], dtype=np.int64), path


def cmd_pseudo_label(args, cfg: TrainConfig) -> int:
    cache = _require(args.cache, "--cache")
    out = _out_dir(args)
    labels, path = compute_pseudo_labels(read_embeddings(cache), cfg, out)
    log.info("wrote %d pseudo labels (%d populated clusters) to %s", len(labels), len(set(labels)), path)
    return EXIT_OK


def _training_inputs(args, cfg: TrainConfig, out: Path):
    """Corpus, config and per-video pseudo labels; computes features/labels into ``out`` if none given."""
    corpus, cfg = _load_corpus(args, cfg)
    _video_clips(corpus, cfg)
    if args.labels:
        labels = _labels_for_videos(_require(args.labels, "--labels"), len(corpus.videos), cfg.K)
    else:
        emb, _, _ = compute_features(corpus, cfg, out)
        for w in emb.warnings:
            print(f"warning: {w}", file=sys.stderr)
        labels, _ = compute_pseudo_labels(emb.embeddings, cfg, out)
    return corpus, cfg, labels


def cmd_train(args, cfg: TrainConfig) -> int:
    out = _out_dir(args)
    corpus, cfg, labels = _training_inputs(args, cfg, out)
    data = make_training_data(corpus, labels, cfg.k)
    manifest = RunManifest(out, "train", cfg, [cfg.seed])
    result = train_family(cfg, data, cfg.seed, [cfg.variant])[cfg.variant]
    ckpt = out / "model.mdckpt"
    save_checkpoint(ckpt, result.model.named_parameters())
    metrics = out / "metrics.csv"
    write_metrics(metrics, [(cfg.variant, cfg.seed, s, i, v) for s, i, v in result.trace])
    chart = out / "loss.svg"
    series = {f"step {s}": list(result.step_trace(s)) for s in sorted({s for s, _, _ in result.trace})}
    chart.write_text(line_chart(series, f"training loss ({cfg.variant}, seed {cfg.seed})"))
    for kind, path in (("checkpoint", ckpt), ("metrics", metrics), ("loss_chart", chart)):
        manifest.add(kind, path)
    manifest.write()
    return EXIT_OK


def cmd_eval(args, cfg: TrainConfig) -> int:
    corpus, cfg = _load_corpus(args, cfg)
    ckpt = _require(args.checkpoint, "--checkpoint")
    out = _out_dir(args)
    model = _model_from_checkpoint(ckpt, cfg, corpus.n_classes, cfg.seed)
    rows = [(cfg.variant, cfg.seed, mode, acc) for mode, acc in variant_results(model, cfg.variant, corpus.test_images, corpus.test_labels)]
    results = out / "results.csv"
    write_results(results, rows)
    for _, _, mode, acc in rows:
        print(f"{mode}\t{acc:.4f}")
    return EXIT_OK


def cmd_retrieve(args, cfg: TrainConfig) -> int:
    corpus, cfg = _load_corpus(args, cfg)
    root = Path(args.dataset)
    ckpt = _require(args.checkpoint, "--checkpoint")
    out = _out_dir(args)
    model = _model_from_checkpoint(ckpt, cfg, corpus.n_classes, cfg.seed)
    clips = _video_clips(corpus, cfg)
    if args.images:
        names = list(args.images)
        images = np.stack([read_pgm(_require(p, "query image")) for p in names])
    else:
        rows = [r for r in read_dataset_manifest(root / "manifest.tsv") if r.kind == "image" and r.split == "test"]
        names = [r.path for r in rows]
        images = corpus.test_images
    if len(images) == 0:
        raise CliError("no query images")
    hits = retrieve_nearest_clips(images, model, clips[:, 0])
    report = out / "retrieve.tsv"
    with open(report, "w") as fh:
        for name, hit in zip(names, hits):
            fh.write(f"{name}\t{hit.clip_id}\t{_fmt(hit.distance)}\n")
    log.info("wrote %d retrievals to %s", len(hits), report)
    return EXIT_OK


def _ablate_cell(job):
    """One seed of the ablation grid (all variants, shared step prefixes)."""
    cfg, data, test_images, test_labels, seed, variants = job
    results = train_family(cfg, data, seed, variants)
    out = {}
    for v in variants:
        r = results[v]
        out[v] = (r.trace, r.model.snapshot(), variant_results(r.model, v, test_images, test_labels))
    return out


def run_ablation(cfg: TrainConfig, corpus, labels, variants, seeds, workers: int):
    data = make_training_data(corpus, labels, cfg.k)
    jobs = [(cfg, data, corpus.test_images, corpus.test_labels, s, list(variants)) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_ablate_cell, jobs))
    else:
        cells = [_ablate_cell(j) for j in jobs]
    return dict(zip(seeds, cells))


def cmd_ablate(args, cfg: TrainConfig) -> int:
    out = _out_dir(args)
    variants = tuple(v.strip() for v in args.variants.split(",")) if args.variants else cfg.variants
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else cfg.seeds
    cfg = cfg.replace(variants=variants, seeds=seeds)
    corpus, cfg, labels = _training_inputs(args, cfg, out)
    manifest = RunManifest(out, "ablate", cfg, seeds)
    cells = run_ablation(cfg, corpus, labels, variants, seeds, worker_count(len(seeds)))

    metric_rows, result_rows = [], []
    ckpt_dir = out / "checkpoints"
    for v in variants:
        (ckpt_dir / v).mkdir(parents=True, exist_ok=True)
        for s in seeds:
            trace, snapshot, accs = cells[s][v]
            metric_rows += [(v, s, step, it, loss) for step, it, loss in trace]
            result_rows += [(v, s, mode, acc) for mode, acc in accs]
            path = ckpt_dir / v / f"seed{s}.mdckpt"
            save_checkpoint(path, snapshot)
            manifest.add(f"checkpoint:{v}:seed{s}", path)
    metrics, results, chart = out / "metrics.csv", out / "results.csv", out / "ablation.svg"
    write_metrics(metrics, metric_rows)
    write_results(results, result_rows)
    means = {v: float(np.mean([a for vv, _, m, a in result_rows if vv == v and m == "fused"])) for v in variants}
    chart.write_text(bar_chart(means, f"mean fused accuracy over {len(seeds)} seeds", y_max=1.0))
    for kind, path in (("metrics", metrics), ("results", results), ("chart", chart)):
        manifest.add(kind, path)
    manifest.write()
    for v, m in means.items():
        print(f"{v}\t{m:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="flat 'key = value' config file")
    p.add_argument("--seed", type=int, default=d(None), help="override the run seed")
    p.add_argument("--out", default=d("out"), help="output directory (default: out)")
    p.add_argument("--variant", choices=VARIANTS, default=d(None), help="training variant")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motiondesk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    add("gen-data", cmd_gen_data, "write the synthetic corpus to --out")
    p = add("features", cmd_features, "hand-crafted clip embeddings (MDEMB cache + sidecar)")
    p.add_argument("--dataset", required=True)
    p = add("pseudo-label", cmd_pseudo_label, "K-means pseudo motion labels from an embedding cache")
    p.add_argument("--cache", required=True)
    for name, func, help_ in (("train", cmd_train, "run Algorithm 1 for one variant"), ("ablate", cmd_ablate, "variant x seed grid")):
        p = add(name, func, help_)
        p.add_argument("--dataset", required=True)
        p.add_argument("--labels", help="pseudo-label manifest (computed from the dataset if omitted)")
        if name == "ablate":
            p.add_argument("--variants", help="comma-separated variants (default: config)")
            p.add_argument("--seeds", help="comma-separated seeds (default: config)")
    p = add("eval", cmd_eval, "test accuracy of a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p = add("retrieve", cmd_retrieve, "nearest-motion-clip retrieval report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", nargs="*", help="query PGM images (default: the dataset's test images)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            _require(args.config, "--config")
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.variant is not None:
            overrides["variant"] = args.variant
        cfg = cfg.replace(**overrides) if overrides else cfg
        return args.func(args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface wiring the modules into reproducible experiments.

Subcommands: analyze, split, train, eval, map, gamma-sweep. Every command
writes a run manifest (command, resolved config, seed, input digests, tool
version, timestamps) next to its outputs, sufficient to re-run it. Flags
can come from a key=value config file via --config; explicit command-line
flags win over file values.
"""

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import analyzer, data, network, trainer
from .loss import LossConfig
from .tensor import ShapeError, as_ndarray

# Fixed classification-map palette: 16 class colors, unlabeled pixels are
# black. Index c-1 colors class c.
PALETTE = (
    (255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0),
    (160, 32, 240), (0, 255, 255), (139, 69, 19), (124, 252, 0),
    (100, 60, 200), (220, 20, 60), (144, 238, 144), (0, 0, 139),
    (101, 67, 33), (0, 100, 0), (80, 30, 120), (255, 105, 180),
)

_LOSS_KINDS = {"cel": "CEL", "bcel": "BCEL", "focal": "FL"}
_ALPHA_MODES = {"fixed": "fixed", "freq": "inverseFrequency"}

# Flags that must be present after merging the config file (they cannot be
# argparse-required or a config file could never supply them).
_REQUIRED = {
    "analyze": ("bands", "classes"),
    "split": ("cube", "labels"),
    "train": ("cube", "labels", "split_plan"),
    "eval": ("cube", "labels", "split_plan", "checkpoint"),
    "map": ("cube", "labels", "checkpoint"),
    "gamma-sweep": ("cube", "labels", "split_plan"),
}


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, command, args, input_paths, started_at):
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "config")
    }
    manifest = {
        "command": command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _sha256(p) for p in input_paths if p},
        "tool_version": __version__,
        "started_at": started_at,
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def write_ppm(path, rgb):
    """P6 portable pixmap; rgb is (h, w, 3) uint8."""
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a P6 pixmap")
    w, h = (int(t) for t in parts[1].split())
    if parts[2] != b"255":
        raise ValueError(f"{path}: unsupported maxval {parts[2]!r}")
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=h * w * 3)
    return pixels.reshape(h, w, 3)


def render_label_map(labels):
    """Color a label raster with the fixed palette; 0 stays black."""
    h, w = labels.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    for cls in range(1, int(labels.max()) + 1):
        rgb[labels == cls] = PALETTE[(cls - 1) % len(PALETTE)]
    return rgb


def read_config_file(path):
    """key=value lines; blank lines and #-comments ignored."""
    overrides = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        overrides[key.strip().replace("-", "_")] = value.strip()
    return overrides


def _str2bool(value):
    if value.lower() in ("1", "true", "yes", "on"):
        return True
    if value.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"cannot interpret {value!r} as a boolean")


class _Cli:
    """Parser factory that can re-emit itself with suppressed defaults."""

    def __init__(self):
        self.types = {}

    def build(self, suppress):
        def add(parser, *names, default=None, **kw):
            dest = kw.get("dest") or names[-1].lstrip("-").replace("-", "_")
            action = kw.get("action")
            if action in ("store_true", "store_false") or action is argparse.BooleanOptionalAction:
                self.types[dest] = _str2bool
            else:
                self.types[dest] = kw.get("type", str)
            if suppress:
                kw["default"] = argparse.SUPPRESS
            else:
                kw["default"] = default
            parser.add_argument(*names, **kw)

        top = argparse.ArgumentParser(prog="litedepthwise", description=__doc__)
        top.add_argument("--version", action="version", version=__version__)
        sub = top.add_subparsers(dest="command", required=True)

        def common(p):
            add(p, "--config", help="key=value config file; flags override it")
            add(p, "--out-dir", default=".", help="directory for outputs")
            add(p, "--seed", type=int, default=0)
            add(p, "--threads", type=int, default=1)
            add(p, "--deterministic", action=argparse.BooleanOptionalAction,
                default=True)

        def data_flags(p):
            add(p, "--cube", help="HSC1 cube file")
            add(p, "--labels", help="HSL1 label file")
            add(p, "--normalize", choices=["standardize", "minmax", "none"],
                default="standardize")

        def loss_flags(p):
            add(p, "--loss", choices=sorted(_LOSS_KINDS), default="focal")
            add(p, "--gamma", type=float, default=2.0)
            add(p, "--alpha-mode", choices=sorted(_ALPHA_MODES), default="freq")
            add(p, "--alpha", type=float, default=0.25,
                help="fixed per-class weight used when --alpha-mode fixed")

        def train_flags(p):
            add(p, "--split-plan", help="split CSV")
            add(p, "--patch", type=int, default=9)
            add(p, "--epochs", type=int, default=100)
            add(p, "--batch-size", type=int, default=32)
            add(p, "--lr", type=float, default=1e-3)
            add(p, "--optimizer", choices=["adam", "sgd-momentum"], default="adam")
            add(p, "--early-stop-patience", type=int, default=None)
            loss_flags(p)

        p = sub.add_parser("analyze", help="parameter/FLOP cost report")
        common(p)
        add(p, "--bands", type=int)
        add(p, "--classes", type=int)
        add(p, "--patch", type=int, default=9)
        add(p, "--input-hw", type=int, default=25,
            help="spatial extent of the cost-analysis input")
        p.set_defaults(func=cmd_analyze)

        p = sub.add_parser("split", help="deterministic stratified split")
        common(p)
        data_flags(p)
        add(p, "--ratio", type=float, default=0.05)
        add(p, "--val-ratio", type=float, default=0.0)
        add(p, "--min-per-class", type=int, default=5)
        p.set_defaults(func=cmd_split)

        p = sub.add_parser("train", help="train a classifier")
        common(p)
        data_flags(p)
        train_flags(p)
        p.set_defaults(func=cmd_train)

        p = sub.add_parser("eval", help="evaluate a checkpoint")
        common(p)
        data_flags(p)
        add(p, "--split-plan")
        add(p, "--checkpoint")
        add(p, "--patch", type=int, default=9)
        add(p, "--split", choices=["train", "val", "test"], default="test")
        add(p, "--batch-size", type=int, default=32)
        p.set_defaults(func=cmd_eval)

        p = sub.add_parser("map", help="render a classification map")
        common(p)
        data_flags(p)
        add(p, "--checkpoint")
        add(p, "--patch", type=int, default=9)
        add(p, "--batch-size", type=int, default=32)
        add(p, "--all-pixels", action="store_true", default=False,
            help="classify unlabeled pixels too")
        p.set_defaults(func=cmd_map)

        p = sub.add_parser("gamma-sweep", help="train+eval across gamma values")
        common(p)
        data_flags(p)
        train_flags(p)
        add(p, "--gammas", default="0,1,2,5", help="comma-separated gamma grid")
        p.set_defaults(func=cmd_gamma_sweep)

        return top


def parse_args(argv):
    cli = _Cli()
    args = cli.build(suppress=False).parse_args(argv)
    if getattr(args, "config", None):
        explicit = set(vars(cli.build(suppress=True).parse_args(argv)))
        for key, raw in read_config_file(args.config).items():
            if key in explicit or not hasattr(args, key):
                continue
            setattr(args, key, cli.types.get(key, str)(raw))
    missing = [
        f"--{name.replace('_', '-')}"
        for name in _REQUIRED.get(args.command, ())
        if getattr(args, name, None) is None
    ]
    if missing:
        sys.stderr.write(
            f"error: {args.command} requires {', '.join(missing)} "
            "(from flags or the --config file)\n"
        )
        raise SystemExit(2)
    return args


def _require_outputs(paths):
    for path in paths:
        p = Path(path)
        if not p.is_file() or p.stat().st_size == 0:
            raise RuntimeError(f"output {path} was not written correctly")


def _load_scene(args):
    scene = data.load_scene(args.cube, args.labels)
    if args.normalize != "none":
        mode = "per-band-standardize" if args.normalize == "standardize" else "minmax"
        scene = data.normalize(scene, mode)
    return scene


def _loss_config(args):
    kind = _LOSS_KINDS[args.loss]
    mode = _ALPHA_MODES[args.alpha_mode]
    alpha = None if mode == "inverseFrequency" else args.alpha
    return LossConfig(kind=kind, alpha=alpha, alpha_mode=mode, gamma=args.gamma)


def _train_config(args):
    return trainer.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        loss=_loss_config(args),
        seed=args.seed,
        early_stop_patience=args.early_stop_patience,
        deterministic=args.deterministic,
    )


def cmd_analyze(args, started_at):
    # the graph itself is patch-agnostic; --input-hw sets the window the
    # FLOP counts are evaluated at (parameters do not depend on it)
    cfg = network.NetworkConfig(
        patch=args.patch,
        bands=args.bands,
        num_classes=args.classes,
    )
    graph = network.build_network(cfg)
    report = analyzer.analyze_network(graph, (1, 1, args.input_hw, args.input_hw, args.bands))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = analyzer.render_text(report)
    (out / "cost.txt").write_text(text)
    (out / "cost.csv").write_text(analyzer.render_csv(report))
    sys.stdout.write(text)
    write_manifest(out, "analyze", args, [], started_at)
    _require_outputs([out / "cost.txt", out / "cost.csv", out / "manifest.json"])
    return 0


def cmd_split(args, started_at):
    scene = data.load_scene(args.cube, args.labels)
    plan = data.stratified_split(scene, args.ratio, args.val_ratio,
                                 args.min_per_class, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split_path = out / "split.csv"
    data.save_split(split_path, plan, scene.labels)
    counts = plan.per_class_counts(scene.labels, "train")
    sys.stdout.write(
        f"train={len(plan.train)} val={len(plan.val)} test={len(plan.test)} "
        f"(per-class train: {counts.tolist()})\n"
    )
    write_manifest(out, "split", args, [args.cube, args.labels], started_at)
    _require_outputs([split_path, out / "manifest.json"])
    return 0


def _build_graph_for_scene(scene, patch, num_classes=None):
    cfg = network.NetworkConfig(
        patch=patch, bands=scene.bands,
        num_classes=num_classes or scene.num_classes,
    )
    return network.build_network(cfg)


def cmd_train(args, started_at):
    scene = _load_scene(args)
    plan = data.load_split(args.split_plan)
    graph = _build_graph_for_scene(scene, args.patch)
    store = network.init_parameters(graph, seed=args.seed)
    cfg = _train_config(args)
    result = trainer.train(graph, store, scene, plan, cfg, args.patch)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.ldwn"
    network.save_checkpoint(ckpt_path, result.store, graph)
    (out / "history.csv").write_text(trainer.history_csv(result.history))
    if result.diverged:
        sys.stderr.write("training diverged; saved the last finite checkpoint\n")
    write_manifest(out, "train", args,
                   [args.cube, args.labels, args.split_plan], started_at)
    _require_outputs([ckpt_path, out / "history.csv", out / "manifest.json"])
    return 0


def cmd_eval(args, started_at):
    if not Path(args.checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {args.checkpoint} does not exist")
    scene = _load_scene(args)
    plan = data.load_split(args.split_plan)
    graph = _build_graph_for_scene(scene, args.patch)
    store = network.load_checkpoint(args.checkpoint, graph)
    report = trainer.evaluate(graph, store, scene, plan, args.split, args.patch,
                              batch_size=args.batch_size, threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = trainer.render_eval_text(report)
    (out / "eval.csv").write_text(text)
    (out / "eval.txt").write_text(text)
    sys.stdout.write(text)
    write_manifest(out, "eval", args,
                   [args.cube, args.labels, args.split_plan, args.checkpoint],
                   started_at)
    _require_outputs([out / "eval.csv", out / "eval.txt", out / "manifest.json"])
    return 0


def cmd_map(args, started_at):
    if not Path(args.checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {args.checkpoint} does not exist")
    scene = _load_scene(args)
    graph = _build_graph_for_scene(scene, args.patch)
    try:
        store = network.load_checkpoint(args.checkpoint, graph)
    except ValueError as err:
        raise ValueError(
            f"checkpoint does not fit this scene (band-count mismatch?): {err}"
        ) from err
    if args.all_pixels:
        coords = [(r, c) for r in range(scene.h) for c in range(scene.w)]
    else:
        rows, cols = np.nonzero(scene.labels > 0)
        coords = list(zip(rows.tolist(), cols.tolist()))
    predicted = np.zeros_like(scene.labels)
    margin = args.patch // 2
    padded = data._mirror_pad_cube(scene.cube, margin)
    for start in range(0, len(coords), args.batch_size):
        chunk = coords[start : start + args.batch_size]
        batch = data.extract_batch(scene, chunk, args.patch, padded)
        logits = network.forward(graph, store, batch.tensors, mode="infer")
        preds = np.argmax(as_ndarray(logits), axis=1) + 1
        for (r, c), p in zip(chunk, preds):
            predicted[r, c] = p
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    map_path = out / "map.ppm"
    write_ppm(map_path, render_label_map(predicted))
    write_manifest(out, "map", args,
                   [args.cube, args.labels, args.checkpoint], started_at)
    read_ppm(map_path)  # validates what we just wrote
    _require_outputs([map_path, out / "manifest.json"])
    return 0


def cmd_gamma_sweep(args, started_at):
    scene = _load_scene(args)
    plan = data.load_split(args.split_plan)
    graph = _build_graph_for_scene(scene, args.patch)
    gammas = [float(g) for g in str(args.gammas).split(",") if g.strip() != ""]
    cfg = _train_config(args)
    rows = trainer.gamma_sweep(gammas, graph, scene, plan, cfg, args.patch,
                               init_seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "gamma_sweep.csv"
    csv_path.write_text(trainer.gamma_sweep_csv(rows))
    sys.stdout.write(trainer.gamma_sweep_csv(rows))
    write_manifest(out, "gamma-sweep", args,
                   [args.cube, args.labels, args.split_plan], started_at)
    _require_outputs([csv_path, out / "manifest.json"])
    return 0


def main(argv=None):
    try:
        args = parse_args(argv if argv is not None else sys.argv[1:])
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else 2
    started_at = datetime.now(timezone.utc).isoformat()
    try:
        return args.func(args, started_at)
    except (ShapeError, ValueError, FileNotFoundError, RuntimeError, OSError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

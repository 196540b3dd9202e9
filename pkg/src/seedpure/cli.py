"""seedpure command line: weights -> features -> models -> reports.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from seedpure import imaging, models
from seedpure.errors import ConfigError, SeedPureError

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _geometry(text: str):
    parts = text.replace("x", ",").split(",")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad geometry {text!r}; use C,H,W or HxW") from None
    if len(nums) == 2:
        nums = [3] + nums
    if len(nums) != 3 or nums[0] != 3 or min(nums) < 1:
        raise argparse.ArgumentTypeError(f"bad geometry {text!r}; use 3,H,W or HxW")
    return tuple(nums)


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


# -- commands ----------------------------------------------------------------

def cmd_gen_weights(args) -> int:
    from seedpure.weights import random_init, save_weights
    graph = models.build_graph(args.model, args.geometry)
    store = random_init(graph, args.seed)
    save_weights(store, args.out)
    print(f"wrote {len(store)} tensors for {args.model} to {args.out}")
    return EXIT_OK


def _load_synth_classes(path):
    from seedpure.experiment import tomllib
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML parse error: {exc}") from None
    classes = doc.get("classes")
    if not isinstance(classes, list) or len(classes) < 2:
        raise ConfigError("classes", "need an array of at least two [[classes]] tables")
    for i, c in enumerate(classes):
        if "name" not in c or "base_color" not in c:
            raise ConfigError(f"classes[{i}]", "each class needs name and base_color")
        if len(c["base_color"]) != 3:
            raise ConfigError(f"classes[{i}].base_color", "expected three integers")
    return classes


def cmd_gen_synth(args) -> int:
    classes = imaging.DEFAULT_SYNTH_CLASSES
    if args.spec:
        classes = _load_synth_classes(args.spec)
    dirs = imaging.write_synthetic_dataset(args.out_dir, args.per_class, args.seed, classes,
                                           args.height, args.width)
    for d in dirs:
        print(f"{d}: {args.per_class} images")
    return EXIT_OK


def cmd_extract(args) -> int:
    from seedpure.features import extract_features, save_features
    from seedpure.weights import load_weights
    valid = models.taps_for(args.model)
    if args.tap not in valid:
        raise UsageError(f"tap {args.tap!r} is not valid for {args.model}; "
                         f"valid taps: {', '.join(valid)}")
    dirs = [Path(d) for d in args.input_dir]
    positive = [d for d in dirs if str(d) == args.positive or d.name == args.positive]
    if len(positive) != 1:
        raise UsageError(f"--positive {args.positive!r} must name exactly one --input-dir")
    graph = models.build_graph(args.model, args.geometry)
    images, labels = [], []
    for d in dirs:
        files = imaging.list_images(d)
        if not files:
            raise SeedPureError(f"no images found in {d}")
        for f in files:
            images.append(imaging.prepare(f, graph.input_geometry))
            labels.append(1 if d == positive[0] else 0)
    weights = load_weights(args.weights)
    fm = extract_features(graph, weights, images, args.tap, args.batch_size, labels,
                          args.feature_mode)
    save_features(fm, args.out)
    print(f"wrote {fm.n_samples} x {fm.n_features} features ({sum(labels)} positive) "
          f"to {args.out}")
    return EXIT_OK


_HYPER_FLAGS = {
    "dt": ("max_features",),
    "rf": ("n_trees", "max_features", "bootstrap"),
    "et": ("n_trees", "max_features"),
    "knn": ("k",),
    "lr": ("lambda", "lr", "max_iters", "tol"),
    "svm": ("C", "max_epochs", "tol"),
}


def _hyperparameters(args) -> dict:
    out = {}
    for name in _HYPER_FLAGS[args.algo]:
        value = getattr(args, name.replace("lambda", "lam"), None)
        if value is None:
            continue
        if name == "max_features" and value not in ("all", "sqrt"):
            try:
                value = int(value)
            except ValueError:
                raise UsageError("--max-features takes all, sqrt or an integer") from None
        out[name] = value
    return out


def cmd_train(args) -> int:
    from seedpure.classifiers import save_model, train_classifier
    from seedpure.features import load_features
    hp = _hyperparameters(args)
    fm = load_features(args.features)
    model = train_classifier(args.algo, fm.with_role("train"), hp, args.seed, args.standardize)
    save_model(model, args.model_out)
    print(f"trained {args.algo} on {fm.n_samples} x {fm.n_features}; wrote {args.model_out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from seedpure.classifiers import load_model
    from seedpure.experiment import ConfusionCounts, accuracy
    from seedpure.features import load_features
    model = load_model(args.model_in)
    fm = load_features(args.features)
    pred = model.predict(fm)
    c = ConfusionCounts.from_predictions(fm.labels, pred)
    print(f"accuracy={accuracy(c):.6f} tp={c.tp} tn={c.tn} fp={c.fp} fn={c.fn}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    from seedpure.experiment import load_config, render_report, run_grid, write_reports
    cfg = load_config(args.config)
    report = run_grid(cfg)
    write_reports(report, cfg)
    if cfg.markdown_path is None:
        print(render_report(report, "markdown"))
    failed = [r for r in report.records if not r.ok]
    for r in failed:
        print(f"cell {r.variety}/{r.model}/{r.tap}/{r.algorithm} failed: {r.error}",
              file=sys.stderr)
    print(f"{len(report.records) - len(failed)} of {len(report.records)} cells succeeded")
    return EXIT_FAILURE if len(failed) == len(report.records) else EXIT_OK


def cmd_inspect(args) -> int:
    if args.path is None:
        if args.model is None:
            raise UsageError("inspect needs a file path or --model")
        graph = models.build_graph(args.model, args.geometry)
        print(f"{graph.model_kind} input {graph.input_geometry}")
        for tap in graph.taps:
            shape = graph.tap_shape(tap)
            print(f"  {tap}: {shape} -> {int(np.prod(shape))} features")
        print(f"  parameters: {len(graph.parameters())} tensors, "
              f"{sum(int(np.prod(p.shape)) for p in graph.parameters())} values")
        return EXIT_OK
    path = Path(args.path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"SPWT":
        from seedpure.weights import load_weights
        store = load_weights(path)
        print(f"SPWT weights: {len(store)} tensors, "
              f"{sum(a.size for a in store.values())} values")
        for name, arr in store.items():
            print(f"  {name} {tuple(arr.shape)}")
    elif head == b"SPFT":
        from seedpure.features import load_features
        fm = load_features(path)
        print(f"SPFT features: {fm.n_samples} samples x {fm.n_features} features, "
              f"{int(fm.labels.sum())} positive")
    elif head[:2] == b"P6":
        img = imaging.load_image(path)
        print(f"PPM image: {img.height} x {img.width}")
    elif head[:1] == b"{":
        from seedpure.classifiers import load_model
        model = load_model(path)
        print(f"model: {model.algorithm} on {model.n_features} features, seed {model.seed}, "
              f"standardized={model.standardizer is not None}")
        print(f"  hyperparameters: {model.estimator.hyperparameters()}")
    else:
        raise SeedPureError(f"unrecognised file type: {path}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seedpure", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-weights", help="write seeded random weights (SPWT)")
    g.add_argument("--model", required=True, choices=models.MODEL_KINDS)
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--geometry", type=_geometry, default=models.DEFAULT_GEOMETRY)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_weights)

    s = sub.add_parser("gen-synth", help="write a synthetic two-variety PPM dataset")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--per-class", type=_positive_int, required=True)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--spec", help="TOML file with [[classes]] name/base_color/... tables")
    s.add_argument("--height", type=_positive_int, default=75)
    s.add_argument("--width", type=_positive_int, default=170)
    s.set_defaults(func=cmd_gen_synth)

    e = sub.add_parser("extract", help="tap CNN activations into an SPFT feature file")
    e.add_argument("--model", required=True, choices=models.MODEL_KINDS)
    e.add_argument("--weights", required=True)
    e.add_argument("--tap", required=True)
    e.add_argument("--input-dir", action="append", required=True,
                   help="image directory (repeatable)")
    e.add_argument("--positive", required=True,
                   help="which --input-dir holds the positive variety (path or name)")
    e.add_argument("--out", required=True)
    e.add_argument("--geometry", type=_geometry, default=models.DEFAULT_GEOMETRY)
    e.add_argument("--batch-size", type=_positive_int, default=8)
    e.add_argument("--feature-mode", choices=("flatten", "avgpool"), default="flatten")
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("train", help="fit a classifier on an SPFT file")
    t.add_argument("--algo", required=True, choices=tuple(_HYPER_FLAGS))
    t.add_argument("--features", required=True)
    t.add_argument("--model-out", required=True)
    t.add_argument("--seed", type=_seed, default=0)
    std = t.add_mutually_exclusive_group()
    std.add_argument("--standardize", dest="standardize", action="store_true", default=None)
    std.add_argument("--no-standardize", dest="standardize", action="store_false")
    t.add_argument("--n-trees", type=_positive_int)
    t.add_argument("--max-features")
    t.add_argument("--no-bootstrap", dest="bootstrap", action="store_false", default=None)
    t.add_argument("--k", type=_positive_int)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--lr", type=float)
    t.add_argument("--max-iters", type=_positive_int)
    t.add_argument("--tol", type=float)
    t.add_argument("--C", dest="C", type=float)
    t.add_argument("--max-epochs", type=_positive_int)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="score a trained model on an SPFT file")
    v.add_argument("--model-in", required=True)
    v.add_argument("--features", required=True)
    v.set_defaults(func=cmd_eval)

    x = sub.add_parser("experiment", help="run the (variety, model, tap, algorithm) grid")
    x.add_argument("--config", required=True)
    x.set_defaults(func=cmd_experiment)

    i = sub.add_parser("inspect", help="describe a weights/features/model/image file or a graph")
    i.add_argument("path", nargs="?")
    i.add_argument("--model", choices=models.MODEL_KINDS)
    i.add_argument("--geometry", type=_geometry, default=models.DEFAULT_GEOMETRY)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"seedpure {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SeedPureError, OSError, ValueError, KeyError) as exc:
        print(f"seedpure {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

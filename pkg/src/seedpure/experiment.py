"""One-vs-rest purity tasks, stratified holdout, the evaluation grid and reports."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
import zlib
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from seedpure import imaging
from seedpure import models as zoo
from seedpure.classifiers import ALGORITHMS, default_standardize, save_model, train_classifier
from seedpure.errors import ConfigError
from seedpure.features import FLATTEN, AVGPOOL, extract_features_multi, save_features
from seedpure.weights import load_weights, random_init


# -- task construction -------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    path: Path
    label: int
    variety: str


@dataclass(frozen=True)
class TaskSpec:
    positive_variety: str
    variety_dirs: Dict[str, Path]
    split_fraction: float = 0.67
    master_seed: int = 0
    negative_balance: str = "round_robin"

    def __post_init__(self):
        if self.positive_variety not in self.variety_dirs:
            raise KeyError(f"positive variety {self.positive_variety!r} has no directory")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie strictly between 0 and 1")


@dataclass
class BinaryTask:
    positive: str
    samples: List[Sample]
    negatives_per_source: Dict[str, int]

    @property
    def n_positive(self) -> int:
        return sum(s.label for s in self.samples)

    @property
    def n_negative(self) -> int:
        return len(self.samples) - self.n_positive

    @property
    def imbalance(self) -> int:
        return self.n_positive - self.n_negative


def _stream(master_seed: int, purpose: int, name: str = "") -> np.random.Generator:
    key = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, purpose, zlib.crc32(name.encode("utf-8"))]
    return np.random.default_rng(np.random.SeedSequence(key))


def build_binary_task(spec: TaskSpec) -> BinaryTask:
    """All target images as positives plus an equal-sized negative draw.

    Negatives are taken round-robin over the other varieties (sorted by
    name), each source shuffled first, until the counts match or every
    source is exhausted.
    """
    files = {}
    for name, d in spec.variety_dirs.items():
        listed = imaging.list_images(d)
        if not listed:
            raise FileNotFoundError(f"variety {name!r}: no images in {d}")
        files[name] = listed
    rng = _stream(spec.master_seed, 0, spec.positive_variety)
    positives = [Sample(p, 1, spec.positive_variety) for p in files[spec.positive_variety]]
    sources = []
    for name in sorted(files):
        if name == spec.positive_variety:
            continue
        order = rng.permutation(len(files[name]))
        sources.append((name, [files[name][i] for i in order]))
    negatives: List[Sample] = []
    taken = {name: 0 for name, _ in sources}
    target = len(positives)
    while len(negatives) < target:
        progressed = False
        for name, pool in sources:
            if len(negatives) == target:
                break
            if taken[name] < len(pool):
                negatives.append(Sample(pool[taken[name]], 0, name))
                taken[name] += 1
                progressed = True
        if not progressed:
            break
    samples = positives + negatives
    order = rng.permutation(len(samples))
    return BinaryTask(spec.positive_variety, [samples[i] for i in order], taken)


def split_train_test(labels: Sequence[int], fraction: float = 0.67,
                     seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Stratified holdout: floor(fraction * n_label) of each label goes to train.

    Takes a label sequence (or samples carrying ``.label``) and returns
    sorted index arrays (train, test).
    """
    labels = np.asarray([getattr(s, "label", s) for s in labels], dtype=np.int64)
    if labels.shape[0] < 2 or len(np.unique(labels)) < 2:
        raise ValueError("split needs at least two samples covering both labels")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    exact = Fraction(repr(float(fraction)))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 1]))
    train, test = [], []
    for lab in (0, 1):
        idx = np.flatnonzero(labels == lab)
        idx = idx[rng.permutation(idx.shape[0])]
        k = math.floor(exact * idx.shape[0])
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


# -- scoring -----------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionCounts":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        return cls(int(np.sum(t & p)), int(np.sum(~t & ~p)), int(np.sum(~t & p)),
                   int(np.sum(t & ~p)))


def accuracy(c: ConfusionCounts) -> float:
    if c.total <= 0:
        raise ValueError("accuracy of an empty evaluation")
    return (c.tp + c.tn) / c.total


# -- configuration -----------------------------------------------------------

_TOP_KEYS = {"seed", "split_fraction", "model", "models", "taps", "algorithms", "standardize",
             "positives", "varieties", "weights", "hyperparameters", "output", "geometry",
             "batch_size", "feature_mode", "normalize"}


@dataclass
class ExperimentConfig:
    varieties: Dict[str, Path]
    models: List[str] = field(default_factory=lambda: [zoo.VGG16])
    taps: List[str] = field(default_factory=list)
    algorithms: List[str] = field(default_factory=lambda: list(ALGORITHMS))
    positives: List[str] = field(default_factory=list)
    split_fraction: float = 0.67
    seed: int = 0
    standardize: object = "auto"
    feature_mode: str = FLATTEN
    batch_size: int = 8
    geometry: Tuple[int, int, int] = zoo.DEFAULT_GEOMETRY
    weights: Dict[str, dict] = field(default_factory=dict)
    hyperparameters: Dict[str, dict] = field(default_factory=dict)
    normalize: Optional[dict] = None
    csv_path: Optional[Path] = None
    markdown_path: Optional[Path] = None
    features_dir: Optional[Path] = None
    models_dir: Optional[Path] = None
    base_dir: Path = Path(".")

    def taps_for(self, model: str) -> List[str]:
        valid = zoo.taps_for(model)
        if not self.taps:
            return list(valid)
        return [t for t in self.taps if t in valid]

    def positive_varieties(self) -> List[str]:
        return list(self.positives) if self.positives else sorted(self.varieties)

    def canonical(self) -> dict:
        """Content of the config; paths are taken relative to its directory."""
        def enc(v):
            return os.path.relpath(v, self.base_dir) if isinstance(v, Path) else v
        return {
            "varieties": {k: enc(v) for k, v in sorted(self.varieties.items())},
            "models": self.models, "taps": self.taps, "algorithms": self.algorithms,
            "positives": self.positives, "split_fraction": self.split_fraction,
            "seed": self.seed, "standardize": self.standardize,
            "feature_mode": self.feature_mode, "geometry": list(self.geometry),
            "weights": {m: {k: enc(v) for k, v in sorted(w.items())}
                        for m, w in sorted(self.weights.items())},
            "hyperparameters": self.hyperparameters, "normalize": self.normalize,
        }

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _need(cond, key, message):
    if not cond:
        raise ConfigError(key, message)


def parse_config(doc: dict, base_dir=".") -> ExperimentConfig:
    """Validate a parsed TOML document; relative paths resolve against ``base_dir``."""
    base = Path(base_dir)
    unknown = sorted(set(doc) - _TOP_KEYS)
    _need(not unknown, unknown[0] if unknown else "", "unknown key")

    def path(v, key):
        _need(isinstance(v, str) and v, key, "expected a path string")
        p = Path(v)
        return p if p.is_absolute() else base / p

    _need("varieties" in doc, "varieties", "required table is missing")
    vdoc = doc["varieties"]
    _need(isinstance(vdoc, dict) and len(vdoc) >= 2, "varieties",
          "need a table with at least two name = directory entries")
    varieties = {name: path(d, f"varieties.{name}") for name, d in vdoc.items()}

    cfg = ExperimentConfig(varieties=varieties, base_dir=base)

    if "model" in doc and "models" in doc:
        raise ConfigError("models", "give either model or models, not both")
    mlist = doc.get("models", [doc["model"]] if "model" in doc else [zoo.VGG16])
    _need(isinstance(mlist, list) and mlist, "models", "expected a non-empty list")
    for m in mlist:
        _need(m in zoo.MODEL_KINDS, "model", f"unknown model {m!r}")
    cfg.models = list(mlist)

    taps = doc.get("taps", [])
    _need(isinstance(taps, list), "taps", "expected a list of tap names")
    for t in taps:
        _need(t in zoo.ALL_TAPS, "taps", f"unknown tap {t!r}")
    cfg.taps = list(taps)
    for m in cfg.models:
        _need(cfg.taps_for(m), "taps", f"no listed tap belongs to model {m}")

    algos = doc.get("algorithms", list(ALGORITHMS))
    _need(isinstance(algos, list) and algos, "algorithms", "expected a non-empty list")
    for a in algos:
        _need(a in ALGORITHMS, "algorithms", f"unknown algorithm {a!r}")
    cfg.algorithms = list(algos)

    positives = doc.get("positives", [])
    _need(isinstance(positives, list), "positives", "expected a list of variety names")
    for p in positives:
        _need(p in varieties, "positives", f"{p!r} is not a configured variety")
    cfg.positives = list(positives)

    frac = doc.get("split_fraction", 0.67)
    _need(isinstance(frac, (int, float)) and 0 < frac < 1, "split_fraction",
          "must be a number strictly between 0 and 1")
    cfg.split_fraction = float(frac)

    seed = doc.get("seed", 0)
    _need(isinstance(seed, int) and 0 <= seed < 2 ** 64, "seed", "expected an unsigned integer")
    cfg.seed = seed

    std = doc.get("standardize", "auto")
    _need(std in ("auto", True, False), "standardize", "expected true, false or \"auto\"")
    cfg.standardize = std

    mode = doc.get("feature_mode", FLATTEN)
    _need(mode in (FLATTEN, AVGPOOL), "feature_mode", f"expected {FLATTEN!r} or {AVGPOOL!r}")
    cfg.feature_mode = mode

    bs = doc.get("batch_size", 8)
    _need(isinstance(bs, int) and bs >= 1, "batch_size", "expected a positive integer")
    cfg.batch_size = bs

    geo = doc.get("geometry", {})
    _need(isinstance(geo, dict), "geometry", "expected a table with height and width")
    h, w = geo.get("height", 75), geo.get("width", 170)
    _need(isinstance(h, int) and h >= 1, "geometry.height", "expected a positive integer")
    _need(isinstance(w, int) and w >= 1, "geometry.width", "expected a positive integer")
    cfg.geometry = (3, h, w)

    wdoc = doc.get("weights", {})
    if isinstance(wdoc, str):
        _need(len(cfg.models) == 1, "weights", "a bare path needs exactly one model")
        wdoc = {cfg.models[0]: {"path": wdoc}}
    _need(isinstance(wdoc, dict), "weights", "expected a table keyed by model")
    for m, spec in wdoc.items():
        key = f"weights.{m}"
        _need(m in zoo.MODEL_KINDS, key, "unknown model")
        if isinstance(spec, str):
            spec = {"path": spec}
        _need(isinstance(spec, dict) and (("path" in spec) ^ ("seed" in spec)), key,
              "give exactly one of path or seed")
        if "path" in spec:
            cfg.weights[m] = {"path": path(spec["path"], key + ".path")}
        else:
            _need(isinstance(spec["seed"], int) and spec["seed"] >= 0, key + ".seed",
                  "expected an unsigned integer")
            cfg.weights[m] = {"seed": spec["seed"]}

    hdoc = doc.get("hyperparameters", {})
    _need(isinstance(hdoc, dict), "hyperparameters", "expected a table keyed by algorithm")
    for a, params in hdoc.items():
        _need(a in ALGORITHMS, f"hyperparameters.{a}", "unknown algorithm")
        _need(isinstance(params, dict), f"hyperparameters.{a}", "expected a table")
    cfg.hyperparameters = {a: dict(p) for a, p in hdoc.items()}

    norm = doc.get("normalize")
    if norm is not None:
        _need(isinstance(norm, dict) and set(norm) <= {"mean", "std"}, "normalize",
              "expected a table with mean and/or std")
    cfg.normalize = norm

    out = doc.get("output", {})
    _need(isinstance(out, dict), "output", "expected a table")
    for key in out:
        _need(key in ("csv", "markdown", "features_dir", "models_dir"), f"output.{key}",
              "unknown key")
    cfg.csv_path = path(out["csv"], "output.csv") if "csv" in out else None
    cfg.markdown_path = path(out["markdown"], "output.markdown") if "markdown" in out else None
    cfg.features_dir = path(out["features_dir"], "output.features_dir") \
        if "features_dir" in out else None
    cfg.models_dir = path(out["models_dir"], "output.models_dir") if "models_dir" in out else None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML parse error: {exc}") from None
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_config(doc, path.parent)


# -- the grid ----------------------------------------------------------------

MODEL_ORDER = {m: i for i, m in enumerate(zoo.MODEL_KINDS)}
TAP_ORDER = {t: i for i, t in enumerate(zoo.ALL_TAPS)}
ALGO_ORDER = {a: i for i, a in enumerate(ALGORITHMS)}


@dataclass
class Record:
    variety: str
    model: str
    tap: str
    algorithm: str
    confusion: Optional[ConfusionCounts]
    n_train: int = 0
    n_test: int = 0
    n_positive: int = 0
    n_negative: int = 0
    standardized: bool = False
    seed: int = 0
    config_digest: str = ""
    train_time: float = 0.0
    eval_time: float = 0.0
    error: str = ""

    @property
    def accuracy(self) -> Optional[float]:
        return None if self.confusion is None else accuracy(self.confusion)

    @property
    def ok(self) -> bool:
        return self.confusion is not None and not self.error

    def sort_key(self):
        return (self.variety, MODEL_ORDER.get(self.model, 99), TAP_ORDER.get(self.tap, 99),
                ALGO_ORDER.get(self.algorithm, 99))


@dataclass
class ExperimentReport:
    records: List[Record]
    config_digest: str = ""
    extractions: Counter = field(default_factory=Counter)

    def sorted(self) -> "ExperimentReport":
        return ExperimentReport(sorted(self.records, key=Record.sort_key), self.config_digest,
                                self.extractions)


def _resolve_weights(cfg: ExperimentConfig, model: str, graph):
    spec = cfg.weights.get(model, {"seed": cfg.seed})
    if "path" in spec:
        return load_weights(spec["path"])
    return random_init(graph, spec["seed"])


def _standardize_for(cfg: ExperimentConfig, algo: str) -> bool:
    if cfg.standardize == "auto":
        return default_standardize(algo)
    return bool(cfg.standardize)


def run_grid(cfg: ExperimentConfig) -> ExperimentReport:
    """Evaluate every (variety, model, tap, algorithm) cell.

    Features are extracted once per (variety, model) pass, covering all of
    that model's taps, and reused by every algorithm. A failure inside a
    cell is recorded and the grid carries on.
    """
    digest = cfg.digest()
    report = ExperimentReport([], digest)
    weights_cache = {}
    graphs = {}

    def fail(variety, model, tap, algo, msg, **kw):
        report.records.append(Record(variety, model, tap, algo, None, seed=cfg.seed,
                                     config_digest=digest, error=msg, **kw))

    for d in (cfg.features_dir, cfg.models_dir):
        if d is not None:
            d.mkdir(parents=True, exist_ok=True)

    for variety in cfg.positive_varieties():
        cells = [(m, t, a) for m in cfg.models for t in cfg.taps_for(m) for a in cfg.algorithms]
        try:
            task = build_binary_task(TaskSpec(variety, cfg.varieties, cfg.split_fraction,
                                              cfg.seed))
            labels = np.array([s.label for s in task.samples], dtype=np.uint8)
            train_idx, test_idx = split_train_test(labels, cfg.split_fraction,
                                                   _task_seed(cfg.seed, variety))
            mean = std = None
            if cfg.normalize:
                mean, std = cfg.normalize.get("mean"), cfg.normalize.get("std")
            tensors = [imaging.prepare(s.path, cfg.geometry, mean, std) for s in task.samples]
        except Exception as exc:  # recorded per cell
            for m, t, a in cells:
                fail(variety, m, t, a, f"task: {exc}")
            continue
        counts = dict(n_train=len(train_idx), n_test=len(test_idx),
                      n_positive=task.n_positive, n_negative=task.n_negative)

        for model in cfg.models:
            taps = cfg.taps_for(model)
            try:
                if model not in graphs:
                    graphs[model] = zoo.build_graph(model, cfg.geometry)
                graph = graphs[model]
                if model not in weights_cache:
                    weights_cache[model] = _resolve_weights(cfg, model, graph)
                feats = extract_features_multi(graph, weights_cache[model], tensors, taps,
                                               cfg.batch_size, labels, cfg.feature_mode)
                for tap in taps:
                    report.extractions[(variety, model, tap)] += 1
            except Exception as exc:
                for t in taps:
                    for a in cfg.algorithms:
                        fail(variety, model, t, a, f"extract: {exc}", **counts)
                continue

            for tap in taps:
                train = feats[tap].subset(train_idx, role="train")
                test = feats[tap].subset(test_idx, role="test")
                stem = f"{variety}__{model}__{tap}"
                if cfg.features_dir is not None:
                    save_features(train, cfg.features_dir / f"{stem}__train.spft")
                    save_features(test, cfg.features_dir / f"{stem}__test.spft")
                for algo in cfg.algorithms:
                    standardize = _standardize_for(cfg, algo)
                    try:
                        t0 = time.monotonic()
                        clf = train_classifier(algo, train, cfg.hyperparameters.get(algo),
                                               cfg.seed, standardize)
                        t1 = time.monotonic()
                        pred = clf.predict(test)
                        t2 = time.monotonic()
                    except Exception as exc:
                        fail(variety, model, tap, algo, f"{type(exc).__name__}: {exc}",
                             standardized=standardize, **counts)
                        continue
                    if cfg.models_dir is not None:
                        save_model(clf, cfg.models_dir / f"{stem}__{algo}.json")
                    report.records.append(Record(
                        variety, model, tap, algo,
                        ConfusionCounts.from_predictions(test.labels, pred),
                        standardized=standardize, seed=cfg.seed, config_digest=digest,
                        train_time=t1 - t0, eval_time=t2 - t1, **counts))
    return report.sorted()


def _task_seed(seed: int, variety: str) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 2,
                                 zlib.crc32(variety.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# -- rendering ---------------------------------------------------------------

CSV_COLUMNS = ("variety", "model", "tap", "algorithm", "accuracy", "tp", "tn", "fp", "fn",
               "n_train", "n_test", "n_positive", "n_negative", "standardized", "seed",
               "config_digest", "error", "train_time_s", "eval_time_s")
TIMING_COLUMNS = ("train_time_s", "eval_time_s")


def format_percent(acc: float) -> str:
    """Two-decimal percentage, rounding half up on the decimal value."""
    pct = Decimal(repr(float(acc))) * 100
    return str(pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _render_csv(report: ExperimentReport, include_timings: bool) -> str:
    cols = [c for c in CSV_COLUMNS if include_timings or c not in TIMING_COLUMNS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in report.records:
        c = r.confusion
        row = {
            "variety": r.variety, "model": r.model, "tap": r.tap, "algorithm": r.algorithm,
            "accuracy": "" if c is None else repr(r.accuracy),
            "tp": "" if c is None else c.tp, "tn": "" if c is None else c.tn,
            "fp": "" if c is None else c.fp, "fn": "" if c is None else c.fn,
            "n_train": r.n_train, "n_test": r.n_test, "n_positive": r.n_positive,
            "n_negative": r.n_negative, "standardized": int(r.standardized), "seed": r.seed,
            "config_digest": r.config_digest, "error": r.error,
            "train_time_s": f"{r.train_time:.6f}", "eval_time_s": f"{r.eval_time:.6f}",
        }
        writer.writerow([row[k] for k in cols])
    return buf.getvalue()


def _render_markdown(report: ExperimentReport) -> str:
    groups: Dict[Tuple[str, str], List[Record]] = {}
    for r in report.records:
        groups.setdefault((r.model, r.tap), []).append(r)
    out = []
    for (model, tap) in sorted(groups, key=lambda k: (MODEL_ORDER.get(k[0], 99),
                                                      TAP_ORDER.get(k[1], 99))):
        recs = groups[(model, tap)]
        algos = sorted({r.algorithm for r in recs}, key=lambda a: ALGO_ORDER.get(a, 99))
        varieties = []
        for r in recs:
            if r.variety not in varieties:
                varieties.append(r.variety)
        out.append(f"### Accuracy (%) on {model} features at {tap}")
        out.append("")
        out.append("| Variety | " + " | ".join(a.upper() for a in algos) + " |")
        out.append("|---|" + "---:|" * len(algos))
        for v in varieties:
            cells = {r.algorithm: r for r in recs if r.variety == v}
            shown = {a: format_percent(cells[a].accuracy) for a in algos
                     if a in cells and cells[a].ok}
            best = max((Decimal(s) for s in shown.values()), default=None)
            row = []
            for a in algos:
                if a not in shown:
                    row.append("n/a")
                elif Decimal(shown[a]) == best:
                    row.append(f"**{shown[a]}**")
                else:
                    row.append(shown[a])
            out.append(f"| {v} | " + " | ".join(row) + " |")
        out.append("")
        out.append("Best result per row in bold.")
        out.append("")
    return "\n".join(out)


def render_report(report: ExperimentReport, fmt: str = "csv", include_timings: bool = True) -> str:
    if not report.records:
        raise ValueError("cannot render an empty report")
    if fmt == "csv":
        return _render_csv(report, include_timings)
    if fmt in ("markdown", "md"):
        return _render_markdown(report)
    raise ValueError(f"unknown report format {fmt!r}")


def write_reports(report: ExperimentReport, cfg: ExperimentConfig) -> None:
    if cfg.csv_path is not None:
        cfg.csv_path.parent.mkdir(parents=True, exist_ok=True)
        cfg.csv_path.write_text(render_report(report, "csv"), encoding="utf-8")
    if cfg.markdown_path is not None:
        cfg.markdown_path.parent.mkdir(parents=True, exist_ok=True)
        cfg.markdown_path.write_text(render_report(report, "markdown"), encoding="utf-8")

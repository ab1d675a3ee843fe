"""Command-line front end: config-driven, reproducible pipeline runs.

Subcommands: ``augment``, ``features``, ``decompose``, ``train``,
``evaluate``, ``pipeline``, ``inspect``. Configuration is an INI-style file
(``[section]`` headers, ``key = value`` lines) with per-key overrides via
``--set section.key=value``. Exit codes: 0 ok, 1 usage, 2 data error,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classifier, decomposition, evaluation, imaging, projection
from . import dataset as ds
from .errors import DataError, DetracError, TrainingDiverged
from .kernels import BACKEND

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

# fixed offsets added to the global seed, one per pipeline stage
SEED_OFFSETS = {"split": 1, "pca": 2, "decompose": 3, "train": 4, "augment": 5}

DEFAULTS = {
    "paths": {"data_root": "", "features": "", "decompose_features": "", "output": "out"},
    "augment": {"equalize": "false"},
    "pca": {"variance_fraction": "0.95", "components": ""},
    "decompose": {
        "k_per_class": "2",
        "max_iter": "300",
        "tol": "1e-6",
        "restarts": "8",
        "k_overrides": "",  # e.g. "SARS:1,norm:3" for classes needing another k
    },
    "train": {
        "learning_rate": "0.0001",
        "head_learning_rate": "0.01",
        "batch_size": "64",
        "epochs": "100",
        "weight_decay": "0.0001",
        "momentum": "0.95",
        "lr_drop_factor": "0.95",
        "lr_drop_period_epochs": "5",
        "hidden": "0",
    },
    "compose": {"mode": decomposition.COMPOSE_SUM},
    "evaluate": {"positive_class": ""},
    "run": {"seed": "0", "train_fraction": "0.7"},
}


class UsageError(DetracError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """All resolved settings for one run; every field has a default."""

    data_root: str
    features: str
    decompose_features: str
    output: str
    equalize: bool
    pca_variance_fraction: float | None
    pca_components: int | None
    decomposition: decomposition.DecompositionConfig
    train: classifier.TrainConfig
    train_hidden: int
    compose_mode: str
    positive_class: str
    seed: int
    train_fraction: float

    def to_dict(self) -> dict:
        return {
            "paths": {
                "data_root": self.data_root,
                "features": self.features,
                "decompose_features": self.decompose_features,
                "output": self.output,
            },
            "augment": {"equalize": self.equalize},
            "pca": {
                "variance_fraction": self.pca_variance_fraction,
                "components": self.pca_components,
            },
            "decompose": {
                "k_per_class": self.decomposition.k_per_class,
                "max_iter": self.decomposition.max_iter,
                "tol": self.decomposition.tol,
                "restarts": self.decomposition.restarts,
                "k_overrides": ",".join(
                    f"{name}:{k}"
                    for name, k in sorted(self.decomposition.k_overrides.items())
                ),
            },
            "train": {
                "learning_rate": self.train.learning_rate,
                "head_learning_rate": self.train.head_learning_rate,
                "batch_size": self.train.batch_size,
                "epochs": self.train.epochs,
                "weight_decay": self.train.weight_decay,
                "momentum": self.train.momentum,
                "lr_drop_factor": self.train.lr_drop_factor,
                "lr_drop_period_epochs": self.train.lr_drop_period_epochs,
                "hidden": self.train_hidden,
            },
            "compose": {"mode": self.compose_mode},
            "evaluate": {"positive_class": self.positive_class},
            "run": {"seed": self.seed, "train_fraction": self.train_fraction},
        }

    def stage_seed(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off", ""):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def load_config(
    path: str | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> PipelineConfig:
    """Merge defaults, an optional config file and --set overrides."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    if path is not None:
        if not Path(path).exists():
            raise DataError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as e:
            raise UsageError(f"malformed config: {e}") from None
    for item in overrides or ():
        if "=" not in item:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        if "." not in key:
            raise UsageError(f"--set key must be section.key, got {key!r}")
        section, option = key.split(".", 1)
        section, option, value = section.strip(), option.strip(), value.strip()
        if section not in DEFAULTS or option not in DEFAULTS[section]:
            raise UsageError(f"unknown config key: {section}.{option}")
        cp.set(section, option, value)
    if seed is not None:
        cp.set("run", "seed", str(seed))
    if out is not None:
        cp.set("paths", "output", out)

    try:
        variance = cp.get("pca", "variance_fraction").strip()
        components = cp.get("pca", "components").strip()
        overrides_text = cp.get("decompose", "k_overrides").strip()
        k_overrides = {}
        for entry in filter(None, (s.strip() for s in overrides_text.split(","))):
            if ":" not in entry:
                raise UsageError(f"k_overrides expects name:k pairs, got {entry!r}")
            name, k_text = entry.split(":", 1)
            k_overrides[name.strip()] = int(k_text)
        dec_cfg = decomposition.DecompositionConfig(
            k_per_class=cp.getint("decompose", "k_per_class"),
            max_iter=cp.getint("decompose", "max_iter"),
            tol=cp.getfloat("decompose", "tol"),
            seed=cp.getint("run", "seed") + SEED_OFFSETS["decompose"],
            restarts=cp.getint("decompose", "restarts"),
            k_overrides=k_overrides,
        )
        train_cfg = classifier.TrainConfig(
            learning_rate=cp.getfloat("train", "learning_rate"),
            head_learning_rate=cp.getfloat("train", "head_learning_rate"),
            batch_size=cp.getint("train", "batch_size"),
            epochs=cp.getint("train", "epochs"),
            weight_decay=cp.getfloat("train", "weight_decay"),
            momentum=cp.getfloat("train", "momentum"),
            lr_drop_factor=cp.getfloat("train", "lr_drop_factor"),
            lr_drop_period_epochs=cp.getint("train", "lr_drop_period_epochs"),
            seed=cp.getint("run", "seed") + SEED_OFFSETS["train"],
        )
        return PipelineConfig(
            data_root=cp.get("paths", "data_root"),
            features=cp.get("paths", "features"),
            decompose_features=cp.get("paths", "decompose_features"),
            output=cp.get("paths", "output"),
            equalize=_parse_bool(cp.get("augment", "equalize")),
            pca_variance_fraction=float(variance) if components == "" else None,
            pca_components=int(components) if components != "" else None,
            decomposition=dec_cfg,
            train=train_cfg,
            train_hidden=cp.getint("train", "hidden"),
            compose_mode=cp.get("compose", "mode"),
            positive_class=cp.get("evaluate", "positive_class").strip(),
            seed=cp.getint("run", "seed"),
            train_fraction=cp.getfloat("run", "train_fraction"),
        )
    except ValueError as e:
        raise UsageError(f"invalid config value: {e}") from None


@dataclass(frozen=True, eq=False)
class PipelineResult:
    report: evaluation.MetricsReport
    history: classifier.TrainHistory
    parent_map: ds.ParentMap
    pca: projection.PcaModel
    head: classifier.SoftmaxHead
    train_sub_labels: np.ndarray
    train_parent_labels: np.ndarray


class StageFailure(DetracError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage: {stage}: {cause}")
        self.stage = stage
        self.cause = cause


def run_pipeline(
    data: ds.SampleSet,
    cfg: PipelineConfig,
    decompose_data: ds.SampleSet | None = None,
) -> PipelineResult:
    """Split, project, decompose, train and evaluate on composed predictions.

    ``decompose_data`` optionally supplies a second feature matrix (same rows,
    same labels) used only for PCA and clustering, mirroring setups that
    derive decomposition features and classifier features from different
    extractors.
    """
    if decompose_data is None:
        decompose_data = data
    elif (
        decompose_data.n != data.n
        or not np.array_equal(decompose_data.labels, data.labels)
        or decompose_data.label_space != data.label_space
    ):
        raise StageFailure(
            "features", DataError("decompose features must align with classifier features")
        )

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrainingDiverged:
            raise
        except DetracError as e:
            raise StageFailure(name, e) from e

    split_seed = cfg.stage_seed("split")
    train_set, test_set = stage("split", ds.split, data, cfg.train_fraction, split_seed)
    dec_train, dec_test = stage(
        "split", ds.split, decompose_data, cfg.train_fraction, split_seed
    )

    if cfg.pca_components is not None:
        pca = stage("pca", projection.fit_pca, dec_train.features,
                    components=cfg.pca_components)
    else:
        pca = stage("pca", projection.fit_pca, dec_train.features,
                    variance_fraction=cfg.pca_variance_fraction)

    decomposed, pm, models = stage(
        "decompose", decomposition.decompose, dec_train, pca, cfg.decomposition
    )

    # validation sub-labels for curve reporting only: nearest class centroid
    test_coords = projection.project(pca, dec_test.features.astype(np.float64))
    val_sub = decomposition.assign_subclasses(test_coords, test_set.labels, models, pm)
    val_set = ds.DecomposedSet(
        features=test_set.features, sub_labels=val_sub, parent_map=pm
    )

    train_decomposed = ds.DecomposedSet(
        features=train_set.features, sub_labels=decomposed.sub_labels, parent_map=pm
    )
    head0 = classifier.SoftmaxHead.init(
        n_features=data.m,
        n_classes=pm.n_sub,
        hidden=cfg.train_hidden,
        seed=cfg.stage_seed("train"),
    )
    head, history = stage(
        "train", classifier.train, head0, train_decomposed, val_set, cfg.train
    )

    sub_probs = classifier.predict_proba(head, test_set.features.astype(np.float64))
    _, parent_pred = stage("compose", decomposition.compose, sub_probs, pm, cfg.compose_mode)

    positive = cfg.positive_class or data.label_space.names[0]
    cm = evaluation.confusion(test_set.labels, parent_pred, data.label_space)
    report = stage("metrics", evaluation.metrics, cm, positive)

    return PipelineResult(
        report=report,
        history=history,
        parent_map=pm,
        pca=pca,
        head=head,
        train_sub_labels=decomposed.sub_labels,
        train_parent_labels=train_set.labels,
    )


def write_parent_map_sidecar(
    path, sub_labels: np.ndarray, pm: ds.ParentMap
) -> None:
    """Audit file: one ``<sample-index>,<class>,<subclass>`` line per sample."""
    lines = []
    for i, s in enumerate(sub_labels):
        parent = pm.label_space.names[pm.parent_of[s]]
        lines.append(f"{i},{parent},{pm.sub_names[s]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parent_map_from_subnames(names: tuple[str, ...]) -> ds.ParentMap:
    """Recover a ParentMap from ``<parent>_<j>`` sub-class names.

    Names without a numeric suffix map to themselves (identity decomposition).
    Parents are ordered by first appearance.
    """
    parents: list[str] = []
    parent_of = []
    for name in names:
        stem, _, tail = name.rpartition("_")
        parent = stem if stem and tail.isdigit() else name
        if parent not in parents:
            parents.append(parent)
        parent_of.append(parents.index(parent))
    return ds.ParentMap(
        sub_names=tuple(names),
        parent_of=np.asarray(parent_of, dtype=np.int64),
        label_space=ds.LabelSpace(tuple(parents)),
    )


# ---------------------------------------------------------------------------
# commands


def cmd_augment(args) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed, out=args.out)
    root = Path(args.root or cfg.data_root)
    if not root.is_dir():
        raise DataError(f"data root is not a directory: {root}")
    out_dir = Path(cfg.output)
    manifest = ds.load_manifest(root)
    spec = imaging.AugmentationSpec.default(seed=cfg.stage_seed("augment"))
    equalize = cfg.equalize or args.equalize

    if args.split is not None:
        rng = np.random.default_rng(cfg.stage_seed("split"))
        side_of = {}
        for c in range(len(manifest.label_space)):
            members = np.flatnonzero(manifest.labels == c)
            if members.size < 2:
                raise DataError(
                    f"class {manifest.label_space.names[c]!r} has fewer than 2 samples"
                )
            order = rng.permutation(members.size)
            n_train = int(np.floor(args.split * members.size + 0.5))
            for pos, idx in enumerate(members[order]):
                side_of[int(idx)] = "train" if pos < n_train else "test"
    else:
        side_of = None

    total = 0
    for i, (img, rel) in enumerate(zip(manifest.images, manifest.paths)):
        base = out_dir / side_of[i] if side_of is not None else out_dir
        dest = base / rel.parent
        dest.mkdir(parents=True, exist_ok=True)
        outputs = [(img, "_orig")]
        outputs += list(zip(imaging.augment(img, spec), imaging.augment_suffixes(img, spec)))
        for out_img, suffix in outputs:
            if equalize:
                out_img = imaging.histogram_modify(out_img)
            imaging.save_pgm(out_img, dest / f"{rel.stem}{suffix}.pgm")
            total += 1
    print(f"{total} samples written ({manifest.n} originals x {total // manifest.n})")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed, out=args.out)
    root = Path(args.root or cfg.data_root)
    if not root.is_dir():
        raise DataError(f"data root is not a directory: {root}")
    manifest = ds.load_manifest(root)
    sample_set = ds.raw_pixel_features(manifest, side=args.side)
    out_path = Path(args.features or (Path(cfg.output) / "features.dtrc"))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    ds.write_features(sample_set, out_path)
    print(f"wrote {out_path} (n={sample_set.n}, m={sample_set.m}, "
          f"classes={len(sample_set.label_space)})")
    return EXIT_OK


def cmd_decompose(args) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed, out=args.out)
    feat_path = args.features or cfg.features
    if not feat_path or not Path(feat_path).exists():
        raise StageFailure("features", DataError(f"feature file not found: {feat_path!r}"))
    data = ds.read_features(feat_path)
    if cfg.pca_components is not None:
        pca = projection.fit_pca(data.features, components=cfg.pca_components)
    else:
        pca = projection.fit_pca(data.features, variance_fraction=cfg.pca_variance_fraction)
    decomposed, pm, _ = decomposition.decompose(data, pca, cfg.decomposition)

    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds.write_features(decomposed.as_sample_set(), out_dir / "decomposed.dtrc")
    projection.write_pca(pca, out_dir / "pca.dpca")
    write_parent_map_sidecar(out_dir / "parent_map.txt", decomposed.sub_labels, pm)
    sizes = np.bincount(decomposed.sub_labels, minlength=pm.n_sub)
    pairs = ", ".join(f"{name}={sizes[i]}" for i, name in enumerate(pm.sub_names))
    print(f"decomposed into {pm.n_sub} sub-classes: {pairs}")
    return EXIT_OK


def _decomposed_from_file(path) -> ds.DecomposedSet:
    data = ds.read_features(path)
    pm = parent_map_from_subnames(data.label_space.names)
    return ds.DecomposedSet(features=data.features, sub_labels=data.labels, parent_map=pm)


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed, out=args.out)
    feat_path = args.features or cfg.features
    if not feat_path or not Path(feat_path).exists():
        raise StageFailure("features", DataError(f"feature file not found: {feat_path!r}"))
    train_set = _decomposed_from_file(feat_path)
    val_set = _decomposed_from_file(args.val) if args.val else None

    head0 = classifier.SoftmaxHead.init(
        n_features=train_set.m,
        n_classes=train_set.parent_map.n_sub,
        hidden=cfg.train_hidden,
        seed=cfg.stage_seed("train"),
    )
    head, history = classifier.train(head0, train_set, val_set, cfg.train)

    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    history.to_csv(out_dir / "history.csv")
    classifier.write_head(head, out_dir / "head.dhed")
    print(f"trained head ({train_set.m} -> {train_set.parent_map.n_sub}); "
          f"final train acc {history.train_acc[-1]:.4f}")
    return EXIT_OK


def _read_label_file(path) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    values = []
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise DataError(f"{p}:{line_no}: not an integer label: {line!r}") from None
    if not values:
        raise DataError(f"no labels in {p}")
    return np.asarray(values, dtype=np.int64)


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed, out=args.out)
    true_labels = _read_label_file(args.labels)
    pred_labels = _read_label_file(args.pred)
    if true_labels.shape != pred_labels.shape:
        raise DataError(
            f"length mismatch: {true_labels.size} labels vs {pred_labels.size} predictions"
        )
    if args.names:
        space = ds.LabelSpace(tuple(args.names.split(",")))
    else:
        c = int(max(true_labels.max(), pred_labels.max())) + 1
        space = ds.LabelSpace(tuple(f"class{i}" for i in range(c)))
    positive = args.positive or cfg.positive_class or space.names[0]
    if positive.isdigit():
        positive = space.names[int(positive)]
    cm = evaluation.confusion(true_labels, pred_labels, space)
    report = evaluation.metrics(cm, positive)
    sys.stdout.write(report.to_text())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.save_json(out_dir / "metrics.json")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed, out=args.out)

    feat_path = cfg.features
    if feat_path:
        if not Path(feat_path).exists():
            raise StageFailure("features", DataError(f"feature file not found: {feat_path!r}"))
        data = ds.read_features(feat_path)
    elif cfg.data_root:
        if not Path(cfg.data_root).is_dir():
            raise StageFailure(
                "features", DataError(f"data root is not a directory: {cfg.data_root!r}")
            )
        data = ds.raw_pixel_features(ds.load_manifest(cfg.data_root))
    else:
        raise StageFailure(
            "features", DataError("config must set paths.features or paths.data_root")
        )
    decompose_data = None
    if cfg.decompose_features:
        if not Path(cfg.decompose_features).exists():
            raise StageFailure(
                "features",
                DataError(f"feature file not found: {cfg.decompose_features!r}"),
            )
        decompose_data = ds.read_features(cfg.decompose_features)

    result = run_pipeline(data, cfg, decompose_data)

    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.report.save_json(out_dir / "metrics.json")
    result.history.to_csv(out_dir / "history.csv")
    write_parent_map_sidecar(
        out_dir / "parent_map.txt", result.train_sub_labels, result.parent_map
    )
    projection.write_pca(result.pca, out_dir / "pca.dpca")
    classifier.write_head(result.head, out_dir / "head.dhed")
    manifest = {
        "config": cfg.to_dict(),
        "stage_seeds": {k: cfg.stage_seed(k) for k in SEED_OFFSETS},
        "kernel_backend": BACKEND,
        "outputs": ["metrics.json", "history.csv", "parent_map.txt", "pca.dpca", "head.dhed"],
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    sys.stdout.write(result.report.to_text())
    print(f"report written to {out_dir}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    header = ds.read_header(args.file)
    print(f"magic: DTRC  version: {header['version']}")
    print(f"n: {header['n']}  m: {header['m']}")
    print(f"classes ({len(header['classes'])}): {', '.join(header['classes'])}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("fraction must lie in (0, 1)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="detrac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="global seed override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config key")

    p = sub.add_parser("augment", help="expand an image tree 9x")
    common(p)
    p.add_argument("--root", help="image manifest root (class subdirectories)")
    p.add_argument("--equalize", action="store_true",
                   help="apply histogram equalization to every written image")
    p.add_argument("--split", type=_fraction, default=None, metavar="FRACTION",
                   help="split originals into train/ and test/ trees first")
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("features", help="raw-pixel feature extraction")
    common(p)
    p.add_argument("--root", help="image manifest root")
    p.add_argument("--features", help="output feature file path")
    p.add_argument("--side", type=int, default=32, help="resize target (default 32)")
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("decompose", help="cluster classes into sub-classes")
    common(p)
    p.add_argument("--features", help="input feature file")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("train", help="train the softmax head on decomposed features")
    common(p)
    p.add_argument("--features", help="decomposed feature file")
    p.add_argument("--val", help="optional decomposed validation feature file")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="metrics over stored predictions")
    common(p)
    p.add_argument("--pred", required=True, help="predictions file, one index per line")
    p.add_argument("--labels", required=True, help="true labels file, one index per line")
    p.add_argument("--names", help="comma-separated class names")
    p.add_argument("--positive", help="positive class (name or index)")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("pipeline", help="full split/decompose/train/compose run")
    common(p)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("inspect", help="dump a feature-file header")
    p.add_argument("file")
    p.set_defaults(fn=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except StageFailure as e:
        if isinstance(e.cause, TrainingDiverged):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DIVERGED
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DetracError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .au import AuForest, AuTrainConfig, heatmap_table, lep_feature_array, train_au_forest
from .confidence import AeTrainConfig, ConfidenceNetwork, DivergenceError, train_network
from .container import ContainerError
from .data import (
    DataError,
    SyntheticConfig,
    load_manifest,
    merge_datasets,
    occlude,
    read_image,
    synth_generate,
    write_dataset,
    write_pgm,
)
from .evaluation import auc, occlusion_sweep, oob_evaluate, rows_to_csv
from .features import DEFAULT_COUNTS
from .forest import LocalForest, TrainConfig, TrainingError, train_ls_rf, train_rs_rf
from .mesh import SubpartGrouping, read_landmarks, write_landmarks
from .pipeline import CompatibilityError, Predictor

log = logging.getLogger("lepfer")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAIN = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------- helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _counts(text: str) -> tuple[int, int, int]:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != 3 or min(vals) < 0:
        raise argparse.ArgumentTypeError("expected three non-negative integers: distance,angle,appearance")
    return vals


def _signal(text: str) -> dict:
    out = {}
    for item in _str_list(text):
        region, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected region=strength, got {item!r}")
        out[region.strip()] = float(value)
    return out


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_dataset(paths):
    datasets = [load_manifest(p).load_dataset() for p in paths]
    return datasets[0] if len(datasets) == 1 else merge_datasets(datasets)


def _load_forest(path) -> LocalForest:
    if not Path(path).is_file():
        raise DataError(f"model file not found: {path}")
    return LocalForest.load(path)


def _load_network(path) -> ConfidenceNetwork:
    if not Path(path).is_file():
        raise DataError(f"network file not found: {path}")
    return ConfidenceNetwork.load(path)


def _load_au(path) -> AuForest:
    if not Path(path).is_file():
        raise DataError(f"AU model file not found: {path}")
    return AuForest.load(path)


def _jobs(args) -> int:
    return args.jobs if args.jobs and args.jobs > 0 else (os.cpu_count() or 1)


# -------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(
        n_subjects=args.subjects, samples_per_class=args.per_class, scheme=args.scheme, noise=args.noise,
        landmark_noise=args.landmark_noise, seed=args.seed,
        **({"signal": args.signal} if args.signal else {}),
    )
    path = write_dataset(synth_generate(cfg), args.out)
    print(path)
    return EXIT_OK


def cmd_train_lep(args) -> int:
    ds = _load_dataset(args.manifest)
    cfg = TrainConfig(n_trees=args.trees, locality=args.locality, counts=(0, *args.candidates),
                      n_thresholds=args.thresholds, max_depth=args.max_depth, subject_fraction=args.subject_fraction)
    train = train_rs_rf if args.global_ else train_ls_rf
    forest = train(ds, cfg, seed=args.seed, jobs=_jobs(args))
    forest.save(args.out)
    res = oob_evaluate(forest, ds)
    census = forest.root_census()
    lines = [
        f"# model: {forest.model_id()}",
        f"# kind: {'RS-RF' if args.global_ else 'LS-RF'}",
        f"# trees: {forest.n_trees}",
        f"# oob_accuracy: {res.accuracy:.6f}",
        f"# oob_evaluated: {res.n_evaluated}",
        f"# oob_excluded: {res.n_excluded}",
        "", "# confusion (row %)", res.confusion.to_text(),
        "# root-feature census", "triangle,share",
        *(f"{t},{v:.6f}" for t, v in enumerate(census)),
    ]
    _write_text(args.report, "\n".join(lines) + "\n")
    return EXIT_OK


def _grouping(arg, scheme) -> SubpartGrouping:
    if arg == "builtin":
        return SubpartGrouping.for_scheme(scheme)
    if not Path(arg).is_file():
        raise ConfigError(f"grouping file not found: {arg}")
    try:
        return SubpartGrouping.read(arg)
    except ValueError as exc:
        raise ConfigError(f"invalid grouping file {arg}: {exc}") from exc


def cmd_train_ae(args) -> int:
    ds = _load_dataset(args.manifest)
    grouping = _grouping(args.grouping, ds.scheme)
    try:
        grouping.validate(get_n_points(ds))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = AeTrainConfig(updates=args.updates, learning_rate=args.lr, weight_decay=args.weight_decay,
                        noise=args.masking)
    val = _load_dataset(args.validation).descriptors() if args.validation else None
    net = train_network(ds.descriptors(), grouping, cfg, seed=args.seed, labels=ds.labels, validation=val,
                        scheme=ds.scheme, jobs=_jobs(args))
    net.save(args.out)
    print(f"sigma0 median {np.median(net.sigma0):.6g} over {net.n_points} landmarks")
    return EXIT_OK


def get_n_points(ds) -> int:
    return ds.shapes[0].n_points if len(ds) else 0


def cmd_train_au(args) -> int:
    models = [_load_forest(p) for p in args.lep]
    if args.strategy == "M1" and len(models) != 1:
        raise ConfigError("strategy M1 takes exactly one LEP model trained on the merged expression data")
    ds = _load_dataset(args.manifest)
    if not ds.au_names:
        raise DataError("manifest carries no AU labels")
    for m in models:
        if m.scheme != ds.scheme:
            raise CompatibilityError(f"LEP model scheme {m.scheme} does not match data scheme {ds.scheme}")
    F = lep_feature_array(models, ds.context(models[0].mesh), ds.subjects)
    cfg = AuTrainConfig(n_trees=args.trees, n_candidates=args.candidates, n_thresholds=args.thresholds)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        forest = train_au_forest(F, ds.au_labels, ds.au_names, ds.subjects, models[0].mesh.triangles, cfg,
                                 seed=args.seed, jobs=_jobs(args), scheme=ds.scheme,
                                 source_models=[m.model_id() for m in models])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if not forest.au_names:
        raise TrainingError("no AU had both positive and negative labels")
    forest.save(args.out)
    scores = forest.oob_scores(F, ds.subjects)
    col = {a: i for i, a in enumerate(ds.au_names)}
    lines = [f"# model: {forest.model_id()}", f"# strategy: {args.strategy}", "au,oob_auc,n_evaluated"]
    for j, a in enumerate(forest.au_names):
        y = ds.au_labels[:, col[a]]
        ok = ~np.isnan(scores[:, j]) & (y >= 0)
        try:
            value = f"{auc(scores[ok, j], y[ok]).auc:.6f}"
        except ValueError:
            value = "nan"
        lines.append(f"{a},{value},{int(ok.sum())}")
    for a in forest.skipped:
        lines.append(f"{a},skipped,0")
    _write_text(args.report, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    forest = _load_forest(args.model)
    net = _load_network(args.network) if args.network else None
    au = _load_au(args.au) if args.au else None
    sources = [_load_forest(p) for p in args.au_lep] if args.au_lep else None
    predictor = Predictor(forest, net, au, sources)
    image = read_image(args.image) if Path(args.image).is_file() else None
    if image is None:
        raise DataError(f"image not found: {args.image}")
    if not Path(args.landmarks).is_file():
        raise DataError(f"landmark file not found: {args.landmarks}")
    try:
        shape = read_landmarks(args.landmarks, forest.scheme)
    except ValueError as exc:
        raise CompatibilityError(f"landmarks do not fit scheme {forest.scheme}: {exc}") from exc
    pred = predictor.predict(image, shape)
    _write_text(args.report, pred.report())
    if args.timing:
        _write_text(args.timing, pred.timing_table())
    else:
        sys.stderr.write(pred.timing_table())
    return EXIT_OK


def cmd_occlude(args) -> int:
    rng = np.random.default_rng(args.seed)
    if not Path(args.image).is_file() or not Path(args.landmarks).is_file():
        raise DataError("image or landmark file not found")
    image = read_image(args.image)
    shape = read_landmarks(args.landmarks, args.scheme)
    res = occlude(image, shape, args.region, args.margin, rng, jitter=args.jitter)
    write_pgm(args.out, res.image)
    if args.landmarks_out:
        write_landmarks(args.landmarks_out, res.shape)
    print("box " + " ".join(str(v) for v in res.box))
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.regions or not args.lep:
        raise ConfigError("sweep needs at least one region and one LS-RF model")
    ds = _load_dataset(args.manifest)
    forests = {}
    for item in args.lep:
        r, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"--lep expects R=PATH, got {item!r}")
        try:
            forests[float(r)] = _load_forest(path)
        except ValueError as exc:
            raise ConfigError(f"bad R value in {item!r}") from exc
    rs = _load_forest(args.rs) if args.rs else None
    net = _load_network(args.network) if args.network else None
    for m in [*forests.values(), *([rs] if rs else [])]:
        if m.scheme != ds.scheme:
            raise CompatibilityError("model and data landmark schemes differ")
    rows = occlusion_sweep(forests, ds, rs, net, tuple(args.regions), args.margin, args.seed, args.jitter)
    _write_text(args.out, rows_to_csv(rows))
    return EXIT_OK


def cmd_heatmap(args) -> int:
    _write_text(args.out, heatmap_table(_load_au(args.au)))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, jobs: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="master random seed (default: 0)")
    if jobs:
        p.add_argument("--jobs", type=int, default=0,
                       help="worker processes; 0 uses every core, results do not depend on it (default: 0)")
    p.add_argument("--config", metavar="PATH",
                   help="plain-text 'key = value' file; explicit flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lepfer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="write a synthetic expression dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subjects", type=int, default=10, help="number of subjects (default: 10)")
    p.add_argument("--per-class", type=int, default=10, help="samples per subject and class (default: 10)")
    p.add_argument("--scheme", default="ls49", help="landmark scheme: ls49 or toy5 (default: ls49)")
    p.add_argument("--noise", type=float, default=0.0, help="pixel noise std in grey levels (default: 0)")
    p.add_argument("--landmark-noise", type=float, default=0.0,
                   help="landmark error std in iod units (default: 0)")
    p.add_argument("--signal", type=_signal, default=None,
                   help="per-region strengths, e.g. mouth=1,eyes=0.3 (default: every region at 1)")
    _common(p, jobs=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-lep", help="train an LS-RF (or RS-RF with --global) expression forest")
    p.add_argument("manifest", nargs="+", help="expression manifest(s); several are merged")
    p.add_argument("-o", "--out", required=True, help="model file to write")
    p.add_argument("--trees", type=int, default=1000, help="number of trees T1 (default: 1000)")
    p.add_argument("--locality", type=float, default=0.1,
                   help="face-surface fraction R covered by each tree mask (default: 0.1)")
    p.add_argument("--global", dest="global_", action="store_true",
                   help="train the random-subspace baseline on the whole face")
    p.add_argument("--candidates", type=_counts, default=DEFAULT_COUNTS[1:],
                   help="distance,angle,appearance candidates per node (default: 40,40,160)")
    p.add_argument("--thresholds", type=int, default=25, help="thresholds per candidate (default: 25)")
    p.add_argument("--max-depth", type=int, default=30, help="depth cap (default: 30)")
    p.add_argument("--subject-fraction", type=float, default=0.632,
                   help="fraction of subjects per bootstrap (default: 0.632)")
    p.add_argument("--report", default="-", help="training report path, '-' for stdout (default: -)")
    _common(p)
    p.set_defaults(func=cmd_train_lep)

    p = sub.add_parser("train-ae", help="train the hierarchical denoising autoencoder")
    p.add_argument("manifest", nargs="+", help="manifest(s) of clean faces")
    p.add_argument("--grouping", required=True,
                   help="subpart grouping file, or 'builtin' for the scheme's default grouping")
    p.add_argument("-o", "--out", required=True, help="network file to write")
    p.add_argument("--updates", type=int, default=15000, help="SGD updates per autoencoder (default: 15000)")
    p.add_argument("--lr", type=float, default=0.01, help="learning rate (default: 0.01)")
    p.add_argument("--weight-decay", type=float, default=0.001, help="weight decay (default: 0.001)")
    p.add_argument("--masking", type=float, default=0.25,
                   help="fraction of inputs zeroed by masking noise (default: 0.25)")
    p.add_argument("--validation", nargs="+", help="clean validation manifest(s) for sigma0 calibration")
    _common(p)
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-au", help="train per-AU forests on LEP features")
    p.add_argument("manifest", nargs="+", help="manifest(s) with AU labels")
    p.add_argument("--lep", nargs="+", required=True, help="LEP model file(s), concatenated in order under M2")
    p.add_argument("--strategy", choices=("M1", "M2"), default="M1",
                   help="M1: one LEP model trained on merged expression data; M2: several concatenated (default: M1)")
    p.add_argument("-o", "--out", required=True, help="AU model file to write")
    p.add_argument("--trees", type=int, default=50, help="trees per AU T2 (default: 50)")
    p.add_argument("--candidates", type=int, default=100, help="LEP candidates per node (default: 100)")
    p.add_argument("--thresholds", type=int, default=25, help="thresholds per candidate (default: 25)")
    p.add_argument("--report", default="-", help="AUC report path, '-' for stdout (default: -)")
    _common(p)
    p.set_defaults(func=cmd_train_au)

    p = sub.add_parser("predict", help="predict expression (and AUs) for one image")
    p.add_argument("--model", required=True, help="expression forest file")
    p.add_argument("--network", help="confidence network file; enables WLS-RF and confidences")
    p.add_argument("--au", help="AU model file")
    p.add_argument("--au-lep", nargs="+", help="LEP models the AU model was trained on (default: --model)")
    p.add_argument("--image", required=True, help="PGM image")
    p.add_argument("--landmarks", required=True, help="landmark file (one 'x y' per line)")
    p.add_argument("--report", default="-", help="report path, '-' for stdout (default: -)")
    p.add_argument("--timing", help="per-stage timing output (default: stderr)")
    _common(p, jobs=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("occlude", help="overlay a noise block on the eyes or mouth")
    p.add_argument("--image", required=True, help="input PGM image")
    p.add_argument("--landmarks", required=True, help="landmark file")
    p.add_argument("--scheme", default="ls49", help="landmark scheme (default: ls49)")
    p.add_argument("--region", choices=("eyes", "mouth"), required=True, help="region to cover")
    p.add_argument("--margin", type=float, default=20, help="pixels added around the region box (default: 20)")
    p.add_argument("--jitter", action="store_true", help="perturb landmarks inside the box by 0.1 iod")
    p.add_argument("-o", "--out", required=True, help="output PGM image")
    p.add_argument("--landmarks-out", help="write the (possibly jittered) landmarks here")
    _common(p, jobs=False)
    p.set_defaults(func=cmd_occlude)

    p = sub.add_parser("eval", help="OOB accuracy sweep over variants, occluded regions and R")
    p.add_argument("manifest", nargs="+", help="evaluation manifest(s)")
    p.add_argument("--lep", nargs="+", default=[], metavar="R=PATH", help="LS-RF models keyed by their R")
    p.add_argument("--rs", help="RS-RF model")
    p.add_argument("--network", help="confidence network; adds the WLS-RF variant")
    p.add_argument("--regions", type=_str_list, default=["none", "eyes", "mouth"],
                   help="comma-separated regions: none, eyes, mouth (default: none,eyes,mouth)")
    p.add_argument("--margin", type=float, default=20, help="occlusion margin in pixels (default: 20)")
    p.add_argument("--jitter", action="store_true", help="perturb landmarks inside occluded boxes")
    p.add_argument("-o", "--out", default="-", help="CSV output, '-' for stdout (default: -)")
    _common(p, jobs=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("heatmap", help="export per-AU root-feature heat maps")
    p.add_argument("--au", required=True, help="AU model file")
    p.add_argument("-o", "--out", default="-", help="CSV output, '-' for stdout (default: -)")
    _common(p, jobs=False)
    p.set_defaults(func=cmd_heatmap)
    return parser


def read_config(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for n, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _config_path(argv):
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def apply_config(parser, argv) -> None:
    """Install config-file values as subcommand defaults so explicit flags still win."""
    path = _config_path(argv)
    if path is None:
        return
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if a in sub.choices), None)
    if command is None:
        return
    subparser = sub.choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in read_config(path).items():
        key = "global_" if key == "global" else key
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r} for {command}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            defaults[key] = [action.type(v) if action.type else v for v in value.split()]
        else:
            try:
                defaults[key] = action.type(value) if action.type else value
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from None
        action.required = False
    subparser.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        apply_config(parser, argv)
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, CompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ContainerError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, DivergenceError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

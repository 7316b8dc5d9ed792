"""Batch front-end: analyze / poison / metrics / kde subcommands.

Data goes to files or stdout; progress goes to stderr.  Flag precedence is
flags > --config JSON file > built-in defaults.  Every toolkit error exits
nonzero with one machine-readable JSON object on stderr.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, metrics, poison, trigger, wavelets
from .data import (
    load_cifar_binary,
    load_image_dir,
    load_saved,
    read_image,
    save_dataset,
)
from .errors import ConfigError, FreqPoisonError


def _progress(msg):
    print(msg, file=sys.stderr)


def _load_dataset(args):
    if args.format in ("cifar10", "cifar100"):
        return load_cifar_binary(args.dataset, args.format, split=args.split)
    if args.format == "dir":
        return load_image_dir(args.dataset)
    if args.format == "saved":
        return load_saved(args.dataset)[0]
    raise ConfigError(f"unknown dataset format {args.format!r}")


def _write_json(doc, out):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _wavelet(args):
    return wavelets.wavelet_spec(args.wavelet, args.pad)


def cmd_analyze(args):
    ds = _load_dataset(args)
    _progress(f"analyzing {len(ds)} samples of {ds.name}")
    ws = _wavelet(args)
    emap = analysis.effectiveness(ds.images, args.level, ws, args.mode)
    sel = analysis.select_key_regions(emap)
    _write_json(analysis.analysis_report(emap, sel), args.out)
    _progress(f"selected regions: {','.join(sel.regions)}")
    return 0


def _resolve_regions(args, ds, ws):
    if args.regions:
        return tuple(r.strip() for r in args.regions.split(","))
    if args.analysis:
        with open(args.analysis) as fh:
            doc = json.load(fh)
        if doc.get("level") != args.level:
            raise ConfigError(
                f"analysis file level {doc.get('level')} != requested {args.level}"
            )
        return tuple(doc["selected"])
    _progress("no --regions/--analysis given; analyzing the dataset first")
    emap = analysis.effectiveness(ds.images, args.level, ws, args.mode)
    return analysis.select_key_regions(emap).regions


def _load_trigger(args, size, ws):
    if args.trigger.endswith(".json"):
        trig = trigger.load_frequency_trigger(args.trigger)
        if trig.spec.original_size != size or trig.spec.level != args.level:
            raise ConfigError("serialized trigger does not match dataset geometry")
        if trig.spec.wavelet.name != ws.name or trig.spec.wavelet.pad != ws.pad:
            raise ConfigError("serialized trigger does not match the wavelet")
        return trig
    img = read_image(args.trigger)
    return trigger.make_frequency_trigger(img, size, args.level, ws)


def cmd_poison(args):
    ds = _load_dataset(args)
    ws = _wavelet(args)
    size = ds.images.shape[1]
    regions = _resolve_regions(args, ds, ws)
    trig = _load_trigger(args, size, ws)
    cfg = poison.PoisonConfig(
        level=args.level,
        wavelet=args.wavelet,
        pad=args.pad,
        regions=regions,
        k=args.k,
        k_prime=args.k_prime,
        alpha=args.alpha,
        ratio=args.ratio,
        target_label=args.target,
        seed=args.seed,
        mask_original=args.mask_original,
    )
    if args.test_set:
        _progress(f"poisoning all non-target samples of {ds.name} (test mode)")
        out_ds, manifest = poison.poison_test_dataset(ds, cfg, trig, jobs=args.jobs)
    else:
        _progress(f"poisoning {ds.name} at ratio {cfg.ratio}")
        out_ds, manifest = poison.poison_dataset(ds, cfg, trig, jobs=args.jobs)
    save_dataset(out_ds, manifest, args.out, fmt=args.save_format)
    _progress(
        f"wrote {args.out} ({len(manifest.poisoned_indices)} poisoned samples)"
    )
    return 0


def cmd_convert(args):
    ds = _load_dataset(args)
    save_dataset(ds, None, args.out, fmt=args.save_format)
    _progress(f"wrote {args.out} ({len(ds)} samples, {args.save_format})")
    return 0


def _truth_lookup(path):
    """Truth labels from a saved dataset dir or an index,label CSV."""
    if os.path.isdir(path):
        with open(os.path.join(path, "dataset.json")) as fh:
            labels = json.load(fh)["labels"]
        return {i: int(v) for i, v in enumerate(labels)}
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] not in (["index", "label"], ["index", "pred"]):
        raise ConfigError(f"{path} is not an index,label CSV")
    return {int(r[0]): int(r[1]) for r in rows[1:]}


def cmd_metrics(args):
    doc = {}
    if args.clean_preds:
        if not args.clean_truth:
            raise ConfigError("--clean-preds needs --clean-truth")
        idx, preds = metrics.read_predictions_csv(args.clean_preds)
        lookup = _truth_lookup(args.clean_truth)
        truth = [lookup[int(i)] for i in idx]
        pset = metrics.PredictionSet(predicted=preds, truth=truth, kind="clean")
        doc["clean_accuracy"] = metrics.clean_accuracy(pset)
    if args.poison_preds:
        if args.target is None:
            raise ConfigError("--poison-preds needs --target")
        _, preds = metrics.read_predictions_csv(args.poison_preds)
        pset = metrics.PredictionSet(
            predicted=preds, truth=args.target, kind="poisoned"
        )
        doc["asr"] = metrics.asr(pset, args.target)
    counts = (args.tp, args.fp, args.fn, args.tn)
    if any(c is not None for c in counts):
        if any(c is None for c in counts):
            raise ConfigError("detection scoring needs all of --tp --fp --fn --tn")
        scores = metrics.detection_scores(
            metrics.DetectionCounts(
                tp=args.tp, fp=args.fp, fn=args.fn, tn=args.tn, omega=args.omega
            )
        )
        doc["detection"] = {
            "tpr": scores.tpr,
            "fpr": scores.fpr,
            "f1_omega": scores.f1_omega,
            "omega": scores.omega,
        }
    if not doc:
        raise ConfigError(
            "nothing to score: pass prediction files and/or confusion counts"
        )
    _write_json(doc, args.out)
    return 0


def cmd_kde(args):
    train = metrics.read_features(args.train_feats)
    test = metrics.read_features(args.test_feats)
    bandwidth = args.bandwidth
    if bandwidth != "auto":
        bandwidth = float(bandwidth)
    curve = metrics.l2_kde(train, test, bandwidth=bandwidth)
    if curve.bandwidth_fallback:
        _progress(
            f"auto bandwidth degenerated; fell back to {curve.bandwidth}"
        )
    if args.out in (None, "-"):
        metrics.write_curve_csv("/dev/stdout", curve)
    else:
        metrics.write_curve_csv(args.out, curve)
    _progress(
        f"kde over {test.shape[0]} averaged distances, bandwidth {curve.bandwidth:.6g}"
    )
    return 0


def _add_dataset_flags(p):
    p.add_argument("--dataset", required=True, help="dataset path")
    p.add_argument(
        "--format",
        default="cifar10",
        choices=["cifar10", "cifar100", "dir", "saved"],
        help="dataset layout",
    )
    p.add_argument("--split", default="train", choices=["train", "test"])


def _add_transform_flags(p):
    p.add_argument("--wavelet", default="db3", choices=["db2", "db3", "db4"])
    p.add_argument("--level", type=int, default=2, help="decomposition level N")
    p.add_argument("--pad", type=int, default=2, help="reflection pad L per edge")
    p.add_argument(
        "--mode",
        default="absavg",
        choices=["absavg", "avgabs"],
        help="effectiveness aggregation",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="freqpoison",
        description="frequency-domain dataset analysis and poisoning toolkit",
    )
    parser.add_argument("--config", help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-region effectiveness + key regions")
    _add_dataset_flags(p)
    _add_transform_flags(p)
    p.add_argument("--out", default="-", help="output JSON path (default stdout)")
    p.add_argument("--jobs", type=int, default=os.cpu_count())
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("poison", help="emit a poisoned dataset + manifest")
    _add_dataset_flags(p)
    _add_transform_flags(p)
    p.add_argument("--trigger", required=True, help="trigger image or .json")
    p.add_argument("--regions", help="comma-separated region paths (else analyzed)")
    p.add_argument("--analysis", help="analysis JSON with a 'selected' list")
    p.add_argument("--k", type=float, default=6.0, help="train trigger intensity")
    p.add_argument(
        "--k-prime",
        type=float,
        default=None,
        dest="k_prime",
        help="test trigger intensity (defaults to --k)",
    )
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--ratio", type=float, default=0.00004)
    p.add_argument("--target", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--mask-original",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="mask original content in poisoned regions (training samples)",
    )
    p.add_argument(
        "--test-set",
        action="store_true",
        help="poison every non-target sample with the testing equation",
    )
    p.add_argument("--save-format", default="raw", choices=["raw", "png16"])
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--jobs", type=int, default=os.cpu_count())
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("convert", help="re-emit a dataset in the saved format")
    _add_dataset_flags(p)
    p.add_argument("--save-format", default="raw", choices=["raw", "png16"])
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("metrics", help="scores from prediction files / counts")
    p.add_argument("--clean-preds", help="index,pred CSV on benign samples")
    p.add_argument("--clean-truth", help="saved dataset dir or index,label CSV")
    p.add_argument("--poison-preds", help="index,pred CSV on poisoned samples")
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--tp", type=int, default=None)
    p.add_argument("--fp", type=int, default=None)
    p.add_argument("--fn", type=int, default=None)
    p.add_argument("--tn", type=int, default=None)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("kde", help="averaged-distance density curve CSV")
    p.add_argument("--train-feats", required=True)
    p.add_argument("--test-feats", required=True)
    p.add_argument("--bandwidth", default="auto")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_kde)
    return parser


def _apply_config_file(parser, argv):
    """Config-file values become defaults; explicit flags still win."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    with open(known.config) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("--config must hold a JSON object")
    for action in parser._subparsers._group_actions[0].choices.values():
        valid = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in doc.items() if k in valid})
    return argv


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if getattr(args, "k_prime", "skip") is None:
            args.k_prime = args.k
        return args.func(args)
    except FreqPoisonError as exc:
        print(json.dumps(exc.to_json()), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""trainer-harness CLI: train / evaluate / extract on emitted datasets."""

import argparse
import json
import os
import sys

from . import io
from .model import load_checkpoint, save_checkpoint
from .run import TrainRun, evaluate, extract_features, train


def cmd_train(args):
    images, labels, n_classes, _ = io.load_dataset_dir(args.train_dir)
    run = TrainRun(
        train_dir=args.train_dir,
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        width=args.width,
    )
    print(
        f"training on {len(labels)} samples ({n_classes} classes), "
        f"{run.epochs} epochs",
        file=sys.stderr,
    )
    model, history = train(run, images, labels, n_classes)
    os.makedirs(args.out_dir, exist_ok=True)
    save_checkpoint(model, os.path.join(args.out_dir, "model.pt"))
    with open(os.path.join(args.out_dir, "train_summary.json"), "w") as fh:
        json.dump(
            {
                "epochs": run.epochs,
                "lr": run.lr,
                "seed": run.seed,
                "width": run.width,
                "final_loss": history[-1],
                "loss_history": history,
                "train_dir": args.train_dir,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
    print(f"final loss {history[-1]:.4f}", file=sys.stderr)
    return 0


def cmd_evaluate(args):
    model = load_checkpoint(args.model)
    clean_images, clean_labels, _, _ = io.load_dataset_dir(args.clean_dir)
    poison_images, _, _, manifest = io.load_dataset_dir(
        args.poison_dir, require_manifest=True
    )
    target = manifest["target_label"] if args.target is None else args.target
    result = evaluate(model, clean_images, clean_labels, poison_images, target)
    os.makedirs(args.out_dir, exist_ok=True)
    io.write_predictions_csv(
        os.path.join(args.out_dir, "clean_preds.csv"),
        range(len(clean_labels)),
        result["clean_preds"],
    )
    io.write_labels_csv(
        os.path.join(args.out_dir, "clean_truth.csv"),
        range(len(clean_labels)),
        clean_labels,
    )
    io.write_predictions_csv(
        os.path.join(args.out_dir, "poison_preds.csv"),
        range(len(result["poison_preds"])),
        result["poison_preds"],
    )
    summary = {
        "clean_accuracy": result["clean_accuracy"],
        "asr": result["asr"],
        "target": int(target),
        "n_clean": int(len(clean_labels)),
        "n_poisoned": int(len(result["poison_preds"])),
    }
    with open(os.path.join(args.out_dir, "eval_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_extract(args):
    model = load_checkpoint(args.model)
    images, _, _, manifest = io.load_dataset_dir(
        args.dataset_dir, require_manifest=(args.which == "poisoned")
    )
    if args.which == "poisoned":
        if manifest["kind"] == "train":
            rows = manifest["poisoned_indices"]
        else:  # test-mode datasets contain only poisoned samples
            rows = list(range(len(images)))
        images = images[rows]
    feats = extract_features(model, images)
    path = io.write_features(args.out, feats)
    print(f"wrote {path} ({feats.shape[0]}x{feats.shape[1]})", file=sys.stderr)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="trainer-harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the small CNN on a dataset dir")
    p.add_argument("--train-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=16)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="emit prediction CSVs + summary")
    p.add_argument("--model", required=True)
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--poison-dir", required=True)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("extract", help="export penultimate-layer features")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--which", default="poisoned", choices=["poisoned", "all"])
    p.add_argument("--out", required=True, help="output stem or .json path")
    p.set_defaults(func=cmd_extract)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except io.FormatError as exc:
        print(json.dumps({"error": "format", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Mean SSIM/MSE of poisoned vs clean samples, with and without the average
transformation on the trigger.  Reproduces the stealth comparison numerically.

Example (real data):
    python scripts/stealth_report.py --dataset data/cifar-10-batches-bin \
        --format cifar10 --trigger my_trigger.png --n 100
"""

import argparse
import json

import numpy as np

from freqpoison import analysis, metrics, poison, trigger, wavelets
from freqpoison.data import load_cifar_binary, load_image_dir, read_image


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--format", default="cifar10", choices=["cifar10", "cifar100", "dir"])
    ap.add_argument("--trigger", required=True, help="trigger image path")
    ap.add_argument("--n", type=int, default=100, help="samples to score")
    ap.add_argument("--k-prime", type=float, default=6.0, dest="k_prime")
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--level", type=int, default=2)
    ap.add_argument("--pad", type=int, default=2)
    ap.add_argument("--wavelet", default="db3")
    args = ap.parse_args()

    if args.format == "dir":
        ds = load_image_dir(args.dataset)
    else:
        ds = load_cifar_binary(args.dataset, args.format, split="train")
    ws = wavelets.wavelet_spec(args.wavelet, args.pad)
    size = ds.images.shape[1]

    emap = analysis.effectiveness(ds.images, args.level, ws)
    sel = analysis.select_key_regions(emap)
    mask = poison.build_mask(sel, size, args.level, args.pad)

    trig_img = read_image(args.trigger)
    averaged = trigger.make_frequency_trigger(trig_img, size, args.level, ws)
    raw = wavelets.wpd(
        trigger.bilinear_resize(trig_img, size, size)
        if trig_img.shape[0] != size
        else trig_img,
        args.level,
        ws,
    )

    rows = {"with_T": {"ssim": [], "mse": []}, "without_T": {"ssim": [], "mse": []}}
    for x in ds.images[: args.n].astype(np.float64):
        for key, trg in (("with_T", averaged), ("without_T", raw)):
            p = poison.poison_test(x, trg, mask, args.k_prime, args.alpha)
            rows[key]["ssim"].append(metrics.ssim(x, p))
            rows[key]["mse"].append(metrics.mse(x, p))
    summary = {
        key: {stat: float(np.mean(vals)) for stat, vals in d.items()}
        for key, d in rows.items()
    }
    summary["regions"] = list(sel.regions)
    print(json.dumps(summary, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""End-to-end demo on a synthetic dataset: analyze -> trigger -> poison -> score.

Writes everything under --out (default ./demo_run) and prints the key numbers.
Useful as a smoke test of the full pipeline when no real dataset is around.
"""

import argparse
import json
import os

import numpy as np

from freqpoison import analysis, metrics, poison, trigger, wavelets
from freqpoison.data import LabeledDataset, save_dataset, write_image


def synthetic_dataset(rng, n=300, size=32, n_classes=10):
    """Smooth class-correlated color fields; enough structure to analyze."""
    labels = rng.integers(0, n_classes, n)
    images = np.empty((n, size, size, 3), dtype=np.float32)
    for i, lbl in enumerate(labels):
        low = trigger.bilinear_resize(rng.random((6, 6, 3)), size, size)
        tint = 0.25 + 0.5 * (lbl / max(n_classes - 1, 1))
        images[i] = np.clip(0.7 * low + 0.3 * tint, 0, 1)
    return LabeledDataset(images=images, labels=labels, n_classes=n_classes, name="demo")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="demo_run")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ratio", type=float, default=0.02)
    ap.add_argument("--target", type=int, default=0)
    ap.add_argument("--k", type=float, default=6.0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    ds = synthetic_dataset(rng)
    ws = wavelets.wavelet_spec("db3", 2)

    emap = analysis.effectiveness(ds.images, 2, ws, "absolute_average")
    sel = analysis.select_key_regions(emap)
    report = analysis.analysis_report(emap, sel)
    with open(os.path.join(args.out, "analysis.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print("selected regions:", ",".join(sel.regions))

    trig_img = np.clip(trigger.bilinear_resize(rng.random((8, 8, 3)), 32, 32), 0, 1)
    write_image(os.path.join(args.out, "trigger.png"), trig_img)
    trig = trigger.make_frequency_trigger(trig_img, 32, 2, ws)
    trigger.save_frequency_trigger(trig, os.path.join(args.out, "trigger"))

    cfg = poison.PoisonConfig(
        level=2,
        wavelet="db3",
        pad=2,
        regions=sel.regions,
        k=args.k,
        k_prime=args.k,
        alpha=1.0,
        ratio=args.ratio,
        target_label=args.target,
        seed=args.seed,
    )
    poisoned, manifest = poison.poison_dataset(ds, cfg, trig)
    save_dataset(poisoned, manifest, os.path.join(args.out, "poisoned_train"))
    print(f"poisoned {len(manifest.poisoned_indices)} of {len(ds)} samples")

    test_ds = synthetic_dataset(rng, n=60)
    ptest, test_manifest = poison.poison_test_dataset(test_ds, cfg, trig)
    save_dataset(ptest, test_manifest, os.path.join(args.out, "poisoned_test"))

    pairs = [
        (test_ds.images[i].astype(np.float64), ptest.images[j].astype(np.float64))
        for j, i in enumerate(test_manifest.poisoned_indices[:20])
    ]
    ssim_vals = [metrics.ssim(a, b) for a, b in pairs]
    mse_vals = [metrics.mse(a, b) for a, b in pairs]
    print(f"poisoned-test stealth: ssim {np.mean(ssim_vals):.4f}  "
          f"mse {np.mean(mse_vals):.6f}")


if __name__ == "__main__":
    main()

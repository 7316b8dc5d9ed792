"""Secondary acceptance: directional attack efficacy on a real CIFAR-10
subset, the masking ablation direction, and the feature-distance shape.

These rely on the real CIFAR-10 binary training set and skip without it
(see conftest.cifar10_train_dir).  The synthetic KDE-shape smoke runs
everywhere.  Run with -v -s for one PASS/FAIL line per criterion.
"""

import json
import os
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from trainer_harness import io as tio
from trainer_harness.cli import main as harness_main
from trainer_harness.model import load_checkpoint
from trainer_harness.run import extract_features

from conftest import FREQPOISON, cifar10_train_dir, requires_cifar10


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"\n[ACCEPTANCE] {name}: PASS")


def run_freqpoison(args):
    proc = subprocess.run(
        FREQPOISON + list(args), capture_output=True, text=True
    )
    assert proc.returncode == 0, f"freqpoison {args}: {proc.stderr}"


def run_harness(args):
    assert harness_main(list(args)) == 0


def write_region_constant_trigger(path, size=32, level=2, lo=0.05, hi=0.10):
    """Trigger image whose regions all carry solidly nonzero means."""
    import cv2
    from freqpoison import wavelets as wv

    rng = np.random.default_rng(11)
    ws = wv.wavelet_spec("db3", 2)
    spec = wv.wpd(np.full((size, size, 3), 0.5), level, ws)
    for p in wv.region_paths(level):
        if p != "a" * level:
            wv.region_view(spec, p)[:] = rng.uniform(lo, hi) * rng.choice([-1.0, 1.0])
    img = np.clip(wv.iwpd(spec), 0, 1)
    cv2.imwrite(path, np.round(img * 255).astype(np.uint8)[:, :, ::-1])


def averaged_l2(train_feats, test_feats):
    diffs = test_feats[:, None, :] - train_feats[None, :, :]
    return np.sqrt((diffs**2).sum(axis=2)).mean(axis=1)


@pytest.fixture(scope="module")
def cifar_experiment(tmp_path_factory):
    """Poison a 10k CIFAR-10 subset at p=0.1%, k=6; train three models."""
    root = cifar10_train_dir()
    if root is None:
        pytest.skip("real CIFAR-10 binary set not available")
    base = tmp_path_factory.mktemp("cifar_run")
    t0 = time.monotonic()

    # 10k training subset = two canonical batches, byte-level concatenation
    subset_bin = str(base / "subset.bin")
    with open(subset_bin, "wb") as out:
        for i in (1, 2):
            with open(os.path.join(root, f"data_batch_{i}.bin"), "rb") as fh:
                out.write(fh.read())
    test_bin = os.path.join(root, "test_batch.bin")
    if not os.path.isfile(test_bin):
        test_bin = os.path.join(root, "data_batch_5.bin")

    trig = str(base / "trigger.png")
    write_region_constant_trigger(trig)

    dirs = {
        "clean_train": str(base / "clean_train"),
        "clean_test": str(base / "clean_test"),
        "poison_train": str(base / "poison_train"),
        "poison_train_kept": str(base / "poison_train_kept"),
        "poison_test": str(base / "poison_test"),
    }
    run_freqpoison(
        ["convert", "--dataset", subset_bin, "--format", "cifar10",
         "--out", dirs["clean_train"]]
    )
    run_freqpoison(
        ["convert", "--dataset", test_bin, "--format", "cifar10",
         "--out", dirs["clean_test"]]
    )
    common = [
        "--dataset", subset_bin, "--format", "cifar10", "--trigger", trig,
        "--regions", "ah,ha,va,dh", "--k", "6", "--target", "0",
        "--seed", "7", "--ratio", "0.001",
    ]
    run_freqpoison(["poison", *common, "--out", dirs["poison_train"]])
    run_freqpoison(
        ["poison", *common, "--no-mask-original", "--out", dirs["poison_train_kept"]]
    )
    run_freqpoison(
        ["poison", "--dataset", test_bin, "--format", "cifar10",
         "--trigger", trig, "--regions", "ah,ha,va,dh", "--test-set",
         "--k", "6", "--k-prime", "6", "--alpha", "1.0", "--target", "0",
         "--out", dirs["poison_test"]]
    )

    summaries = {}
    model_paths = {}
    for tag, train_dir in (
        ("clean", dirs["clean_train"]),
        ("poisoned", dirs["poison_train"]),
        ("kept", dirs["poison_train_kept"]),
    ):
        out_dir = str(base / f"model_{tag}")
        run_harness(
            ["train", "--train-dir", train_dir, "--out-dir", out_dir,
             "--epochs", "20", "--seed", "0"]
        )
        eval_dir = str(base / f"eval_{tag}")
        run_harness(
            ["evaluate", "--model", os.path.join(out_dir, "model.pt"),
             "--clean-dir", dirs["clean_test"],
             "--poison-dir", dirs["poison_test"],
             "--out-dir", eval_dir]
        )
        summaries[tag] = json.load(open(os.path.join(eval_dir, "eval_summary.json")))
        model_paths[tag] = os.path.join(out_dir, "model.pt")
    elapsed = time.monotonic() - t0
    return {
        "dirs": dirs,
        "summaries": summaries,
        "models": model_paths,
        "elapsed": elapsed,
    }


@requires_cifar10
def test_directional_attack_efficacy(cifar_experiment):
    s = cifar_experiment["summaries"]
    elapsed = cifar_experiment["elapsed"]
    line = (
        f"directional efficacy: ASR {s['poisoned']['asr']:.3f}, "
        f"C-Acc {s['poisoned']['clean_accuracy']:.3f} vs clean "
        f"{s['clean']['clean_accuracy']:.3f} ({elapsed:.0f}s)"
    )
    with criterion(line):
        assert s["poisoned"]["asr"] >= 0.5
        drop = s["clean"]["clean_accuracy"] - s["poisoned"]["clean_accuracy"]
        assert drop <= 0.02
        assert elapsed < 1200.0


@requires_cifar10
def test_masking_ablation_direction(cifar_experiment):
    s = cifar_experiment["summaries"]
    line = (
        f"masking ablation: masked ASR {s['poisoned']['asr']:.3f} > "
        f"kept-content ASR {s['kept']['asr']:.3f}"
    )
    with criterion(line):
        assert s["poisoned"]["asr"] > s["kept"]["asr"]


def _median_distance(model_path, train_dir, test_dir):
    model = load_checkpoint(model_path)
    timgs, _, _, tman = tio.load_dataset_dir(train_dir, require_manifest=True)
    rows = tman["poisoned_indices"]
    train_feats = extract_features(model, timgs[rows])
    pimgs, _, _, _ = tio.load_dataset_dir(test_dir)
    test_feats = extract_features(model, pimgs[:500])
    return float(np.median(averaged_l2(train_feats, test_feats)))


@requires_cifar10
def test_kde_shape_property(cifar_experiment):
    dirs = cifar_experiment["dirs"]
    ok = _median_distance(
        cifar_experiment["models"]["poisoned"],
        dirs["poison_train"],
        dirs["poison_test"],
    )
    chance = _median_distance(
        cifar_experiment["models"]["clean"],
        dirs["poison_train"],
        dirs["poison_test"],
    )
    with criterion(
        f"feature-distance shape: successful median {ok:.3f} < chance {chance:.3f}"
    ):
        assert ok < chance


def test_kde_shape_property_synthetic(synth_root, tmp_path):
    """Same shape property at synthetic scale; runs without CIFAR-10."""
    models = {}
    for tag, train_dir in (
        ("clean", synth_root["clean_train"]),
        ("poisoned", synth_root["poison_train"]),
    ):
        out = str(tmp_path / tag)
        run_harness(
            ["train", "--train-dir", train_dir, "--out-dir", out,
             "--epochs", "12", "--seed", "0"]
        )
        models[tag] = os.path.join(out, "model.pt")
    ok = _median_distance(
        models["poisoned"], synth_root["poison_train"], synth_root["poison_test"]
    )
    chance = _median_distance(
        models["clean"], synth_root["poison_train"], synth_root["poison_test"]
    )
    with criterion(
        f"synthetic feature-distance shape: {ok:.3f} < {chance:.3f}"
    ):
        assert ok < chance

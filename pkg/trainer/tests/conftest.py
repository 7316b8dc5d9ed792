import os
import subprocess
import sys

import numpy as np
import pytest

FREQPOISON = [sys.executable, "-m", "freqpoison.cli"]
PKG_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def run_freqpoison(args):
    """Invoke the poisoning toolkit CLI (the external interface)."""
    proc = subprocess.run(
        FREQPOISON + list(args), capture_output=True, text=True
    )
    assert proc.returncode == 0, f"freqpoison {args} failed: {proc.stderr}"
    return proc


def smooth_field(rng, size):
    """Low-frequency random field in [0, 1] via nearest upsampling + blur."""
    coarse = rng.random((4, 4, 3))
    img = np.repeat(np.repeat(coarse, size // 4, axis=0), size // 4, axis=1)
    # cheap 3x3 box blur, wraps at the borders
    out = img.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out += np.roll(np.roll(img, dy, axis=0), dx, axis=1)
    return out / 10.0


def write_synthetic_cifar_bin(path, n, n_classes=4, seed=0, size=32, template_seed=123):
    """CIFAR-10-format records with learnable class-specific structure.

    Class templates come from ``template_seed`` so different splits share the
    same class distribution while ``seed`` varies the per-sample noise.
    """
    template_rng = np.random.default_rng(template_seed)
    templates = [smooth_field(template_rng, size) for _ in range(n_classes)]
    rng = np.random.default_rng(seed)
    with open(path, "wb") as fh:
        for i in range(n):
            label = int(rng.integers(0, n_classes))
            img = 0.65 * templates[label] + 0.35 * smooth_field(rng, size)
            data = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
            fh.write(bytes([label]))
            fh.write(data.transpose(2, 0, 1).tobytes())
    return path


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Synthetic train/test sets emitted through the toolkit pipeline."""
    root = tmp_path_factory.mktemp("synth")
    train_bin = write_synthetic_cifar_bin(str(root / "train.bin"), 400, seed=1)
    test_bin = write_synthetic_cifar_bin(str(root / "test.bin"), 160, seed=2)
    trig_path = str(root / "trigger.png")
    _write_trigger_png(trig_path)
    dirs = {
        "clean_train": str(root / "clean_train"),
        "clean_test": str(root / "clean_test"),
        "poison_train": str(root / "poison_train"),
        "poison_test": str(root / "poison_test"),
        "poison_train_kept": str(root / "poison_train_kept"),
    }
    run_freqpoison(
        ["convert", "--dataset", train_bin, "--format", "cifar10",
         "--out", dirs["clean_train"]]
    )
    run_freqpoison(
        ["convert", "--dataset", test_bin, "--format", "cifar10",
         "--out", dirs["clean_test"]]
    )
    common = [
        "--dataset", train_bin, "--format", "cifar10",
        "--trigger", trig_path, "--regions", "ah,ha,va,dh",
        "--k", "6", "--target", "2", "--seed", "3",
    ]
    run_freqpoison(
        ["poison", *common, "--ratio", "0.05", "--out", dirs["poison_train"]]
    )
    run_freqpoison(
        ["poison", *common, "--ratio", "0.05", "--no-mask-original",
         "--out", dirs["poison_train_kept"]]
    )
    run_freqpoison(
        ["poison", "--dataset", test_bin, "--format", "cifar10",
         "--trigger", trig_path, "--regions", "ah,ha,va,dh",
         "--test-set", "--k", "6", "--k-prime", "6", "--alpha", "1.0",
         "--target", "2", "--out", dirs["poison_test"]]
    )
    dirs["trigger"] = trig_path
    return dirs


def _write_trigger_png(path, size=32, level=2):
    """Trigger image with strong mean coefficients in every region.

    Built by inverting a spectrogram whose regions are constant blocks (the
    mean of a detail region is its pixel-parity content, so smooth images
    inject almost nothing).  Test scaffolding only; the harness itself never
    imports the toolkit.
    """
    import cv2
    from freqpoison import wavelets as wv

    rng = np.random.default_rng(11)
    ws = wv.wavelet_spec("db3", 2)
    spec = wv.wpd(np.full((size, size, 3), 0.5), level, ws)
    for p in wv.region_paths(level):
        if p != "a" * level:
            block = wv.region_view(spec, p)
            block[:] = rng.uniform(0.05, 0.10) * rng.choice([-1.0, 1.0])
    img = np.clip(wv.iwpd(spec), 0, 1)
    data = np.round(img * 255).astype(np.uint8)
    cv2.imwrite(path, data[:, :, ::-1])


def cifar10_train_dir():
    env = os.environ.get("FREQPOISON_CIFAR10")
    candidates = [env] if env else []
    candidates.append(os.path.join(PKG_ROOT, "data", "cifar-10-batches-bin"))
    for cand in candidates:
        if cand and os.path.isfile(os.path.join(cand, "data_batch_1.bin")):
            return cand
    return None


requires_cifar10 = pytest.mark.skipif(
    cifar10_train_dir() is None,
    reason=(
        "real CIFAR-10 binary set not available "
        "(set FREQPOISON_CIFAR10 to the cifar-10-batches-bin directory)"
    ),
)

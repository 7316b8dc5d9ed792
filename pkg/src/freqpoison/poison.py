"""Region masks and poisoned-sample/dataset generation.

A poisoned training sample replaces the selected frequency regions of the
victim's spectrogram with a scaled frequency trigger:

    g(x; k)  = IW( W(x) * m  +  k * T * (1 - m) )

and a poisoned testing sample keeps the original content in those regions at
intensity alpha on top of the trigger:

    g'(x; k') = IW( W(x) * m  +  (1 - m) * (alpha * W(x) + k' * T) )

where m is 1 outside the selected regions and 0 inside them.  Pixels are not
clamped here; only 8-bit export clamps.
"""

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import RegionSelection
from .data import LabeledDataset, dataset_sha256
from .errors import ConfigError, DatasetError, GeometryError
from .trigger import FrequencyTrigger, trigger_sha256
from .wavelets import (
    Spectrogram,
    iwpd_batch,
    region_slice,
    validate_region_path,
    wavelet_spec,
    wpd_batch,
)


@dataclass
class PoisonMask:
    grid: np.ndarray  # (G, G, 3) of {0.0, 1.0}; 0 inside selected regions
    regions: RegionSelection


def build_mask(selection, size, level, pad):
    """Binary mask over the (size+2*pad)^2 grid; zeros in selected regions."""
    grid_size = size + 2 * pad
    if grid_size % (1 << level):
        raise GeometryError(
            f"grid {grid_size} not divisible by 2^{level}; bad size/pad for mask"
        )
    for path in selection.regions:
        validate_region_path(path, level)
    grid = np.ones((grid_size, grid_size, 3))
    for path in selection.regions:
        rows, cols = region_slice(grid_size, path)
        grid[rows, cols, :] = 0.0
    return PoisonMask(grid=grid, regions=selection)


@dataclass(frozen=True)
class PoisonConfig:
    level: int
    wavelet: str
    pad: int
    regions: tuple  # selected region paths
    k: float  # trigger intensity, training samples
    k_prime: float  # trigger intensity, testing samples
    alpha: float  # original-content intensity in poisoned regions (testing)
    ratio: float  # poisoned fraction of the training set
    target_label: int
    seed: int
    mask_original: bool = True  # False: keep original content while training

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise ConfigError(f"ratio must be in (0, 1], got {self.ratio}")
        if not self.k > 0:
            raise ConfigError(f"k must be > 0, got {self.k}")
        if self.k_prime < 0:
            raise ConfigError(f"k_prime must be >= 0, got {self.k_prime}")
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.target_label < 0:
            raise ConfigError("target_label must be a class index")
        for path in self.regions:
            validate_region_path(path, self.level)

    def wavelet_spec(self):
        return wavelet_spec(self.wavelet, self.pad)

    def to_json(self):
        return {
            "level": self.level,
            "wavelet": self.wavelet,
            "pad": self.pad,
            "regions": list(self.regions),
            "k": self.k,
            "k_prime": self.k_prime,
            "alpha": self.alpha,
            "ratio": self.ratio,
            "target_label": self.target_label,
            "seed": self.seed,
            "mask_original": self.mask_original,
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            level=doc["level"],
            wavelet=doc["wavelet"],
            pad=doc["pad"],
            regions=tuple(doc["regions"]),
            k=doc["k"],
            k_prime=doc["k_prime"],
            alpha=doc["alpha"],
            ratio=doc["ratio"],
            target_label=doc["target_label"],
            seed=doc["seed"],
            mask_original=doc.get("mask_original", True),
        )


def _trigger_grid(trig):
    if isinstance(trig, FrequencyTrigger):
        return trig.spec
    if isinstance(trig, Spectrogram):
        return trig
    raise ConfigError("trigger must be a FrequencyTrigger or a Spectrogram")


def _check_shapes(size, trig_spec, mask):
    if mask.grid.shape != trig_spec.coeffs.shape:
        raise GeometryError(
            f"mask grid {mask.grid.shape} != trigger grid {trig_spec.coeffs.shape}"
        )
    if size != trig_spec.original_size:
        raise GeometryError(
            f"image size {size} != trigger target size {trig_spec.original_size}"
        )


def _train_grid(coeffs, trig_spec, mask, k):
    m = mask.grid[None]
    return coeffs * m + (k * trig_spec.coeffs)[None] * (1.0 - m)


def _test_grid(coeffs, trig_spec, mask, k_prime, alpha):
    m = mask.grid[None]
    inject = alpha * coeffs + (k_prime * trig_spec.coeffs)[None]
    return coeffs * m + (1.0 - m) * inject


def _poison_train_batch(imgs, trig_spec, mask, k):
    ws = trig_spec.wavelet
    coeffs = wpd_batch(imgs, trig_spec.level, ws)
    poisoned = _train_grid(coeffs, trig_spec, mask, k)
    return iwpd_batch(poisoned, trig_spec.level, ws, trig_spec.original_size)


def _poison_test_batch(imgs, trig_spec, mask, k_prime, alpha):
    ws = trig_spec.wavelet
    coeffs = wpd_batch(imgs, trig_spec.level, ws)
    poisoned = _test_grid(coeffs, trig_spec, mask, k_prime, alpha)
    return iwpd_batch(poisoned, trig_spec.level, ws, trig_spec.original_size)


def poison_train_spectrogram(img, trig, mask, k):
    """The constructed poisoned spectrogram, before inversion.

    Outside the selected regions this equals the clean spectrogram exactly;
    re-decomposing the inverted (and border-cropped) spatial sample would
    not, because the pad border stops being a reflection of the interior.
    """
    img = np.asarray(img, dtype=np.float64)
    spec = _trigger_grid(trig)
    _check_shapes(img.shape[0], spec, mask)
    coeffs = wpd_batch(img[None], spec.level, spec.wavelet)
    grid = _train_grid(coeffs, spec, mask, k)[0]
    return Spectrogram(
        coeffs=grid,
        level=spec.level,
        wavelet=spec.wavelet,
        original_size=spec.original_size,
    )


def _pool_chunk(args):
    """Top-level (picklable) worker for one batch of images."""
    start, imgs, mode, payload = args
    spec = Spectrogram(
        coeffs=payload["trig_coeffs"],
        level=payload["level"],
        wavelet=wavelet_spec(payload["wavelet"], payload["pad"]),
        original_size=payload["original_size"],
    )
    mask = PoisonMask(grid=payload["mask_grid"], regions=None)
    if mode == "train":
        out = _poison_train_batch(imgs, spec, mask, payload["k"])
    else:
        out = _poison_test_batch(imgs, spec, mask, payload["k"], payload["alpha"])
    return start, out


def _poison_images(imgs, trig_spec, mask, mode, k, alpha, jobs=1, batch_size=256):
    """Poison a stack batch by batch; batches may run in separate processes.

    Reassembly is by batch offset, so the result is independent of worker
    scheduling.
    """
    payload = {
        "trig_coeffs": trig_spec.coeffs,
        "level": trig_spec.level,
        "wavelet": trig_spec.wavelet.name,
        "pad": trig_spec.wavelet.pad,
        "original_size": trig_spec.original_size,
        "mask_grid": mask.grid,
        "k": k,
        "alpha": alpha,
    }
    chunks = [
        (start, np.asarray(imgs[start : start + batch_size], dtype=np.float64))
        for start in range(0, imgs.shape[0], batch_size)
    ]
    out = np.empty(imgs.shape, dtype=np.float64)
    if jobs <= 1 or len(chunks) < 2:
        for start, block in chunks:
            s, res = _pool_chunk((start, block, mode, payload))
            out[s : s + res.shape[0]] = res
        return out
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for s, res in pool.map(
            _pool_chunk, [(start, block, mode, payload) for start, block in chunks]
        ):
            out[s : s + res.shape[0]] = res
    return out


def poison_train(img, trig, mask, k):
    """Mask the selected regions and inject the k-scaled trigger there."""
    img = np.asarray(img, dtype=np.float64)
    spec = _trigger_grid(trig)
    _check_shapes(img.shape[0], spec, mask)
    return _poison_train_batch(img[None], spec, mask, k)[0]


def poison_test(img, trig, mask, k_prime, alpha):
    """Inject the trigger while keeping alpha of the original content."""
    img = np.asarray(img, dtype=np.float64)
    spec = _trigger_grid(trig)
    _check_shapes(img.shape[0], spec, mask)
    return _poison_test_batch(img[None], spec, mask, k_prime, alpha)[0]


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass
class PoisonManifest:
    config: PoisonConfig
    kind: str  # "train" | "test"
    poisoned_indices: list
    original_labels: list
    target_label: int
    trigger_sha256: str
    dataset_sha256: str
    n_samples: int

    def to_json(self):
        return {
            "config": self.config.to_json(),
            "kind": self.kind,
            "poisoned_indices": [int(i) for i in self.poisoned_indices],
            "original_labels": [int(v) for v in self.original_labels],
            "target_label": int(self.target_label),
            "trigger_sha256": self.trigger_sha256,
            "dataset_sha256": self.dataset_sha256,
            "n_samples": int(self.n_samples),
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, doc):
        return cls(
            config=PoisonConfig.from_json(doc["config"]),
            kind=doc["kind"],
            poisoned_indices=list(doc["poisoned_indices"]),
            original_labels=list(doc["original_labels"]),
            target_label=doc["target_label"],
            trigger_sha256=doc["trigger_sha256"],
            dataset_sha256=doc["dataset_sha256"],
            n_samples=doc["n_samples"],
        )


def _prepare(ds, cfg, trig):
    spec = _trigger_grid(trig)
    if spec.level != cfg.level or spec.wavelet.name != cfg.wavelet:
        raise ConfigError("trigger level/wavelet does not match the config")
    if cfg.target_label >= ds.n_classes:
        raise ConfigError(
            f"target label {cfg.target_label} out of range for {ds.n_classes} classes"
        )
    selection = RegionSelection(
        regions=tuple(cfg.regions), excluded="a" * cfg.level, source="config"
    )
    mask = build_mask(selection, ds.images.shape[1], cfg.level, cfg.pad)
    _check_shapes(ds.images.shape[1], spec, mask)
    return spec, mask


def poison_dataset(ds, cfg, trig, jobs=1):
    """Poison a seeded uniform draw of non-target training samples.

    Selected samples are replaced by their poisoned version and relabeled to
    the target class; everything else passes through untouched.  Count is
    max(1, round(ratio * n)), rounding half up.
    """
    spec, mask = _prepare(ds, cfg, trig)
    n = len(ds.labels)
    n_poison = round_half_up(cfg.ratio * n)
    if n_poison == 0:
        warnings.warn(
            f"ratio {cfg.ratio} rounds to zero samples on {n}; poisoning 1"
        )
        n_poison = 1
    candidates = np.flatnonzero(ds.labels != cfg.target_label)
    if candidates.size < n_poison:
        raise DatasetError(
            f"need {n_poison} non-target samples, only {candidates.size} available"
        )
    rng = np.random.default_rng(cfg.seed)
    chosen = np.sort(rng.choice(candidates, size=n_poison, replace=False))

    # mask_original=False is the ablation that keeps the original content in
    # the poisoned regions during training (the testing equation with k).
    mode = "train" if cfg.mask_original else "test"
    poisoned_imgs = _poison_images(
        ds.images[chosen], spec, mask, mode, cfg.k, cfg.alpha, jobs=jobs
    )

    images = ds.images.astype(np.float32, copy=True)
    images[chosen] = poisoned_imgs.astype(np.float32)
    labels = ds.labels.copy()
    original_labels = labels[chosen].tolist()
    labels[chosen] = cfg.target_label
    out = LabeledDataset(
        images=images,
        labels=labels,
        n_classes=ds.n_classes,
        name=f"{ds.name}-poisoned",
    )
    manifest = PoisonManifest(
        config=cfg,
        kind="train",
        poisoned_indices=chosen.tolist(),
        original_labels=original_labels,
        target_label=cfg.target_label,
        trigger_sha256=trigger_sha256(trig)
        if isinstance(trig, FrequencyTrigger)
        else "",
        dataset_sha256=dataset_sha256(out),
        n_samples=n,
    )
    return out, manifest


def poison_test_dataset(ds, cfg, trig, jobs=1):
    """Poison every non-target sample with the testing equation (k', alpha).

    Target-class samples are dropped so the ASR denominator only contains
    samples whose prediction flipping to the target actually means something.
    """
    spec, mask = _prepare(ds, cfg, trig)
    keep = np.flatnonzero(ds.labels != cfg.target_label)
    if keep.size == 0:
        raise DatasetError("no non-target samples to poison")
    poisoned_imgs = _poison_images(
        ds.images[keep], spec, mask, "test", cfg.k_prime, cfg.alpha, jobs=jobs
    ).astype(np.float32)
    labels = np.full(keep.size, cfg.target_label, dtype=np.int64)
    out = LabeledDataset(
        images=poisoned_imgs,
        labels=labels,
        n_classes=ds.n_classes,
        name=f"{ds.name}-poisoned-test",
    )
    manifest = PoisonManifest(
        config=cfg,
        kind="test",
        poisoned_indices=keep.tolist(),
        original_labels=ds.labels[keep].tolist(),
        target_label=cfg.target_label,
        trigger_sha256=trigger_sha256(trig)
        if isinstance(trig, FrequencyTrigger)
        else "",
        dataset_sha256=dataset_sha256(out),
        n_samples=len(ds.labels),
    )
    return out, manifest

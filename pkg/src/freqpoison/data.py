"""Dataset ingestion and lossless persistence.

In memory a dataset is an (n, H, W, 3) float32 stack with values in [0, 1]
for 8-bit sources (byte value / 255); poisoned pixels may leave that range
and are preserved as-is.  The default on-disk format is a raw little-endian
float32 blob (bit-exact round trip) next to a JSON header; png16 is available
for interop and is lossy only below 1/65535 per pixel (and clamps to [0, 1]).
Images are stored and loaded in disk order: index i on disk is index i in
memory.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DatasetError

IMAGE_EXTENSIONS = (".png", ".ppm", ".bmp")


@dataclass
class LabeledDataset:
    images: np.ndarray  # (n, H, W, 3) float32
    labels: np.ndarray  # (n,) int64
    n_classes: int
    name: str

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[3] != 3:
            raise DatasetError(f"images must be (n, H, W, 3), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DatasetError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if self.n_classes < 1:
            raise DatasetError("n_classes must be >= 1")
        if len(self.labels) and (
            self.labels.min() < 0 or self.labels.max() >= self.n_classes
        ):
            raise DatasetError("labels out of range for n_classes")

    def __len__(self):
        return len(self.labels)


def dataset_sha256(ds):
    """Hash of the canonical in-memory bytes (float32 images + int64 labels)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.images, dtype="<f4").tobytes())
    h.update(np.ascontiguousarray(ds.labels, dtype="<i8").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- CIFAR binary

_CIFAR_FILES = {
    "cifar10": {
        "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
        "test": ["test_batch.bin"],
        "record": 3073,
        "label_offset": 0,
        "n_classes": 10,
    },
    "cifar100": {
        "train": ["train.bin"],
        "test": ["test.bin"],
        "record": 3074,
        "label_offset": 1,  # coarse label first; the fine label is used
        "n_classes": 100,
    },
}


def _parse_cifar_file(path, record, label_offset):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0:
        raise DatasetError(f"{path} is empty")
    if len(raw) % record:
        usable = len(raw) - len(raw) % record
        raise DatasetError(
            f"{path} truncated: {len(raw)} bytes is not a multiple of "
            f"{record}-byte records (incomplete record at byte offset {usable})"
        )
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    labels = arr[:, label_offset].astype(np.int64)
    pixels = arr[:, label_offset + 1 :]
    images = (
        pixels.reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).astype(np.float32) / 255.0
    )
    return images, labels


def load_cifar_binary(path, variant, split="train"):
    """Load CIFAR-10/100 binary batches (planar RGB records, pixels / 255).

    ``path`` is either a directory holding the canonical batch files or a
    single ``.bin`` file.
    """
    if variant not in _CIFAR_FILES:
        raise DatasetError(f"unknown CIFAR variant {variant!r}")
    layout = _CIFAR_FILES[variant]
    if os.path.isfile(path):
        files = [path]
    else:
        if split not in ("train", "test"):
            raise DatasetError(f"split must be train or test, got {split!r}")
        files = [os.path.join(path, f) for f in layout[split]]
        missing = [f for f in files if not os.path.isfile(f)]
        if missing:
            raise DatasetError(f"missing CIFAR files: {missing}")
    parts = [
        _parse_cifar_file(f, layout["record"], layout["label_offset"]) for f in files
    ]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    if labels.max() >= layout["n_classes"]:
        raise DatasetError(
            f"label {labels.max()} out of range; file is not {variant} data"
        )
    return LabeledDataset(
        images=images,
        labels=labels,
        n_classes=layout["n_classes"],
        name=f"{variant}-{split}" if not os.path.isfile(path) else variant,
    )


# ---------------------------------------------------------------- image files


def read_image(path):
    """Read PNG/PPM/BMP as (H, W, 3) float32 in [0, 1] (RGB order)."""
    bgr = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if bgr is None:
        raise DatasetError(f"cannot read image {path}")
    if bgr.ndim == 2:
        bgr = np.repeat(bgr[:, :, None], 3, axis=2)
    if bgr.shape[2] == 4:
        bgr = bgr[:, :, :3]
    rgb = bgr[:, :, ::-1]
    if rgb.dtype == np.uint8:
        return rgb.astype(np.float32) / 255.0
    if rgb.dtype == np.uint16:
        return rgb.astype(np.float32) / 65535.0
    return rgb.astype(np.float32)


def to_uint8(img):
    """Clamp to [0, 1] and quantize; the only place pixels are clamped."""
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def to_uint16(img):
    return np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_image(path, img, bit_depth=8):
    if bit_depth == 8:
        data = to_uint8(img)
    elif bit_depth == 16:
        data = to_uint16(img)
    else:
        raise DatasetError(f"unsupported bit depth {bit_depth}")
    if not cv2.imwrite(path, np.ascontiguousarray(data[:, :, ::-1])):
        raise DatasetError(f"cannot write image {path}")


def load_image_dir(root):
    """Directory tree root/<class_name>/*.png|ppm|bmp, classes sorted by name."""
    if not os.path.isdir(root):
        raise DatasetError(f"{root} is not a directory")
    classes = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    if not classes:
        raise DatasetError(f"{root} contains no class directories")
    images, labels = [], []
    shapes = {}
    for idx, cls in enumerate(classes):
        files = sorted(
            f
            for f in os.listdir(os.path.join(root, cls))
            if f.lower().endswith(IMAGE_EXTENSIONS)
        )
        if not files:
            raise DatasetError(f"class directory {cls!r} has no images")
        for f in files:
            img = read_image(os.path.join(root, cls, f))
            shapes.setdefault(img.shape, []).append(os.path.join(cls, f))
            images.append(img)
            labels.append(idx)
    if len(shapes) > 1:
        listing = "; ".join(
            f"{shape}: {files[:3]}" for shape, files in sorted(shapes.items())
        )
        raise DatasetError(f"mixed image sizes in {root}: {listing}")
    return LabeledDataset(
        images=np.stack(images),
        labels=np.array(labels, dtype=np.int64),
        n_classes=len(classes),
        name=os.path.basename(os.path.abspath(root)),
    )


# ---------------------------------------------------------------- persistence


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_dataset(ds, manifest, out_root, fmt="raw"):
    """Persist a dataset (and its poison manifest) under ``out_root``.

    raw: images.f32 blob, bit-exact.  png16: one 16-bit PNG per image
    (clamped to [0, 1], error < 1/65535).  The header records payload hashes
    that loading verifies.
    """
    os.makedirs(out_root, exist_ok=True)
    payload = {}
    if fmt == "raw":
        blob_path = os.path.join(out_root, "images.f32")
        np.ascontiguousarray(ds.images, dtype="<f4").tofile(blob_path)
        payload["images.f32"] = _sha256_file(blob_path)
    elif fmt == "png16":
        img_dir = os.path.join(out_root, "images")
        os.makedirs(img_dir, exist_ok=True)
        h = hashlib.sha256()
        for i, img in enumerate(ds.images):
            path = os.path.join(img_dir, f"{i:06d}.png")
            write_image(path, img, bit_depth=16)
            with open(path, "rb") as fh:
                h.update(fh.read())
        payload["images/"] = h.hexdigest()
    else:
        raise DatasetError(f"unknown dataset format {fmt!r}")
    header = {
        "format": fmt,
        "n": int(len(ds)),
        "height": int(ds.images.shape[1]),
        "width": int(ds.images.shape[2]),
        "channels": 3,
        "n_classes": int(ds.n_classes),
        "name": ds.name,
        "labels": [int(v) for v in ds.labels],
        "payload_sha256": payload,
    }
    with open(os.path.join(out_root, "dataset.json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if manifest is not None:
        doc = manifest if isinstance(manifest, dict) else manifest.to_json()
        with open(os.path.join(out_root, "manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return out_root


def load_saved(out_root, require_manifest=False):
    """Load a saved dataset; returns (dataset, manifest dict or None)."""
    header_path = os.path.join(out_root, "dataset.json")
    if not os.path.isfile(header_path):
        raise DatasetError(f"{out_root} has no dataset.json")
    with open(header_path) as fh:
        header = json.load(fh)
    n, height, width = header["n"], header["height"], header["width"]
    fmt = header["format"]
    if fmt == "raw":
        blob_path = os.path.join(out_root, "images.f32")
        if _sha256_file(blob_path) != header["payload_sha256"]["images.f32"]:
            raise DatasetError(
                f"{blob_path} does not match its recorded hash",
                ident="tampered-dataset",
            )
        images = np.fromfile(blob_path, dtype="<f4")
        if images.size != n * height * width * 3:
            raise DatasetError(f"{blob_path} has wrong size")
        images = images.reshape(n, height, width, 3)
    elif fmt == "png16":
        img_dir = os.path.join(out_root, "images")
        h = hashlib.sha256()
        stack = []
        for i in range(n):
            path = os.path.join(img_dir, f"{i:06d}.png")
            with open(path, "rb") as fh:
                h.update(fh.read())
            stack.append(read_image(path))
        if h.hexdigest() != header["payload_sha256"]["images/"]:
            raise DatasetError(
                f"{img_dir} does not match its recorded hash",
                ident="tampered-dataset",
            )
        images = np.stack(stack)
    else:
        raise DatasetError(f"unknown dataset format {fmt!r}")
    ds = LabeledDataset(
        images=images,
        labels=np.array(header["labels"], dtype=np.int64),
        n_classes=header["n_classes"],
        name=header["name"],
    )
    manifest_path = os.path.join(out_root, "manifest.json")
    manifest = None
    if os.path.isfile(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    if require_manifest and manifest is None:
        raise DatasetError(f"{out_root} has no manifest.json")
    return ds, manifest


def load_poisoned(out_root):
    """Load a poisoned dataset; the manifest is required and hashes verified."""
    return load_saved(out_root, require_manifest=True)

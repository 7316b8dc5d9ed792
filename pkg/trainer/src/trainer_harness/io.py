"""Readers/writers for the poisoning toolkit's on-disk interchange formats.

The toolkit emits datasets as a directory holding ``dataset.json`` (header
with shape, labels, and payload hashes), ``images.f32`` (raw little-endian
float32, row-major, (n, H, W, 3)), and optionally ``manifest.json``.  This
module re-implements those formats from their documentation; the harness
never imports the toolkit itself.
"""

import csv
import hashlib
import json
import os

import numpy as np


class FormatError(RuntimeError):
    pass


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_dataset_dir(root, require_manifest=False):
    """Load (images, labels, n_classes, manifest_or_None); verifies hashes."""
    header_path = os.path.join(root, "dataset.json")
    if not os.path.isfile(header_path):
        raise FormatError(f"{root} has no dataset.json")
    with open(header_path) as fh:
        header = json.load(fh)
    if header.get("format") != "raw":
        raise FormatError(
            f"harness only consumes raw-format datasets, got {header.get('format')!r}"
        )
    blob_path = os.path.join(root, "images.f32")
    want = header["payload_sha256"]["images.f32"]
    got = _sha256_file(blob_path)
    if want != got:
        raise FormatError(f"hash mismatch for {blob_path}: aborting")
    images = np.fromfile(blob_path, dtype="<f4")
    n, h, w = header["n"], header["height"], header["width"]
    if images.size != n * h * w * 3:
        raise FormatError(f"{blob_path} has wrong size")
    images = images.reshape(n, h, w, 3)
    labels = np.asarray(header["labels"], dtype=np.int64)
    manifest = None
    manifest_path = os.path.join(root, "manifest.json")
    if os.path.isfile(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    if require_manifest and manifest is None:
        raise FormatError(f"{root} has no manifest.json")
    return images, labels, int(header["n_classes"]), manifest


def write_predictions_csv(path, indices, predictions):
    """index,pred rows, the metrics CLI's prediction format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "pred"])
        for i, p in zip(indices, predictions):
            writer.writerow([int(i), int(p)])


def write_labels_csv(path, indices, labels):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        for i, v in zip(indices, labels):
            writer.writerow([int(i), int(v)])


def write_features(path, feats):
    """Raw feature matrix: <stem>.json header + <stem>.f32 blob."""
    feats = np.ascontiguousarray(feats, dtype="<f4")
    stem = path[:-5] if path.endswith(".json") else path
    blob = stem + ".f32"
    feats.tofile(blob)
    header = {
        "rows": int(feats.shape[0]),
        "cols": int(feats.shape[1]),
        "dtype": "<f4",
        "file": os.path.basename(blob),
        "sha256": hashlib.sha256(feats.tobytes()).hexdigest(),
    }
    with open(stem + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    return stem + ".json"

"""Frequency-domain trigger construction.

A trigger image is decomposed like a victim image, then every sub-spectrogram
is flattened to its pooled mean (the "average transformation"): one scalar per
region, broadcast over the block.  This keeps each region's dominant content
while discarding the texture that would make the injected trigger visible.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError, GeometryError
from .wavelets import (
    Spectrogram,
    check_image,
    region_paths,
    region_slice,
    wavelet_spec,
    wpd,
)


@dataclass
class FrequencyTrigger:
    spec: Spectrogram  # averaged spectrogram; every region a constant block
    per_region_means: dict  # path -> scalar (or [r, g, b] when per_channel)
    per_channel: bool = False


def bilinear_resize(img, out_h, out_w):
    """Bilinear resize, half-pixel centers, edges clamped."""
    img = check_image(img)
    h, w = img.shape[:2]
    sy = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    sx = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
    x0c, x1c = np.clip(x0, 0, w - 1), np.clip(x0 + 1, 0, w - 1)
    top = img[y0c][:, x0c] * (1 - fx) + img[y0c][:, x1c] * fx
    bot = img[y1c][:, x0c] * (1 - fx) + img[y1c][:, x1c] * fx
    return top * (1 - fy) + bot * fy


def average_transform(spec, per_channel=False):
    """Replace every region with its mean; pooled over space and channels.

    Idempotent; with ``per_channel`` the mean is taken per channel instead of
    pooled (ablation variant, not the default).
    """
    out = spec.copy()
    for path in region_paths(spec.level):
        rows, cols = region_slice(spec.grid_size, path)
        block = out.coeffs[rows, cols, :]
        if per_channel:
            mean = block.mean(axis=(0, 1))
            if np.all(block == block[0, 0, :]):  # exact idempotence
                mean = block[0, 0, :].copy()
        else:
            mean = block.mean()
            if np.all(block == block.flat[0]):
                mean = block.flat[0]
        out.coeffs[rows, cols, :] = mean
    return out


def make_frequency_trigger(trigger_img, target_size, level, ws, per_channel=False):
    """Resize (bilinear) to the victim size, decompose, average-transform."""
    img = check_image(trigger_img)
    h, w = img.shape[:2]
    if min(h, w) <= 1:
        raise GeometryError("trigger image is degenerate (<= 1 px per side)")
    if (h, w) != (target_size, target_size):
        img = bilinear_resize(img, target_size, target_size)
    averaged = average_transform(wpd(img, level, ws), per_channel=per_channel)
    means = {}
    for path in region_paths(level):
        rows, cols = region_slice(averaged.grid_size, path)
        block = averaged.coeffs[rows, cols, :]
        if per_channel:
            means[path] = [float(v) for v in block[0, 0, :]]
        else:
            means[path] = float(block[0, 0, 0])
    return FrequencyTrigger(
        spec=averaged, per_region_means=means, per_channel=per_channel
    )


def trigger_sha256(trig):
    return hashlib.sha256(
        np.ascontiguousarray(trig.spec.coeffs, dtype="<f8").tobytes()
    ).hexdigest()


def _paths_for(path):
    stem = path[:-5] if path.endswith(".json") else path
    return stem + ".json", stem + ".bin"


def save_frequency_trigger(trig, path):
    """Write <stem>.json metadata plus the raw float64 grid in <stem>.bin."""
    json_path, bin_path = _paths_for(path)
    blob = np.ascontiguousarray(trig.spec.coeffs, dtype="<f8").tobytes()
    with open(bin_path, "wb") as fh:
        fh.write(blob)
    meta = {
        "kind": "frequency-trigger",
        "level": trig.spec.level,
        "wavelet": trig.spec.wavelet.name,
        "pad": trig.spec.wavelet.pad,
        "original_size": trig.spec.original_size,
        "grid_size": trig.spec.grid_size,
        "per_channel": trig.per_channel,
        "per_region_means": trig.per_region_means,
        "coeffs_file": os.path.basename(bin_path),
        "coeffs_sha256": hashlib.sha256(blob).hexdigest(),
    }
    with open(json_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return json_path


def load_frequency_trigger(path):
    json_path, _ = _paths_for(path)
    with open(json_path) as fh:
        meta = json.load(fh)
    if meta.get("kind") != "frequency-trigger":
        raise DatasetError(f"{json_path} is not a frequency trigger file")
    bin_path = os.path.join(os.path.dirname(json_path), meta["coeffs_file"])
    with open(bin_path, "rb") as fh:
        blob = fh.read()
    if hashlib.sha256(blob).hexdigest() != meta["coeffs_sha256"]:
        raise DatasetError(
            f"trigger payload {bin_path} does not match its recorded hash",
            ident="tampered-trigger",
        )
    grid = meta["grid_size"]
    coeffs = np.frombuffer(blob, dtype="<f8").reshape(grid, grid, 3).copy()
    spec = Spectrogram(
        coeffs=coeffs,
        level=meta["level"],
        wavelet=wavelet_spec(meta["wavelet"], meta["pad"]),
        original_size=meta["original_size"],
    )
    return FrequencyTrigger(
        spec=spec,
        per_region_means=meta["per_region_means"],
        per_channel=meta["per_channel"],
    )

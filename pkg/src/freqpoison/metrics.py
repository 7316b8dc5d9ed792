"""Scalar evaluation math: attack, detection, stealth, and distance-KDE.

Attack metrics score prediction files; detection metrics score externally
supplied confusion counts; stealth metrics compare image pairs; the KDE
summarizes how close poisoned-test features sit to poisoned-train features.
"""

import csv
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import MetricError


# ---------------------------------------------------------------- attack


@dataclass
class PredictionSet:
    predicted: np.ndarray
    truth: object  # per-sample labels, or a single target label
    kind: str  # "clean" | "poisoned"

    def __post_init__(self):
        self.predicted = np.asarray(self.predicted, dtype=np.int64)
        if self.kind not in ("clean", "poisoned"):
            raise MetricError(f"unknown prediction kind {self.kind!r}")
        if not np.isscalar(self.truth) and self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=np.int64)
            if self.truth.shape != self.predicted.shape:
                raise MetricError("predicted/truth length mismatch")


def clean_accuracy(pset):
    """Fraction of clean predictions matching their labels."""
    if pset.kind != "clean":
        raise MetricError("clean_accuracy expects kind='clean'")
    if pset.predicted.size == 0:
        raise MetricError("empty prediction set")
    return float(np.mean(pset.predicted == pset.truth))


def asr(pset, target):
    """Fraction of poisoned samples predicted as the target class."""
    if pset.kind != "poisoned":
        raise MetricError("asr expects kind='poisoned'")
    if pset.predicted.size == 0:
        raise MetricError("empty prediction set")
    return float(np.mean(pset.predicted == int(target)))


# ---------------------------------------------------------------- detection


@dataclass
class DetectionCounts:
    tp: int
    fp: int
    fn: int
    tn: int
    omega: float = 1.0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if v < 0 or int(v) != v:
                raise MetricError(f"count {name}={v} must be a non-negative integer")
        if not (self.omega > 0 and np.isfinite(self.omega)):
            raise MetricError("omega must be a positive real")


@dataclass
class DetectionScores:
    tpr: object  # float, or None when TP+FN = 0
    fpr: object  # float, or None when FP+TN = 0
    f1_omega: object  # 2TP / (2TP + FP + omega*FN), None when denominator 0
    omega: float


def detection_scores(counts):
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    tpr = tp / (tp + fn) if (tp + fn) > 0 else None
    fpr = fp / (fp + tn) if (fp + tn) > 0 else None
    denom = 2 * tp + fp + counts.omega * fn
    f1 = (2 * tp / denom) if denom > 0 else None
    return DetectionScores(tpr=tpr, fpr=fpr, f1_omega=f1, omega=counts.omega)


# ---------------------------------------------------------------- stealth


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def _gaussian_window(size, sigma):
    half = size // 2
    ax = np.arange(size) - half
    w = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    return w / w.sum()


def ssim(a, b, window_size=11, sigma=1.5, data_range=1.0):
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), valid positions
    only, computed per channel and averaged."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[0], a.shape[1]) < window_size:
        raise MetricError(
            f"image smaller than the {window_size}x{window_size} SSIM window"
        )
    win = _gaussian_window(window_size, sigma)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    vals = []
    for c in range(a.shape[2]):
        pa = sliding_window_view(a[:, :, c], win.shape)
        pb = sliding_window_view(b[:, :, c], win.shape)
        mu_a = np.tensordot(pa, win, axes=([2, 3], [0, 1]))
        mu_b = np.tensordot(pb, win, axes=([2, 3], [0, 1]))
        var_a = np.tensordot(pa**2, win, axes=([2, 3], [0, 1])) - mu_a**2
        var_b = np.tensordot(pb**2, win, axes=([2, 3], [0, 1])) - mu_b**2
        cov = np.tensordot(pa * pb, win, axes=([2, 3], [0, 1])) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


# ---------------------------------------------------------------- distance KDE


@dataclass
class DensityCurve:
    xs: np.ndarray
    ys: np.ndarray
    bandwidth: float
    bandwidth_fallback: bool = False


def averaged_l2_distances(train_feats, test_feats):
    """Per test row, the mean L2 distance to every train row."""
    train = np.asarray(train_feats, dtype=np.float64)
    test = np.asarray(test_feats, dtype=np.float64)
    if train.ndim != 2 or test.ndim != 2:
        raise MetricError("feature matrices must be 2D")
    if train.shape[1] != test.shape[1]:
        raise MetricError(
            f"feature dimension mismatch: {train.shape[1]} vs {test.shape[1]}"
        )
    if train.shape[0] < 1 or test.shape[0] < 1:
        raise MetricError("feature matrices must have at least one row")
    diffs = test[:, None, :] - train[None, :, :]
    return np.sqrt((diffs**2).sum(axis=2)).mean(axis=1)


def silverman_bandwidth(values):
    values = np.asarray(values, dtype=np.float64)
    std = values.std()
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    return 0.9 * spread * values.size ** (-0.2)


_FALLBACK_BANDWIDTH = 1e-2


def l2_kde(train_feats, test_feats, bandwidth="auto", grid_points=512):
    """Gaussian KDE of the per-test-sample averaged L2 distances.

    Mass is reflected at zero so the density of a non-negative quantity still
    integrates to one; the grid spans [0, max(1.1 * max distance, tails)].
    """
    dists = averaged_l2_distances(train_feats, test_feats)
    fallback = False
    if bandwidth == "auto":
        bw = silverman_bandwidth(dists)
        if not (bw > 0 and np.isfinite(bw)):
            bw = _FALLBACK_BANDWIDTH
            fallback = True
    else:
        bw = float(bandwidth)
        if not (bw > 0 and np.isfinite(bw)):
            raise MetricError("bandwidth must be a positive real")
    grid_points = max(int(grid_points), 256)
    top = max(1.1 * float(dists.max()), float(dists.max()) + 4 * bw, 8 * bw)
    xs = np.linspace(0.0, top, grid_points)
    norm = 1.0 / (dists.size * bw * np.sqrt(2 * np.pi))
    z = (xs[:, None] - dists[None, :]) / bw
    zr = (xs[:, None] + dists[None, :]) / bw
    ys = norm * (np.exp(-0.5 * z**2) + np.exp(-0.5 * zr**2)).sum(axis=1)
    return DensityCurve(xs=xs, ys=ys, bandwidth=float(bw), bandwidth_fallback=fallback)


# ---------------------------------------------------------------- file formats


def write_features_csv(path, feats):
    feats = np.asarray(feats, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(feats.shape[1])])
        for row in feats:
            writer.writerow([repr(float(v)) for v in row])


def write_features_raw(path, feats):
    """<stem>.json header {rows, cols} plus a row-major float32 blob."""
    feats = np.ascontiguousarray(feats, dtype="<f4")
    stem = path[:-5] if path.endswith(".json") else path
    blob_path = stem + ".f32"
    feats.tofile(blob_path)
    header = {
        "rows": int(feats.shape[0]),
        "cols": int(feats.shape[1]),
        "dtype": "<f4",
        "file": os.path.basename(blob_path),
        "sha256": hashlib.sha256(feats.tobytes()).hexdigest(),
    }
    with open(stem + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    return stem + ".json"


def read_features(path):
    """Load a feature matrix from .csv or from a raw header (.json)."""
    if path.endswith(".csv"):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise MetricError(f"feature CSV {path} has no data rows")
        data = np.array([[float(v) for v in row] for row in rows[1:]])
        return data
    if path.endswith(".json"):
        with open(path) as fh:
            header = json.load(fh)
        blob_path = os.path.join(os.path.dirname(path), header["file"])
        feats = np.fromfile(blob_path, dtype=header.get("dtype", "<f4"))
        if feats.size != header["rows"] * header["cols"]:
            raise MetricError(f"feature blob {blob_path} has wrong size")
        feats = feats.reshape(header["rows"], header["cols"]).astype(np.float64)
        want = header.get("sha256")
        got = hashlib.sha256(feats.astype("<f4").tobytes()).hexdigest()
        if want is not None and want != got:
            raise MetricError(
                f"feature blob {blob_path} does not match its recorded hash",
                ident="tampered-features",
            )
        return feats
    raise MetricError(f"unsupported feature file {path} (use .csv or .json)")


def write_predictions_csv(path, indices, predictions):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "pred"])
        for i, p in zip(indices, predictions):
            writer.writerow([int(i), int(p)])


def read_predictions_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["index", "pred"]:
        raise MetricError(f"{path} is not an index,pred prediction CSV")
    idx = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
    preds = np.array([int(r[1]) for r in rows[1:]], dtype=np.int64)
    return idx, preds


def write_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, y in zip(curve.xs, curve.ys):
            writer.writerow([repr(float(x)), repr(float(y))])

"""Per-region effectiveness statistics over a dataset and key-region selection.

The effectiveness of a region is the magnitude of its dataset-wide mean
coefficient (``absolute_average``), or the mean of the coefficient magnitudes
(``average_absolute``).  Averaging before taking the absolute value lets
symmetric noise cancel, which is why absolute_average is the default for
selecting the regions a classifier is likely to rely on.

Selection picks, inside every parent region (distinct length-(N-1) prefix),
the child with the largest effectiveness; the global lowest-frequency region
"a...a" is never a candidate.  Ties break toward the canonical character
order a < h < v < d.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DatasetError
from .wavelets import (
    REGION_CHARS,
    lowest_frequency_path,
    path_sort_key,
    region_paths,
    region_slice,
    wpd_batch,
)

MODES = ("absolute_average", "average_absolute")

_MODE_ALIASES = {
    "absolute_average": "absolute_average",
    "absavg": "absolute_average",
    "average_absolute": "average_absolute",
    "avgabs": "average_absolute",
}


def normalize_mode(mode):
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise ConfigError(f"unknown aggregation mode {mode!r}") from None


def effectiveness_of_coefficients(values, mode):
    """Aggregate a flat list of coefficients under one mode.

    absolute_average: |mean(values)|; average_absolute: mean(|values|).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DatasetError("cannot aggregate an empty coefficient list")
    if normalize_mode(mode) == "absolute_average":
        return float(abs(values.mean()))
    return float(np.abs(values).mean())


@dataclass
class EffectivenessMap:
    level: int
    mode: str
    entries: dict  # region path -> E
    n_samples: int
    wavelet_name: str
    pad: int

    def __post_init__(self):
        if len(self.entries) != 4**self.level:
            raise DatasetError(
                f"expected {4 ** self.level} regions, got {len(self.entries)}"
            )
        for path, value in self.entries.items():
            if not np.isfinite(value) or value < 0:
                raise DatasetError(f"effectiveness for {path!r} is invalid: {value}")


@dataclass(frozen=True)
class RegionSelection:
    regions: tuple  # region paths, canonical order, one per parent
    excluded: str  # the lowest-frequency path
    source: str  # identifier of the map this came from


class _KahanSums:
    """Compensated per-region running sums so dataset order barely matters."""

    def __init__(self, n):
        self.total = np.zeros(n)
        self.comp = np.zeros(n)

    def add(self, values):
        y = values - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t


def _iter_batches(dataset, batch_size=256):
    buf = []
    for img in dataset:
        buf.append(np.asarray(img, dtype=np.float64))
        if len(buf) == batch_size:
            yield buf
            buf = []
    if buf:
        yield buf


def _accumulate(dataset, level, ws, batch_size=256):
    """One streaming pass; returns (raw sums, abs sums, n_samples, side)."""
    paths = region_paths(level)
    raw = _KahanSums(len(paths))
    mag = _KahanSums(len(paths))
    n_seen = 0
    shape = None
    slices = None
    for batch in _iter_batches(dataset, batch_size):
        for offset, img in enumerate(batch):
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise DatasetError(
                    f"sample {n_seen + offset} has shape {img.shape}, "
                    f"expected {shape}"
                )
        coeffs = wpd_batch(np.stack(batch), level, ws)
        if slices is None:
            slices = [region_slice(coeffs.shape[1], p) for p in paths]
        raw_b = np.empty((len(batch), len(paths)))
        mag_b = np.empty((len(batch), len(paths)))
        for r, (rows, cols) in enumerate(slices):
            block = coeffs[:, rows, cols, :]
            raw_b[:, r] = block.sum(axis=(1, 2, 3))
            mag_b[:, r] = np.abs(block).sum(axis=(1, 2, 3))
        for i in range(len(batch)):
            raw.add(raw_b[i])
            mag.add(mag_b[i])
        n_seen += len(batch)
    if n_seen == 0:
        raise DatasetError("effectiveness requires a non-empty dataset")
    side = (shape[0] + 2 * ws.pad) >> level
    return raw.total, mag.total, n_seen, side


def effectiveness(dataset, level, ws, mode="absolute_average", batch_size=256):
    """Streaming per-region effectiveness over an iterable of images."""
    mode = normalize_mode(mode)
    raw, mag, n, side = _accumulate(dataset, level, ws, batch_size)
    denom = n * side * side * 3
    totals = np.abs(raw) if mode == "absolute_average" else mag
    entries = {p: float(v / denom) for p, v in zip(region_paths(level), totals)}
    return EffectivenessMap(
        level=level,
        mode=mode,
        entries=entries,
        n_samples=n,
        wavelet_name=ws.name,
        pad=ws.pad,
    )


def select_key_regions(emap):
    """One maximal-E child per parent region, lowest frequency excluded."""
    level = emap.level
    excluded = lowest_frequency_path(level)
    chosen = []
    parents = region_paths(level - 1) if level > 1 else [""]
    for parent in parents:
        candidates = [
            parent + c for c in REGION_CHARS if parent + c != excluded
        ]
        best_val = max(emap.entries[p] for p in candidates)
        # deterministic tie-break: earliest in a < h < v < d order
        best = min(
            (p for p in candidates if emap.entries[p] == best_val),
            key=path_sort_key,
        )
        chosen.append(best)
    chosen.sort(key=path_sort_key)
    source = f"{emap.mode}/{emap.wavelet_name}/L{emap.pad}/N{level}/n{emap.n_samples}"
    return RegionSelection(regions=tuple(chosen), excluded=excluded, source=source)


@dataclass
class AggregationComparison:
    absolute_average: EffectivenessMap
    average_absolute: EffectivenessMap
    selection_absolute_average: RegionSelection
    selection_average_absolute: RegionSelection
    deltas: dict  # region -> average_absolute E minus absolute_average E


def compare_aggregations(dataset, level, ws, batch_size=256):
    """Both aggregation modes over one dataset, with per-region deltas."""
    raw, mag, n, side = _accumulate(dataset, level, ws, batch_size)
    denom = n * side * side * 3
    paths = region_paths(level)
    common = dict(level=level, n_samples=n, wavelet_name=ws.name, pad=ws.pad)
    absavg = EffectivenessMap(
        mode="absolute_average",
        entries={p: float(abs(v) / denom) for p, v in zip(paths, raw)},
        **common,
    )
    avgabs = EffectivenessMap(
        mode="average_absolute",
        entries={p: float(v / denom) for p, v in zip(paths, mag)},
        **common,
    )
    deltas = {p: avgabs.entries[p] - absavg.entries[p] for p in paths}
    return AggregationComparison(
        absolute_average=absavg,
        average_absolute=avgabs,
        selection_absolute_average=select_key_regions(absavg),
        selection_average_absolute=select_key_regions(avgabs),
        deltas=deltas,
    )


def analysis_report(emap, selection):
    """JSON-ready document: map plus selection in one object."""
    return {
        "level": emap.level,
        "wavelet": emap.wavelet_name,
        "pad": emap.pad,
        "mode": emap.mode,
        "n_samples": emap.n_samples,
        "regions": {p: emap.entries[p] for p in region_paths(emap.level)},
        "selected": list(selection.regions),
        "excluded": selection.excluded,
    }

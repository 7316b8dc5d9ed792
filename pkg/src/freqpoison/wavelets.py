"""2D wavelet packet decomposition with exact reconstruction.

An image is padded once by symmetric reflection (``L`` pixels per edge) and
then run through an orthonormal separable filter bank, recursively splitting
*every* region at every level.  Filtering uses circular (periodized)
convolution on the padded grid, so each level halves both spatial dimensions
exactly and the transform is orthogonal: perfect reconstruction and energy
conservation hold to float64 round-off for any grid whose size is divisible
by ``2**level``.

Coefficients live in a single ``(M+2L, M+2L, 3)`` grid with the usual
quadrant recursion; one level of a tile lays out as

    +----+----+
    | a  | h  |      a: lowpass both axes        h: highpass horizontal
    +----+----+      v: highpass vertical        d: highpass both
    | v  | d  |
    +----+----+

so a region of an N-level decomposition is addressed by a length-N path over
``{a, h, v, d}``, outermost quadrant first ("aa..a" is the lowest-frequency
region).  Images are ``(H, W, 3)`` arrays, channel-last, values in [0, 1]
for 8-bit sources (byte value / 255).
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import GeometryError, RegionError

REGION_CHARS = "ahvd"

# Daubechies scaling coefficients (orthonormal: sum = sqrt(2), sum of
# squares = 1), derived by spectral factorization at 60-digit precision and
# rounded to float64.
_DAUBECHIES_LOWPASS = {
    "db2": [
        0.48296291314453416,
        0.8365163037378079,
        0.2241438680420134,
        -0.12940952255126037,
    ],
    "db3": [
        0.33267055295008263,
        0.8068915093110925,
        0.45987750211849154,
        -0.13501102001025458,
        -0.08544127388202666,
        0.03522629188570953,
    ],
    "db4": [
        0.2303778133088965,
        0.7148465705529157,
        0.6308807679298589,
        -0.027983769416859854,
        -0.18703481171909309,
        0.030841381835560764,
        0.0328830116668852,
        -0.010597401785069032,
    ],
}

_SQRT2 = float(np.sqrt(2.0))


def _qmf(lowpass):
    """Quadrature-mirror highpass: g[n] = (-1)^n h[len-1-n]."""
    g = lowpass[::-1].copy()
    g[1::2] *= -1.0
    return g


@dataclass(frozen=True, eq=False)
class WaveletSpec:
    """Filter pair plus the per-edge pad width used before decomposition."""

    name: str
    lowpass: np.ndarray
    highpass: np.ndarray
    pad: int

    def __post_init__(self):
        lo, hi = self.lowpass, self.highpass
        if lo.ndim != 1 or hi.ndim != 1 or lo.size != hi.size or lo.size % 2:
            raise GeometryError("wavelet filters must be 1D, equal and even length")
        if abs(float(lo @ lo) - 1.0) > 1e-12 or abs(float(hi @ hi) - 1.0) > 1e-12:
            raise GeometryError("wavelet filters must be orthonormal (unit energy)")
        if abs(float(lo.sum()) - _SQRT2) > 1e-12:
            raise GeometryError("lowpass taps must sum to sqrt(2)")
        if self.pad < 1:
            raise GeometryError("pad must be >= 1")


def wavelet_spec(name="db3", pad=2):
    """Build a WaveletSpec for one of db2/db3/db4.

    ``pad`` is the symmetric-reflection border width L (default 2).
    """
    if name not in _DAUBECHIES_LOWPASS:
        raise GeometryError(
            f"unknown wavelet {name!r}; supported: {sorted(_DAUBECHIES_LOWPASS)}"
        )
    lo = np.asarray(_DAUBECHIES_LOWPASS[name], dtype=np.float64)
    lo.flags.writeable = False
    hi = _qmf(lo.copy())
    hi.flags.writeable = False
    return WaveletSpec(name=name, lowpass=lo, highpass=hi, pad=int(pad))


@dataclass(eq=False)
class Spectrogram:
    """Full coefficient grid of an N-level decomposition of one image."""

    coeffs: np.ndarray  # (M+2L, M+2L, 3) float64, quadrant-recursive layout
    level: int
    wavelet: WaveletSpec
    original_size: int  # M, pixels per side before padding

    def __post_init__(self):
        g = self.coeffs.shape
        if len(g) != 3 or g[0] != g[1] or g[2] != 3:
            raise GeometryError(f"spectrogram grid must be (G, G, 3), got {g}")
        if self.level < 1 or g[0] % (1 << self.level):
            raise GeometryError(
                f"grid size {g[0]} not divisible by 2^{self.level}"
            )
        if g[0] != self.original_size + 2 * self.wavelet.pad:
            raise GeometryError("grid size inconsistent with original_size + 2*pad")

    @property
    def grid_size(self):
        return self.coeffs.shape[0]

    @property
    def side(self):
        """Pixels per side of one sub-spectrogram."""
        return self.grid_size >> self.level

    @property
    def n_regions(self):
        return 4 ** self.level

    def copy(self):
        return Spectrogram(
            coeffs=self.coeffs.copy(),
            level=self.level,
            wavelet=self.wavelet,
            original_size=self.original_size,
        )


def check_image(img):
    """Validate an (H, W, 3) finite real image and return it as float64."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise GeometryError(f"image must be (H, W, 3), got {arr.shape}")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise GeometryError("image contains non-finite values")
    return arr


def pad_image(img, pad):
    """Pad by symmetric reflection (edge pixel not repeated).

    A row [a, b, c] padded by 1 becomes [b, a, b, c, b].
    """
    img = check_image(img)
    if pad < 0:
        raise GeometryError("pad must be >= 0")
    if pad == 0:
        return img.copy()
    h, w = img.shape[:2]
    if pad >= min(h, w):
        raise GeometryError(
            f"pad {pad} >= min image side {min(h, w)}: reflection undefined",
            ident="pad-too-large",
        )
    return np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")


def smallest_valid_pad(size, level, at_least=1):
    """Smallest pad L >= at_least with (size + 2L) divisible by 2**level."""
    step = 1 << level
    pad = max(1, at_least)
    while (size + 2 * pad) % step:
        pad += 1
    return pad


@lru_cache(maxsize=None)
def _analysis_matrix(name, size):
    """Orthogonal one-level analysis matrix [lowpass rows; highpass rows].

    Row k of the top half is the lowpass filter placed at offset 2k with
    circular wrap; the stacked matrix is orthogonal for any even size.
    """
    lo = np.asarray(_DAUBECHIES_LOWPASS[name], dtype=np.float64)
    hi = _qmf(lo.copy())
    half = size // 2
    mat = np.zeros((size, size))
    cols = (2 * np.arange(half)[:, None] + np.arange(lo.size)[None, :]) % size
    np.add.at(mat[:half], (np.arange(half)[:, None], cols), lo[None, :])
    np.add.at(mat[half:], (np.arange(half)[:, None], cols), hi[None, :])
    mat.flags.writeable = False
    return mat


def _block_transform(grid, mat, side):
    """Apply ``mat`` separably to every aligned side x side tile."""
    g = grid.shape[-3]
    nb = g // side
    lead = grid.shape[:-3]
    x = grid.reshape(*lead, nb, side, nb, side, grid.shape[-1])
    y = np.einsum("ui,vj,...aibjc->...aubvc", mat, mat, x, optimize=True)
    return y.reshape(grid.shape)


def _validate_geometry(size, level, ws):
    grid = size + 2 * ws.pad
    if level < 1:
        raise GeometryError("level must be >= 1")
    if grid % (1 << level):
        raise GeometryError(
            f"padded size {grid} not divisible by 2^{level}; "
            f"smallest valid pad is {smallest_valid_pad(size, level, ws.pad)}"
        )
    return grid


def wpd_batch(imgs, level, ws):
    """Decompose a (B, M, M, 3) stack; returns (B, G, G, 3) coefficients."""
    imgs = np.asarray(imgs, dtype=np.float64)
    if imgs.ndim != 4 or imgs.shape[1] != imgs.shape[2] or imgs.shape[3] != 3:
        raise GeometryError(f"batch must be (B, M, M, 3), got {imgs.shape}")
    size = imgs.shape[1]
    grid = _validate_geometry(size, level, ws)
    pad = ws.pad
    coeffs = np.pad(imgs, ((0, 0), (pad, pad), (pad, pad), (0, 0)), mode="reflect")
    for step in range(level):
        side = grid >> step
        coeffs = _block_transform(coeffs, _analysis_matrix(ws.name, side), side)
    return coeffs


def iwpd_batch(coeffs, level, ws, original_size):
    """Inverse of wpd_batch; returns (B, M, M, 3) images (pad cropped)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    grid = coeffs.shape[1]
    for step in reversed(range(level)):
        side = grid >> step
        coeffs = _block_transform(coeffs, _analysis_matrix(ws.name, side).T, side)
    pad = ws.pad
    if grid != original_size + 2 * pad:
        raise GeometryError("coefficient grid inconsistent with original size")
    return coeffs[:, pad : grid - pad, pad : grid - pad, :]


def wpd(img, level, ws):
    """N-level wavelet packet decomposition of one image."""
    img = check_image(img)
    h, w = img.shape[:2]
    if h != w:
        raise GeometryError(f"image must be square, got {h}x{w}")
    coeffs = wpd_batch(img[None], level, ws)[0]
    return Spectrogram(coeffs=coeffs, level=level, wavelet=ws, original_size=h)


def iwpd(spec):
    """Invert the decomposition and crop the pad border; returns (M, M, 3)."""
    return iwpd_batch(
        spec.coeffs[None], spec.level, spec.wavelet, spec.original_size
    )[0]


def validate_region_path(path, level):
    if len(path) != level:
        raise RegionError(
            f"region path {path!r} has length {len(path)}, expected {level}"
        )
    bad = set(path) - set(REGION_CHARS)
    if bad:
        raise RegionError(f"region path {path!r} has invalid characters {bad}")


def region_paths(level):
    """All 4**level region paths in canonical order (a < h < v < d per char)."""
    return ["".join(p) for p in product(REGION_CHARS, repeat=level)]


def lowest_frequency_path(level):
    return "a" * level


def parent_path(path):
    return path[:-1]


def path_sort_key(path):
    """Sort key realizing the canonical a < h < v < d character order."""
    return tuple(REGION_CHARS.index(c) for c in path)


def region_slice(grid_size, path):
    """(row, col) slices of the region addressed by ``path``."""
    side = grid_size
    row = col = 0
    for c in path:
        side >>= 1
        if c in "vd":
            row += side
        if c in "hd":
            col += side
    return slice(row, row + side), slice(col, col + side)


def region_view(spec, path):
    """Writable (side, side, 3) view of one sub-spectrogram."""
    validate_region_path(path, spec.level)
    rows, cols = region_slice(spec.grid_size, path)
    return spec.coeffs[rows, cols, :]

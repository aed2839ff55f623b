"""1-scale 2-D Haar transform over multi-channel images.

The four analysis kernels are the outer products of the low-pass filter
l = [1, 1]/sqrt(2) and high-pass filter h = [1, -1]/sqrt(2), applied as
stride-2 cross-correlations. With this scaling the kernel set is
orthonormal, so the transform conserves energy and the synthesis step is
the plain transposed convolution with the same kernels.

Band naming follows the row-filter/column-filter product order: the `lh`
band uses the low-pass filter along rows and high-pass along columns.
Libraries disagree on this convention; here it matches the kernel tables
below literally.

Odd-sized inputs are reflect-padded by one row/column before analysis and
cropped back after synthesis; `SubBands.parent_shape` records the original
size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as eng
from .errors import DimensionError, DomainError

_SQ = 1.0 / np.sqrt(2.0)
_L = np.array([_SQ, _SQ])
_H = np.array([_SQ, -_SQ])

# Band order LL, LH, HL, HH; each kernel is f_row . f_col^T. The products
# are written out with exact +-1/2 entries so that high-pass kernels
# annihilate constants exactly (outer(_L, _H) would carry rounding from
# the two 1/sqrt(2) factors).
HAAR_KERNELS = 0.5 * np.array([
    [[1.0, 1.0], [1.0, 1.0]],
    [[1.0, -1.0], [1.0, -1.0]],
    [[1.0, 1.0], [-1.0, -1.0]],
    [[1.0, -1.0], [-1.0, 1.0]],
]).reshape(4, 1, 2, 2)

BAND_NAMES = ("ll", "lh", "hl", "hh")


@dataclass
class SubBands:
    """The four half-resolution bands of one image (each C x H/2 x W/2)."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray
    parent_shape: tuple

    def __iter__(self):
        return iter((self.ll, self.lh, self.hl, self.hh))

    def as_dict(self):
        return dict(zip(BAND_NAMES, self))


def _even_pad_t(x):
    """Reflect-pad a NCHW tensor so both spatial extents are even."""
    h, w = x.shape[2], x.shape[3]
    pb, pr = h % 2, w % 2
    if pb or pr:
        x = eng.pad2d(x, (0, pb, 0, pr), mode="reflect")
    return x


def dwt2_t(x):
    """Analysis on an NCHW tensor; returns (ll, lh, hl, hh) tensors.

    Expressed through the engine's strided convolution, so the transform is
    differentiable end to end. Spatial extents must be even.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"dwt2_t: spatial size {h}x{w} must be even")
    kern = eng.as_tensor(HAAR_KERNELS.astype(x.dtype))
    flat = eng.reshape(x, (n * c, 1, h, w))
    bands = eng.conv2d(flat, kern, stride=2, padding=0)
    out = []
    for i in range(4):
        band = eng.slice_channels(bands, i, i + 1)
        out.append(eng.reshape(band, (n, c, h // 2, w // 2)))
    return tuple(out)


def idwt2_t(ll, lh, hl, hh):
    """Synthesis back to NCHW; exact inverse of `dwt2_t`."""
    shapes = {t.shape for t in (ll, lh, hl, hh)}
    if len(shapes) != 1:
        raise DimensionError(f"idwt2_t: band shapes disagree: {sorted(shapes)}")
    n, c, h2, w2 = ll.shape
    kern = eng.as_tensor(HAAR_KERNELS.astype(ll.dtype))
    stacked = eng.concat_channels([
        eng.reshape(b, (n * c, 1, h2, w2)) for b in (ll, lh, hl, hh)])
    img = eng.conv_transpose2d(stacked, kern, stride=2, padding=0)
    return eng.reshape(img, (n, c, 2 * h2, 2 * w2))


def dwt2(image):
    """Decompose a C x H x W array into `SubBands`.

    Odd extents are reflect-padded by one row/column first; the original
    shape is kept in `parent_shape` so `idwt2` can crop the padding back.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"dwt2: expected C x H x W, got shape {arr.shape}")
    c, h, w = arr.shape
    if h == 0 or w == 0:
        raise DomainError("dwt2: zero-sized image")
    x = eng.as_tensor(arr[None])
    x = _even_pad_t(x)
    ll, lh, hl, hh = (b.data[0] for b in dwt2_t(x))
    return SubBands(ll, lh, hl, hh, parent_shape=(h, w))


def idwt2(bands):
    """Reconstruct the C x H x W array from `SubBands`."""
    ts = [eng.as_tensor(np.asarray(b, dtype=np.float64)[None]) for b in bands]
    img = idwt2_t(*ts).data[0]
    h, w = bands.parent_shape
    return img[:, :h, :w]


def visualize_band(band):
    """Color-code a detail band: |coefficient| from black through red to yellow.

    The band is reduced to a per-pixel magnitude (mean of |coeff| over
    channels), max-normalized, then mapped so intensity grows monotonically
    with the coefficient magnitude. An all-zero band maps to black.
    """
    arr = np.asarray(band, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    mag = np.abs(arr).mean(axis=0)
    peak = mag.max()
    v = mag / peak if peak > 0 else np.zeros_like(mag)
    r = np.clip(2.0 * v, 0.0, 1.0)
    g = np.clip(2.0 * v - 1.0, 0.0, 1.0)
    b = np.zeros_like(v)
    return np.stack([r, g, b])

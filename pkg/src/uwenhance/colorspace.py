"""Conversions among sRGB, HSV, and CIE Lab plus the 9-channel stack.

All functions take and return channel-first arrays (3 x h x w) and work in
float64. Pixel values are assumed sRGB-encoded; the Lab conversion applies
the IEC 61966-2-1 linearization and a D65 white point. The white point is
taken from the row sums of the sRGB matrix so the achromatic axis maps to
a = b = 0 exactly.

Hue is normalized to [0, 1) (degrees / 360). Out-of-range inputs are
clamped and tallied in `clamp_counts` rather than raised, since slightly
out-of-gamut values are routine after image arithmetic.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

# sRGB linear -> XYZ, D65 (IEC 61966-2-1)
_RGB2XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
# matrix-consistent white point: XYZ of linear RGB (1, 1, 1)
_WHITE = _RGB2XYZ.sum(axis=1)

_LAB_DELTA = 6.0 / 29.0

clamp_counts = {"rgb_out_of_range": 0, "lab_out_of_gamut": 0}


def reset_clamp_counts():
    for k in clamp_counts:
        clamp_counts[k] = 0


def _check3(arr, name):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DimensionError(f"{name}: expected 3 x h x w, got {arr.shape}")
    return arr


def _clamp01_counted(arr, counter):
    lo, hi = arr.min(), arr.max()
    if lo < 0.0 or hi > 1.0:
        clamp_counts[counter] += int(np.sum((arr < 0.0) | (arr > 1.0)))
        arr = np.clip(arr, 0.0, 1.0)
    return arr


def rgb_to_hsv(rgb):
    """Hexcone model; h in [0, 1), s and v in [0, 1]."""
    rgb = _clamp01_counted(_check3(rgb, "rgb_to_hsv"), "rgb_out_of_range")
    r, g, b = rgb
    v = rgb.max(axis=0)
    c = v - rgb.min(axis=0)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.zeros_like(v)
    m = (c > 0) & (v == r)
    h[m] = ((g - b)[m] / safe_c[m]) % 6.0
    m = (c > 0) & (v == g) & (v != r)
    h[m] = (b - r)[m] / safe_c[m] + 2.0
    m = (c > 0) & (v == b) & (v != r) & (v != g)
    h[m] = (r - g)[m] / safe_c[m] + 4.0
    return np.stack([h / 6.0, s, v])


def hsv_to_rgb(hsv):
    hsv = _check3(hsv, "hsv_to_rgb")
    h, s, v = hsv
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6)
    f = h6 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _lab_f(t):
    d3 = _LAB_DELTA ** 3
    return np.where(t > d3, np.cbrt(t), t / (3.0 * _LAB_DELTA ** 2) + 4.0 / 29.0)


def _lab_f_inv(ft):
    return np.where(ft > _LAB_DELTA, ft ** 3, 3.0 * _LAB_DELTA ** 2 * (ft - 4.0 / 29.0))


def rgb_to_lab(rgb):
    """sRGB in [0, 1] -> CIE Lab (L in [0, 100], a and b unbounded)."""
    rgb = _clamp01_counted(_check3(rgb, "rgb_to_lab"), "rgb_out_of_range")
    lin = _srgb_to_linear(rgb)
    xyz = np.einsum("ij,jhw->ihw", _RGB2XYZ, lin)
    fx, fy, fz = _lab_f(xyz / _WHITE[:, None, None])
    lum = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    return np.stack([lum, a, b])


def lab_to_rgb(lab):
    """Inverse of `rgb_to_lab`; out-of-gamut colors are clamped and tallied."""
    lab = _check3(lab, "lab_to_rgb")
    lum, a, b = lab
    fy = (lum + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xyz = _lab_f_inv(np.stack([fx, fy, fz])) * _WHITE[:, None, None]
    lin = np.einsum("ij,jhw->ihw", _XYZ2RGB, xyz)
    srgb = _linear_to_srgb(lin)
    return _clamp01_counted(srgb, "lab_out_of_gamut")


def multi_color_stack(rgb):
    """Stack [R, G, B, H, S, V, L/100, (a+128)/255, (b+128)/255] as 9 x h x w.

    Channels 0-2 are the untouched source so the stack stays invertible
    from them alone; the affine maps keep every channel in network-friendly
    [0, 1] range.
    """
    rgb = _check3(rgb, "multi_color_stack")
    hsv = rgb_to_hsv(rgb)
    lab = rgb_to_lab(rgb)
    lab_scaled = np.stack([
        lab[0] / 100.0,
        (lab[1] + 128.0) / 255.0,
        (lab[2] + 128.0) / 255.0,
    ])
    return np.concatenate([rgb, hsv, lab_scaled])

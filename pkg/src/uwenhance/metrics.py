"""Evaluation metrics: SSIM, UIQM, UCIQE, CIEDE2000, color-checker error.

All metrics are plain float64 numpy over channel-first images in [0, 1].
The UIQM and UCIQE combination coefficients are adopted constants from the
metrics' original publications and live in `UIQM_COEFFS` / `UCIQE_COEFFS`
so callers can override them through configuration. Absolute parity with
any particular published score table is out of scope; orderings and the
published CIEDE2000 verification pairs are what the tests pin down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .colorspace import rgb_to_lab
from .errors import DimensionError, DomainError
from .losses import gaussian_window

UIQM_COEFFS = (0.0282, 0.2953, 3.5753)
UCIQE_COEFFS = (0.4680, 0.2745, 0.2576)

_LUMA = np.array([0.299, 0.587, 0.114])  # Rec.601
_BLOCK = 8
_EPS = 1e-8


def _luminance(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(f"expected 3 x h x w image, got {image.shape}")
    return np.einsum("c,chw->hw", _LUMA, image)


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def ssim(x, y, data_range=1.0, return_map=False):
    """Single-scale SSIM on Rec.601 luminance, 11x11 Gaussian window.

    Windows are valid-mode: each map entry depends only on its own 11x11
    patch, so identical crops of both inputs reproduce the corresponding
    interior region of the full map exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"ssim: shapes {x.shape} and {y.shape} differ")
    lx, ly = _luminance(x), _luminance(y)
    win = gaussian_window()
    k2 = np.outer(win, win)
    if lx.shape[0] < 11 or lx.shape[1] < 11:
        raise DomainError(f"ssim: image {lx.shape} smaller than the 11x11 window")

    def filt(a):
        from numpy.lib.stride_tricks import sliding_window_view
        v = sliding_window_view(a, (11, 11))
        return np.einsum("ijuv,uv->ij", v, k2)

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mx, my = filt(lx), filt(ly)
    sxx = filt(lx * lx) - mx * mx
    syy = filt(ly * ly) - my * my
    sxy = filt(lx * ly) - mx * my
    smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / \
           ((mx * mx + my * my + c1) * (sxx + syy + c2))
    return (float(smap.mean()), smap) if return_map else float(smap.mean())


# ---------------------------------------------------------------------------
# UIQM
# ---------------------------------------------------------------------------

def _trimmed_mean(x, alpha=0.1):
    xs = np.sort(x.ravel())
    k = xs.size
    lo = int(np.ceil(alpha * k))
    hi = int(np.floor(alpha * k))
    trimmed = xs[lo:k - hi]
    return float(trimmed.mean()) if trimmed.size else 0.0


def uicm(image):
    """Colorfulness from the RG/YB opponent channels with trimmed stats."""
    image = np.asarray(image, dtype=np.float64)
    r, g, b = image
    rg = r - g
    yb = 0.5 * (r + g) - b
    mu_rg = _trimmed_mean(rg)
    mu_yb = _trimmed_mean(yb)
    var_rg = float(np.mean((rg - mu_rg) ** 2))
    var_yb = float(np.mean((yb - mu_yb) ** 2))
    return -0.0268 * np.hypot(mu_rg, mu_yb) + 0.1586 * np.sqrt(var_rg + var_yb)


def _sobel_mag(channel):
    cp = np.pad(channel, 1, mode="reflect")
    gx = (cp[2:, :-2] + 2 * cp[2:, 1:-1] + cp[2:, 2:]
          - cp[:-2, :-2] - 2 * cp[:-2, 1:-1] - cp[:-2, 2:])
    gy = (cp[:-2, 2:] + 2 * cp[1:-1, 2:] + cp[2:, 2:]
          - cp[:-2, :-2] - 2 * cp[1:-1, :-2] - cp[2:, :-2])
    return np.hypot(gx, gy)


def _blocks(a, size=_BLOCK):
    h, w = a.shape
    bh, bw = h // size, w // size
    if bh == 0 or bw == 0:
        return np.empty((0, size, size))
    core = a[:bh * size, :bw * size]
    return core.reshape(bh, size, bw, size).swapaxes(1, 2).reshape(-1, size, size)

def _eme(a, size=_BLOCK):
    """Enhancement measure: 2/(k1 k2) * sum log(max/min) over blocks."""
    blocks = _blocks(a, size)
    if blocks.shape[0] == 0:
        return 0.0
    mx = blocks.max(axis=(1, 2))
    mn = blocks.min(axis=(1, 2))
    ok = (mn > _EPS) & (mx > _EPS)
    if not ok.any():
        return 0.0
    return float(2.0 / blocks.shape[0] * np.sum(np.log(mx[ok] / mn[ok])))


def uism(image):
    """Sharpness: EME of Sobel-weighted channels, Rec.601-combined."""
    image = np.asarray(image, dtype=np.float64)
    total = 0.0
    for weight, channel in zip(_LUMA, image):
        total += weight * _eme(_sobel_mag(channel) * channel)
    return float(total)


def uiconm(image):
    """Contrast: log-AMEE of the luminance over 8x8 blocks."""
    lum = _luminance(image)
    blocks = _blocks(lum)
    if blocks.shape[0] == 0:
        return 0.0
    mx = blocks.max(axis=(1, 2))
    mn = blocks.min(axis=(1, 2))
    top = mx - mn
    bot = mx + mn
    ok = (top > _EPS) & (bot > _EPS)
    if not ok.any():
        return 0.0
    ratio = top[ok] / bot[ok]
    return float(-1.0 / blocks.shape[0] * np.sum(ratio * np.log(ratio)))


def uiqm(image, coeffs=UIQM_COEFFS):
    """c1*UICM + c2*UISM + c3*UIConM; a constant image scores exactly 0."""
    c1, c2, c3 = coeffs
    return c1 * uicm(image) + c2 * uism(image) + c3 * uiconm(image)


# ---------------------------------------------------------------------------
# UCIQE
# ---------------------------------------------------------------------------

def uciqe(image, coeffs=UCIQE_COEFFS):
    """c1*sigma_chroma + c2*luminance_contrast + c3*mean_saturation.

    Computed in CIE Lab with L/100 and a/128, b/128 normalization;
    luminance contrast is the 1st-to-99th percentile spread.
    """
    image = np.asarray(image, dtype=np.float64)
    lab = rgb_to_lab(image)
    lum = lab[0] / 100.0
    a = lab[1] / 128.0
    b = lab[2] / 128.0
    chroma = np.hypot(a, b)
    sigma_c = float(chroma.std())
    con_l = float(np.percentile(lum, 99) - np.percentile(lum, 1))
    sat = chroma / np.sqrt(chroma ** 2 + lum ** 2 + _EPS)
    mu_s = float(sat.mean())
    c1, c2, c3 = coeffs
    return c1 * sigma_c + c2 * con_l + c3 * mu_s


# ---------------------------------------------------------------------------
# CIEDE2000
# ---------------------------------------------------------------------------

def ciede2000(lab1, lab2):
    """CIEDE2000 color difference with all rotation/compensation terms.

    Accepts single Lab triples or arrays shaped (..., 3); vectorized over
    leading axes.
    """
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    if lab1.shape != lab2.shape or lab1.shape[-1] != 3:
        raise DimensionError(
            f"ciede2000: expected matching (..., 3) arrays, got {lab1.shape} vs {lab2.shape}")
    l1, a1, b1 = np.moveaxis(lab1, -1, 0)
    l2, a2, b2 = np.moveaxis(lab2, -1, 0)

    c1 = np.hypot(a1, b1)
    c2 = np.hypot(a2, b2)
    c_bar = 0.5 * (c1 + c2)
    g = 0.5 * (1.0 - np.sqrt(c_bar ** 7 / (c_bar ** 7 + 25.0 ** 7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = np.hypot(a1p, b1)
    c2p = np.hypot(a2p, b2)

    def hue(ap, bp):
        h = np.degrees(np.arctan2(bp, ap))
        h = np.where(h < 0, h + 360.0, h)
        return np.where((ap == 0) & (bp == 0), 0.0, h)

    h1p = hue(a1p, b1)
    h2p = hue(a2p, b2)

    dlp = l2 - l1
    dcp = c2p - c1p
    dh = h2p - h1p
    dh = np.where(dh > 180.0, dh - 360.0, dh)
    dh = np.where(dh < -180.0, dh + 360.0, dh)
    dh = np.where(c1p * c2p == 0, 0.0, dh)
    dhp = 2.0 * np.sqrt(c1p * c2p) * np.sin(np.radians(dh / 2.0))

    l_bar = 0.5 * (l1 + l2)
    cp_bar = 0.5 * (c1p + c2p)
    hsum = h1p + h2p
    habs = np.abs(h1p - h2p)
    h_bar = np.where(habs <= 180.0, 0.5 * hsum,
                     np.where(hsum < 360.0, 0.5 * (hsum + 360.0),
                              0.5 * (hsum - 360.0)))
    h_bar = np.where(c1p * c2p == 0, hsum, h_bar)

    t = (1.0
         - 0.17 * np.cos(np.radians(h_bar - 30.0))
         + 0.24 * np.cos(np.radians(2.0 * h_bar))
         + 0.32 * np.cos(np.radians(3.0 * h_bar + 6.0))
         - 0.20 * np.cos(np.radians(4.0 * h_bar - 63.0)))
    dtheta = 30.0 * np.exp(-(((h_bar - 275.0) / 25.0) ** 2))
    rc = 2.0 * np.sqrt(cp_bar ** 7 / (cp_bar ** 7 + 25.0 ** 7))
    lm50 = (l_bar - 50.0) ** 2
    sl = 1.0 + 0.015 * lm50 / np.sqrt(20.0 + lm50)
    sc = 1.0 + 0.045 * cp_bar
    sh = 1.0 + 0.015 * cp_bar * t
    rt = -np.sin(np.radians(2.0 * dtheta)) * rc

    de = np.sqrt((dlp / sl) ** 2 + (dcp / sc) ** 2 + (dhp / sh) ** 2
                 + rt * (dcp / sc) * (dhp / sh))
    return float(de) if de.ndim == 0 else de


def ciede2000_images(pred, ref):
    """Mean pixelwise CIEDE2000 between two RGB images in [0, 1]."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise DimensionError(
            f"ciede2000_images: shapes {pred.shape} and {ref.shape} differ")
    lab_p = np.moveaxis(rgb_to_lab(pred), 0, -1).reshape(-1, 3)
    lab_r = np.moveaxis(rgb_to_lab(ref), 0, -1).reshape(-1, 3)
    return float(np.mean(ciede2000(lab_p, lab_r)))


# ---------------------------------------------------------------------------
# color checker
# ---------------------------------------------------------------------------

def colorchecker_score(image, patch_layout, reference_colors):
    """Mean CIEDE2000 over chart patches against reference Lab values.

    `patch_layout` is a list of (top, left, height, width) boxes and
    `reference_colors` the matching list of Lab triples.
    """
    image = np.asarray(image, dtype=np.float64)
    if len(patch_layout) != len(reference_colors):
        raise DimensionError(
            f"{len(patch_layout)} patches but {len(reference_colors)} references")
    h, w = image.shape[1], image.shape[2]
    scores = []
    for (top, left, ph, pw), ref in zip(patch_layout, reference_colors):
        if top < 0 or left < 0 or top + ph > h or left + pw > w:
            raise DomainError(
                f"patch {ph}x{pw}@({top},{left}) outside image {h}x{w}")
        patch = image[:, top:top + ph, left:left + pw]
        mean_rgb = patch.mean(axis=(1, 2)).reshape(3, 1, 1)
        lab = rgb_to_lab(mean_rgb).reshape(3)
        scores.append(ciede2000(lab, np.asarray(ref, dtype=np.float64)))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    """Per-image scores plus aggregates; means are plain arithmetic means."""

    metric_names: list
    rows: list = field(default_factory=list)  # (image_name, {metric: value})
    skipped: list = field(default_factory=list)

    def add(self, name, values):
        self.rows.append((name, dict(values)))

    def aggregate(self):
        out = {}
        for m in self.metric_names:
            vals = [r[1][m] for r in self.rows if m in r[1]]
            out[m] = {
                "mean": float(np.mean(vals)) if vals else float("nan"),
                "std": float(np.std(vals)) if vals else float("nan"),
            }
        return out

    def to_tsv(self):
        lines = ["\t".join(["image"] + list(self.metric_names))]
        for name, values in self.rows:
            cells = [name] + [f"{values[m]:.6f}" if m in values else ""
                              for m in self.metric_names]
            lines.append("\t".join(cells))
        agg = self.aggregate()
        for tag in ("mean", "std"):
            cells = [f"__{tag}__"] + [f"{agg[m][tag]:.6f}" for m in self.metric_names]
            lines.append("\t".join(cells))
        lines.append("\t".join(["__skipped__", str(len(self.skipped))]
                               + [""] * (len(self.metric_names) - 1)))
        return "\n".join(lines) + "\n"

"""Training objectives: structure, detail, and adversarial losses.

All losses run through the autodiff engine and return scalar tensors. The
norms are mean-normalized per element so magnitudes stay comparable across
crop sizes; the loss weights assume this normalization.

MS-SSIM follows the multi-scale product form with an 11x11 Gaussian window
(sigma 1.5) and the canonical five scale weights. When the input is too
small for the requested scale count, scales are reduced (and the weights
renormalized); if even a single scale cannot fit the window, the window
shrinks to the largest odd size that fits. Both adjustments are reported
through `warnings`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import engine as eng
from .errors import DimensionError

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WIN_SIZE = 11
_WIN_SIGMA = 1.5


@dataclass
class LossWeights:
    """Weights of the combined objective and the structure-loss mix."""

    lambda1: float = 0.5
    lambda2: float = 1.0
    lambda3: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def _check_pair(pred, target, opname):
    if pred.shape != target.shape:
        raise DimensionError(
            f"{opname}: prediction {pred.shape} vs target {target.shape}")


def l1_loss(pred, target):
    """Mean absolute difference."""
    pred, target = eng.as_tensor(pred), eng.as_tensor(target)
    _check_pair(pred, target, "l1_loss")
    return eng.reduce_mean(eng.abs_(eng.sub(pred, target)))


def detail_loss(pred_band, target_band):
    """Root-mean-square difference for one high-frequency band.

    The caller sums this over the three detail bands. The epsilon keeps the
    square root differentiable when prediction and target coincide.
    """
    pred_band, target_band = eng.as_tensor(pred_band), eng.as_tensor(target_band)
    _check_pair(pred_band, target_band, "detail_loss")
    mse = eng.reduce_mean(eng.square(eng.sub(pred_band, target_band)))
    return eng.sqrt_(eng.add(mse, 1e-12))


def gaussian_window(size=_WIN_SIZE, sigma=_WIN_SIGMA):
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _ssim_components(x, y, data_range, win):
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_x = eng.sep_filter2d(x, win)
    mu_y = eng.sep_filter2d(y, win)
    mu_xx = eng.square(mu_x)
    mu_yy = eng.square(mu_y)
    mu_xy = eng.mul(mu_x, mu_y)
    sig_xx = eng.sub(eng.sep_filter2d(eng.square(x), win), mu_xx)
    sig_yy = eng.sub(eng.sep_filter2d(eng.square(y), win), mu_yy)
    sig_xy = eng.sub(eng.sep_filter2d(eng.mul(x, y), win), mu_xy)
    lum = eng.div(eng.add(eng.mul(mu_xy, 2.0), c1),
                  eng.add(eng.add(mu_xx, mu_yy), c1))
    cs = eng.div(eng.add(eng.mul(sig_xy, 2.0), c2),
                 eng.add(eng.add(sig_xx, sig_yy), c2))
    return eng.reduce_mean(eng.mul(lum, cs)), eng.reduce_mean(cs)


def _feasible_scales(h, w, requested):
    scales = 1
    while scales < requested and min(h, w) // (2 ** scales) >= _WIN_SIZE:
        scales += 1
    return scales


def ms_ssim(x, y, data_range=1.0, scales=5, scale_weights=MS_SSIM_WEIGHTS):
    """Multi-scale structural similarity of two NCHW tensors.

    Differentiable; the contrast terms are clamped at zero before the
    fractional powers so the product stays real.
    """
    x, y = eng.as_tensor(x), eng.as_tensor(y)
    _check_pair(x, y, "ms_ssim")
    if x.ndim != 4:
        raise DimensionError(f"ms_ssim: expected NCHW, got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    win_size = _WIN_SIZE
    if min(h, w) < win_size:
        m = min(h, w)
        win_size = m if m % 2 else m - 1  # largest odd window that fits
        warnings.warn(f"ms_ssim: window reduced to {win_size} for {h}x{w} input")
    feasible = _feasible_scales(h, w, scales) if win_size == _WIN_SIZE else 1
    if feasible < scales:
        warnings.warn(f"ms_ssim: scales reduced from {scales} to {feasible} "
                      f"for {h}x{w} input")
        scales = feasible
    weights = np.asarray(scale_weights[:scales], dtype=np.float64)
    weights = weights / weights.sum()
    win = gaussian_window(win_size)

    out = None
    for level in range(scales):
        ssim_v, cs_v = _ssim_components(x, y, data_range, win)
        if level < scales - 1:
            base = eng.relu(cs_v)
            x, y = eng.avg_pool2(x), eng.avg_pool2(y)
        else:
            base = eng.relu(ssim_v)
        # the 1e-12 floor keeps the fractional power finite when a clamped
        # contrast term lands exactly at zero
        factor = eng.pow_scalar(eng.add(base, 1e-12), float(weights[level]))
        out = factor if out is None else eng.mul(out, factor)
    return out


def ms_ssim_loss(pred_ll, target_ll, data_range=2.0, scales=5):
    """1 - MS-SSIM; data range defaults to the LL band's [0, 2] domain."""
    return eng.sub(1.0, ms_ssim(pred_ll, target_ll, data_range=data_range,
                                scales=scales))


def structure_loss(pred_ll, target_ll, alpha=0.5, data_range=2.0, scales=5):
    """Convex mix of the MS-SSIM loss and the L1 loss on the LL band."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"structure_loss: alpha {alpha} outside [0, 1]")
    ms = ms_ssim_loss(pred_ll, target_ll, data_range=data_range, scales=scales)
    l1 = l1_loss(pred_ll, target_ll)
    return eng.add(eng.mul(ms, alpha), eng.mul(l1, 1.0 - alpha))


def wgan_losses(critic_real, critic_fake):
    """Wasserstein pair: (critic_loss, generator_loss).

    critic_loss = mean(fake) - mean(real); the critic drives it down, which
    widens the score gap between real and generated images.
    generator_loss = -mean(fake).
    """
    critic_real = eng.as_tensor(critic_real)
    critic_fake = eng.as_tensor(critic_fake)
    mean_real = eng.reduce_mean(critic_real)
    mean_fake = eng.reduce_mean(critic_fake)
    critic_loss = eng.sub(mean_fake, mean_real)
    gen_loss = eng.neg(mean_fake)
    return critic_loss, gen_loss


def total_loss(l_s, l_d, l_adv, weights):
    """lambda1*L_S + lambda2*L_D + lambda3*L_adv; pass l_adv=None in phase 1."""
    out = eng.add(eng.mul(eng.as_tensor(l_s), weights.lambda1),
                  eng.mul(eng.as_tensor(l_d), weights.lambda2))
    if l_adv is not None:
        out = eng.add(out, eng.mul(eng.as_tensor(l_adv), weights.lambda3))
    return out

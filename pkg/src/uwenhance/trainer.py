"""Two-phase training: dual-stream pretraining, then adversarial fine-tuning.

Phase 1 minimizes lambda1*L_S + lambda2*L_D on wavelet band pairs. Phase 2
interleaves critic updates (weight-clipped Wasserstein critic) with
generator updates on the full objective. Determinism comes from deriving
one RNG per epoch from (seed, epoch): resuming from a checkpoint replays
the exact shuffle and crop sequence.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine as eng
from . import losses as L
from . import metrics as mx
from . import models
from . import wavelet as wv
from .errors import DataError, NumericsError, UsageError
from .imgio import load_image
from .synth import load_manifest


@dataclass
class TrainConfig:
    batch_size: int = 4
    lr_structure: float = 0.0005
    lr_detail: float = 0.00002
    lr_critic: float = 0.00005
    weights: L.LossWeights = field(default_factory=L.LossWeights)
    critic_steps_per_gen: int = 5
    critic_schedule: str = "per_batch"  # or "per_epoch"
    phase1_epochs: int = 1
    phase2_epochs: int = 0
    crop_size: int = 64
    seed: int = 0
    rmsprop_smoothing: float = 0.9
    rmsprop_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        for name in ("lr_structure", "lr_detail", "lr_critic"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be non-negative")
        if self.critic_schedule not in ("per_batch", "per_epoch"):
            raise UsageError(f"unknown critic_schedule {self.critic_schedule!r}")


@dataclass
class TrainState:
    epoch: int = 0
    global_step: int = 0
    last: dict = field(default_factory=dict)


LOG_HEADER = "epoch\tstep\tL_S\tL_D\tL_adv\tcritic_loss"


def _epoch_rng(seed, epoch):
    return np.random.default_rng([seed, epoch])


def _check_finite(value, tag, dump_path, arrays):
    if np.isfinite(value):
        return
    if dump_path is not None:
        np.savez(dump_path, **arrays)
        raise NumericsError(
            f"{tag} is not finite ({value}); step inputs dumped to {dump_path}")
    raise NumericsError(f"{tag} is not finite ({value})")


def _dual_losses(bundle, deg_t, clean_t, cfg):
    """L_S and L_D for one batch, honoring the ablation switches."""
    flags = bundle.config.ablation
    if flags.use_dwt:
        ll_x, lh_x, hl_x, hh_x = wv.dwt2_t(deg_t)
        ll_g, lh_g, hl_g, hh_g = wv.dwt2_t(clean_t)
        pred_ll = models.structure_forward(bundle, ll_x, in_scale=2.0)
        l_s = L.structure_loss(pred_ll, ll_g, alpha=cfg.weights.alpha,
                               data_range=2.0)
        if flags.use_detail:
            preds = models.detail_forward_bands(bundle, (lh_x, hl_x, hh_x))
            l_d = None
            for pb, bg in zip(preds, (lh_g, hl_g, hh_g)):
                term = L.detail_loss(pb, bg)
                l_d = term if l_d is None else eng.add(l_d, term)
        else:
            l_d = eng.as_tensor(np.float32(0.0))
        pieces = (pred_ll, (lh_x, hl_x, hh_x))
    else:
        # no wavelet split: structure sees the full-resolution image and the
        # detail stream (when enabled) refines the composed output
        pred = models.structure_forward(bundle, deg_t, in_scale=1.0)
        l_s = L.structure_loss(pred, clean_t, alpha=cfg.weights.alpha,
                               data_range=1.0)
        if flags.use_detail:
            composed = eng.add(pred, models.detail_forward(bundle, deg_t))
            l_d = L.detail_loss(composed, clean_t)
        else:
            l_d = eng.as_tensor(np.float32(0.0))
        pieces = (pred, None)
    return l_s, l_d, pieces


def _rmsprop_if_used(params, lr, cfg):
    # nets bypassed by a diagnostic hook never enter the graph; skip them
    if all(p.t.grad is None for p in params):
        return
    eng.rmsprop_step(params, lr, cfg.rmsprop_smoothing, cfg.rmsprop_eps)


def _step_generator_nets(bundle, cfg):
    _rmsprop_if_used(bundle.structure.params(), cfg.lr_structure, cfg)
    if bundle.config.ablation.use_detail:
        _rmsprop_if_used(bundle.detail.params(), cfg.lr_detail, cfg)


def _check_batch(deg, clean, dump_path):
    if deg.shape != clean.shape:
        raise UsageError("degraded/clean batch shapes differ")
    bad = int((~np.isfinite(deg)).sum() + (~np.isfinite(clean)).sum())
    if bad:
        if dump_path is not None:
            np.savez(dump_path, degraded=deg, clean=clean)
            raise NumericsError(
                f"batch holds {bad} non-finite values; inputs dumped to {dump_path}")
        raise NumericsError(f"batch holds {bad} non-finite values")


def train_step_dual(bundle, deg, clean, cfg, dump_path=None):
    """One phase-1 update; returns the scalar losses of the step."""
    _check_batch(np.asarray(deg), np.asarray(clean), dump_path)
    deg_t = eng.as_tensor(np.asarray(deg, dtype=np.float32))
    clean_t = eng.as_tensor(np.asarray(clean, dtype=np.float32))
    l_s, l_d, _ = _dual_losses(bundle, deg_t, clean_t, cfg)
    total = L.total_loss(l_s, l_d, None, cfg.weights)
    _check_finite(total.item(), "phase-1 loss", dump_path,
                  {"degraded": deg, "clean": clean})
    out = {"L_S": l_s.item(), "L_D": l_d.item(), "total": total.item()}
    total.backward()
    _step_generator_nets(bundle, cfg)
    return out


def critic_update(bundle, real, fake_images, cfg, dump_path=None):
    """One critic step on detached generator output; clips weights after."""
    if bundle.critic is None:
        raise UsageError("critic_update: bundle has no critic")
    real_t = eng.as_tensor(np.asarray(real, dtype=np.float32))
    fake_t = eng.as_tensor(np.asarray(fake_images, dtype=np.float32))
    c_loss, _ = L.wgan_losses(bundle.critic(real_t), bundle.critic(fake_t))
    _check_finite(c_loss.item(), "critic loss", dump_path,
                  {"real": real, "fake": fake_images})
    val = c_loss.item()
    c_loss.backward()
    eng.rmsprop_step(bundle.critic.params(), cfg.lr_critic,
                     cfg.rmsprop_smoothing, cfg.rmsprop_eps)
    clip = bundle.config.critic.clip
    eng.clamp_params(bundle.critic.params(), -clip, clip)
    return val


def generator_update(bundle, deg, clean, cfg, dump_path=None):
    """One generator step on the full objective including the critic score."""
    _check_batch(np.asarray(deg), np.asarray(clean), dump_path)
    deg_t = eng.as_tensor(np.asarray(deg, dtype=np.float32))
    clean_t = eng.as_tensor(np.asarray(clean, dtype=np.float32))
    l_s, l_d, _ = _dual_losses(bundle, deg_t, clean_t, cfg)
    fake = models.enhance_t(bundle, deg_t)
    _, l_adv = L.wgan_losses(eng.as_tensor(np.float32(0.0)),
                             bundle.critic(fake))
    total = L.total_loss(l_s, l_d, l_adv, cfg.weights)
    _check_finite(total.item(), "phase-2 loss", dump_path,
                  {"degraded": deg, "clean": clean})
    out = {"L_S": l_s.item(), "L_D": l_d.item(), "L_adv": l_adv.item(),
           "total": total.item()}
    total.backward()
    _step_generator_nets(bundle, cfg)
    eng.zero_grads(bundle.critic.params())  # adversarial path residue
    return out


def train_step_gan(bundle, deg, clean, cfg, dump_path=None):
    """Phase-2 batch: critic_steps_per_gen critic updates, then one
    generator update. The generator is frozen during the critic sub-steps,
    so its output is computed once and reused."""
    if bundle.critic is None:
        raise UsageError("train_step_gan: bundle has no critic")
    with eng.no_grad():
        fake = models.enhance_t(bundle, eng.as_tensor(
            np.asarray(deg, dtype=np.float32)))
    c_vals = []
    for _ in range(cfg.critic_steps_per_gen):
        c_vals.append(critic_update(bundle, clean, fake.data, cfg,
                                    dump_path=dump_path))
    out = generator_update(bundle, deg, clean, cfg, dump_path=dump_path)
    out["critic_loss"] = c_vals[-1]
    out["critic_losses"] = c_vals
    return out


# ---------------------------------------------------------------------------
# dataset plumbing
# ---------------------------------------------------------------------------

def load_pairs(manifest_path):
    """Eagerly load all (degraded, clean) pairs referenced by a manifest."""
    manifest_path = Path(manifest_path)
    rows = load_manifest(manifest_path)
    if not rows:
        raise UsageError(f"manifest {manifest_path} lists no training pairs")
    root = manifest_path.parent
    pairs = []
    for variant, source, _, _ in rows:
        stem = Path(source).stem
        pairs.append((load_image(root / variant),
                      load_image(root / f"{stem}__clean.png")))
    return pairs


def _crop_batch(pairs, idxs, crop, rng):
    deg = np.empty((len(idxs), 3, crop, crop), dtype=np.float32)
    clean = np.empty_like(deg)
    for row, i in enumerate(idxs):
        d, c = pairs[i]
        h, w = d.shape[1], d.shape[2]
        if crop > h or crop > w:
            raise UsageError(f"crop {crop} exceeds image {h}x{w}")
        top = int(rng.integers(0, h - crop + 1))
        left = int(rng.integers(0, w - crop + 1))
        deg[row] = d[:, top:top + crop, left:left + crop]
        clean[row] = c[:, top:top + crop, left:left + crop]
    return deg, clean


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train(manifest_path, cfg: TrainConfig, checkpoint_dir,
          pipeline_cfg: models.PipelineConfig | None = None,
          resume=None, quiet=True, override_epochs=None):
    """Run the full schedule; one checkpoint per epoch.

    Returns (bundle, final_checkpoint_path). `resume` is a checkpoint path;
    it restores parameters, optimizer state, and the stored configuration,
    and continues the epoch numbering. `override_epochs`, a
    (phase1, phase2) pair, extends a resumed schedule past its stored
    length.
    """
    from .checkpoint import load_checkpoint, restore_bundle, save_checkpoint
    from .config import RunConfig

    pairs = load_pairs(manifest_path)
    out_dir = Path(checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if resume is not None:
        ckpt = load_checkpoint(resume)
        run_cfg = RunConfig.from_json(ckpt.config_text)
        cfg = run_cfg.train
        if override_epochs is not None:
            cfg.phase1_epochs, cfg.phase2_epochs = override_epochs
        bundle = models.build_bundle(run_cfg.model, seed=ckpt.seed)
        restore_bundle(bundle, ckpt)
        start_epoch = ckpt.epoch + 1
    else:
        bundle = models.build_bundle(pipeline_cfg, seed=cfg.seed)
        run_cfg = RunConfig(model=bundle.config, train=cfg)
        start_epoch = 0

    total_epochs = cfg.phase1_epochs + cfg.phase2_epochs
    if cfg.phase2_epochs > 0 and bundle.critic is None:
        raise UsageError("phase-2 epochs requested but the GAN switch is off")

    log_path = out_dir / "losses.tsv"
    new_log = not log_path.exists()
    state = TrainState(epoch=start_epoch)
    config_text = run_cfg.to_json()
    dump_path = out_dir / "nan_dump.npz"
    final = None

    with open(log_path, "a") as log:
        if new_log:
            log.write(LOG_HEADER + "\n")
        for epoch in range(start_epoch, total_epochs):
            phase2 = epoch >= cfg.phase1_epochs
            rng = _epoch_rng(cfg.seed, epoch)
            batches = _epoch_batches(len(pairs), cfg.batch_size, rng)
            epoch_rows = []
            if phase2 and cfg.critic_schedule == "per_epoch":
                # literal schedule: full critic-only epochs, then a
                # generator epoch
                c_last = 0.0
                for _ in range(cfg.critic_steps_per_gen):
                    for idxs in batches:
                        deg, clean = _crop_batch(pairs, idxs, cfg.crop_size, rng)
                        with eng.no_grad():
                            fake = models.enhance_t(bundle, eng.as_tensor(deg))
                        c_last = critic_update(bundle, clean, fake.data, cfg,
                                               dump_path=dump_path)
                for step, idxs in enumerate(batches):
                    deg, clean = _crop_batch(pairs, idxs, cfg.crop_size, rng)
                    row = generator_update(bundle, deg, clean, cfg,
                                           dump_path=dump_path)
                    row["critic_loss"] = c_last
                    epoch_rows.append(row)
            else:
                for step, idxs in enumerate(batches):
                    deg, clean = _crop_batch(pairs, idxs, cfg.crop_size, rng)
                    if phase2:
                        row = train_step_gan(bundle, deg, clean, cfg,
                                             dump_path=dump_path)
                    else:
                        row = train_step_dual(bundle, deg, clean, cfg,
                                              dump_path=dump_path)
                    epoch_rows.append(row)
            for step, row in enumerate(epoch_rows):
                log.write("\t".join([
                    str(epoch), str(step),
                    f"{row['L_S']:.8f}", f"{row['L_D']:.8f}",
                    f"{row.get('L_adv', float('nan')):.8f}",
                    f"{row.get('critic_loss', float('nan')):.8f}"]) + "\n")
                state.global_step += 1
            log.flush()
            state.epoch = epoch
            state.last = epoch_rows[-1] if epoch_rows else {}
            final = out_dir / f"epoch_{epoch:04d}.ckpt"
            save_checkpoint(final, bundle, epoch=epoch, seed=cfg.seed,
                            config_text=config_text)
            if not quiet:
                mean_ls = float(np.mean([r["L_S"] for r in epoch_rows]))
                mean_ld = float(np.mean([r["L_D"] for r in epoch_rows]))
                phase = 2 if phase2 else 1
                print(f"epoch {epoch} (phase {phase}): "
                      f"L_S {mean_ls:.5f} L_D {mean_ld:.5f}", flush=True)
    if final is None:
        raise UsageError("no epochs to run (phase1_epochs + phase2_epochs == 0)")
    return bundle, final


def evaluate(bundle, items, metric_names, time_enhancement=True):
    """Enhance each item and score it; returns a MetricReport.

    `items` is a list of (name, image_or_path, reference_or_None). Items
    that fail to load are skipped and counted. Reference metrics (ssim,
    ciede2000) are only computed when a reference is present.
    """
    cols = list(metric_names)
    if time_enhancement and "enhance_time_s" not in cols:
        cols.append("enhance_time_s")
    report = mx.MetricReport(cols)
    for name, image, ref in items:
        try:
            img = load_image(image) if isinstance(image, (str, Path)) else image
            ref_img = (load_image(ref) if isinstance(ref, (str, Path)) else ref)
        except DataError:
            report.skipped.append(name)
            continue
        t0 = time.perf_counter()
        out = models.enhance(bundle, img) if bundle is not None else img
        dt = time.perf_counter() - t0
        values = {}
        for m in metric_names:
            if m == "uiqm":
                values[m] = mx.uiqm(out)
            elif m == "uciqe":
                values[m] = mx.uciqe(out)
            elif m == "ssim" and ref_img is not None:
                values[m] = mx.ssim(out, ref_img)
            elif m == "ciede2000" and ref_img is not None:
                values[m] = mx.ciede2000_images(out, ref_img)
        if time_enhancement:
            values["enhance_time_s"] = dt
        report.add(name, values)
    return report

"""Wavelet dual-stream underwater image enhancement toolkit."""

from .colorspace import (hsv_to_rgb, lab_to_rgb, multi_color_stack, rgb_to_hsv,
                         rgb_to_lab)
from .losses import (LossWeights, detail_loss, l1_loss, ms_ssim, ms_ssim_loss,
                     structure_loss, total_loss, wgan_losses)
from .metrics import (MetricReport, ciede2000, ciede2000_images,
                      colorchecker_score, ssim, uciqe, uiqm)
from .models import (AblationFlags, CriticConfig, DetailNetConfig, ModelBundle,
                     PipelineConfig, StructureNetConfig, build_bundle, enhance,
                     enhance_t)
from .synth import SynthSpec, WaterType, generate_dataset, random_crop_pair, synthesize
from .trainer import TrainConfig, evaluate, train, train_step_dual, train_step_gan
from .wavelet import SubBands, dwt2, dwt2_t, idwt2, idwt2_t, visualize_band

__version__ = "0.1.0"

"""Paired training data from RGB-D images via a physical degradation model.

Per channel c with attenuation beta_c (1/m), scene depth d (m), clean
radiance J and veiling light B:

    t_c(x) = exp(-beta_c * d(x));   I_c = J_c * t_c + B_c * (1 - t_c)

B is the water type's veil chromaticity scaled by a background-light level
in (0, 1]. Six water-type presets ship below, ordered from clear open
ocean to green coastal water; the attenuation triples follow the usual
red-fastest ordering and are an editable configuration choice, not a
calibrated reproduction of any one published table.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError
from .imgio import load_depth, load_image, save_image


@dataclass
class WaterType:
    """Named attenuation profile with its veiling-light chromaticity."""

    name: str
    beta: tuple  # (beta_R, beta_G, beta_B) in 1/m
    veil: tuple = (0.35, 0.80, 0.90)

    def __post_init__(self):
        if min(self.beta) <= 0:
            raise DomainError(f"water type {self.name}: beta must be positive")
        br, bg, bb = self.beta
        if not (br >= bg >= bb):
            warnings.warn(
                f"water type {self.name}: beta {self.beta} not red-fastest; "
                "unusual for ocean water")


DEFAULT_WATER_TYPES = [
    WaterType("I", (0.350, 0.069, 0.018), (0.29, 0.71, 1.00)),
    WaterType("IA", (0.358, 0.078, 0.025), (0.31, 0.73, 0.98)),
    WaterType("IB", (0.370, 0.088, 0.032), (0.33, 0.76, 0.95)),
    WaterType("II", (0.400, 0.120, 0.065), (0.36, 0.82, 0.88)),
    WaterType("III", (0.430, 0.180, 0.123), (0.38, 0.88, 0.79)),
    WaterType("1C", (0.460, 0.240, 0.200), (0.40, 0.92, 0.70)),
]

DEFAULT_LIGHT_LEVELS = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]

MANIFEST_NAME = "manifest.tsv"
MANIFEST_HEADER = "variant\tsource\twater_name\tlight_level"


@dataclass
class SynthSpec:
    """6 water types x 6 light levels: 36 degraded variants per source."""

    water_types: list = field(default_factory=lambda: list(DEFAULT_WATER_TYPES))
    light_levels: list = field(default_factory=lambda: list(DEFAULT_LIGHT_LEVELS))
    depth_scale: float = 10.0 / 65535.0  # meters per 16-bit depth unit

    def variants(self):
        for water in self.water_types:
            for light in self.light_levels:
                yield water, light


def synthesize(clean, depth, water: WaterType, light: float):
    """Degrade one clean image through the formation model; output in [0, 1]."""
    clean = np.asarray(clean, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != clean.shape[1:]:
        raise DomainError(
            f"synthesize: depth {depth.shape} does not match image {clean.shape[1:]}")
    n_nan = int(np.isnan(depth).sum())
    if n_nan:
        raise DomainError(f"synthesize: depth map holds {n_nan} NaN pixels")
    if depth.min() < 0:
        raise DomainError("synthesize: negative depth")
    beta = np.asarray(water.beta)[:, None, None]
    b = light * np.asarray(water.veil)[:, None, None]
    t = np.exp(-beta * depth[None])
    out = clean * t + b * (1.0 - t)
    return np.clip(out, 0.0, 1.0)


def random_crop_pair(clean, degraded, size, seed):
    """One seeded crop window applied identically to both images."""
    clean = np.asarray(clean)
    degraded = np.asarray(degraded)
    if clean.shape != degraded.shape:
        raise DomainError("random_crop_pair: image shapes differ")
    h, w = clean.shape[-2], clean.shape[-1]
    if size > h or size > w:
        raise DomainError(f"random_crop_pair: crop {size} exceeds image {h}x{w}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    sl = (Ellipsis, slice(top, top + size), slice(left, left + size))
    return clean[sl], degraded[sl]


def _find_sources(rgbd_dir):
    root = Path(rgbd_dir)
    if not root.is_dir():
        raise DataError(f"source directory not found: {root}")
    stems = []
    for p in sorted(root.glob("*.png")):
        if p.stem.endswith("_depth"):
            continue
        stems.append(p.stem)
    return root, stems


def generate_dataset(rgbd_dir, spec: SynthSpec, out_dir, seed=0):
    """Write 36 degraded variants plus the clean target per source image.

    Input directory layout: `<stem>.png` color + `<stem>_depth.png` 16-bit
    depth. Sources missing their depth map are skipped and reported in the
    returned summary. The manifest is assembled in sorted order and is
    byte-identical across reruns with the same seed.
    """
    root, stems = _find_sources(rgbd_dir)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    rows = []
    skipped = []
    for stem in stems:
        depth_path = root / f"{stem}_depth.png"
        if not depth_path.exists():
            skipped.append(stem)
            continue
        clean = load_image(root / f"{stem}.png")
        depth = load_depth(depth_path) * spec.depth_scale
        save_image(out / f"{stem}__clean.png", clean)
        for water, light in spec.variants():
            degraded = synthesize(clean, depth, water, light)
            name = f"{stem}__{water.name}__{light:g}.png"
            save_image(out / name, degraded)
            rows.append((name, f"{stem}.png", water.name, f"{light:g}"))
    if not rows and not skipped:
        raise DataError(f"no source images found under {root}")
    lines = [MANIFEST_HEADER]
    lines += ["\t".join(r) for r in sorted(rows)]
    lines += [f"# skipped\t{s}\t\t" for s in skipped]
    lines += [f"# seed\t{seed}\t\t"]
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    return {"variants": len(rows), "skipped": skipped,
            "manifest": out / MANIFEST_NAME}


def load_manifest(manifest_path):
    """Read manifest rows back as (variant, source, water_name, light_level)."""
    path = Path(manifest_path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        raise DataError(f"unrecognized manifest header in {path}")
    rows = []
    for line in lines[1:]:
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"malformed manifest row: {line!r}")
        rows.append((parts[0], parts[1], parts[2], float(parts[3])))
    return rows

"""One structured configuration document for models, training, synthesis,
and metric coefficients.

Serialized as JSON with a version field. Parsing is strict: unknown keys
are rejected by name so typos fail loudly instead of silently using a
default. `RunConfig().to_json()` is the canonical full default document
emitted by `uwenhance config init`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import UsageError
from .losses import LossWeights
from .metrics import UCIQE_COEFFS, UIQM_COEFFS
from .models import (AblationFlags, CriticConfig, DetailNetConfig,
                     PipelineConfig, StructureNetConfig)
from .synth import SynthSpec, WaterType
from .trainer import TrainConfig

CONFIG_VERSION = 1


@dataclass
class MetricCoeffs:
    uiqm: tuple = UIQM_COEFFS
    uciqe: tuple = UCIQE_COEFFS


@dataclass
class RunConfig:
    model: PipelineConfig = field(default_factory=PipelineConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    metrics: MetricCoeffs = field(default_factory=MetricCoeffs)

    def to_dict(self):
        m = self.model
        t = self.train
        return {
            "version": CONFIG_VERSION,
            "model": {
                "structure": {
                    "levels": m.structure.levels,
                    "base_channels": m.structure.base_channels,
                },
                "critic": {
                    "layers": m.critic.layers,
                    "base_channels": m.critic.base_channels,
                    "clip": m.critic.clip,
                },
                "ablation": {
                    "use_dwt": m.ablation.use_dwt,
                    "use_detail": m.ablation.use_detail,
                    "use_multicolor": m.ablation.use_multicolor,
                    "use_gan": m.ablation.use_gan,
                },
            },
            "train": {
                "batch_size": t.batch_size,
                "lr_structure": t.lr_structure,
                "lr_detail": t.lr_detail,
                "lr_critic": t.lr_critic,
                "lambda1": t.weights.lambda1,
                "lambda2": t.weights.lambda2,
                "lambda3": t.weights.lambda3,
                "alpha": t.weights.alpha,
                "critic_steps_per_gen": t.critic_steps_per_gen,
                "critic_schedule": t.critic_schedule,
                "phase1_epochs": t.phase1_epochs,
                "phase2_epochs": t.phase2_epochs,
                "crop_size": t.crop_size,
                "seed": t.seed,
            },
            "synth": {
                "water_types": [
                    {"name": w.name, "beta": list(w.beta), "veil": list(w.veil)}
                    for w in self.synth.water_types
                ],
                "light_levels": list(self.synth.light_levels),
                "depth_scale": self.synth.depth_scale,
            },
            "metrics": {
                "uiqm_coeffs": list(self.metrics.uiqm),
                "uciqe_coeffs": list(self.metrics.uciqe),
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        _expect_keys(data, {"version", "model", "train", "synth", "metrics"}, "")
        version = data.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise UsageError(f"unsupported config version {version}")
        model = _parse_model(data.get("model", {}))
        train = _parse_train(data.get("train", {}))
        synth = _parse_synth(data.get("synth", {}))
        met = _parse_metrics(data.get("metrics", {}))
        return cls(model=model, train=train, synth=synth, metrics=met)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _expect_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise UsageError(f"config section {path or '<root>'} must be an object")
    for k in d:
        if k not in allowed:
            where = f"{path}.{k}" if path else k
            raise UsageError(f"unknown config key: {where}")


def _parse_model(d):
    _expect_keys(d, {"structure", "critic", "ablation"}, "model")
    s = d.get("structure", {})
    _expect_keys(s, {"levels", "base_channels"}, "model.structure")
    c = d.get("critic", {})
    _expect_keys(c, {"layers", "base_channels", "clip"}, "model.critic")
    a = d.get("ablation", {})
    _expect_keys(a, {"use_dwt", "use_detail", "use_multicolor", "use_gan"},
                 "model.ablation")
    return PipelineConfig(
        structure=StructureNetConfig(
            levels=int(s.get("levels", 3)),
            base_channels=int(s.get("base_channels", 32))),
        detail=DetailNetConfig(),
        critic=CriticConfig(
            layers=int(c.get("layers", 4)),
            base_channels=int(c.get("base_channels", 32)),
            clip=float(c.get("clip", 0.01))),
        ablation=AblationFlags(
            use_dwt=bool(a.get("use_dwt", True)),
            use_detail=bool(a.get("use_detail", True)),
            use_multicolor=bool(a.get("use_multicolor", True)),
            use_gan=bool(a.get("use_gan", True))))


def _parse_train(d):
    allowed = {"batch_size", "lr_structure", "lr_detail", "lr_critic",
               "lambda1", "lambda2", "lambda3", "alpha",
               "critic_steps_per_gen", "critic_schedule",
               "phase1_epochs", "phase2_epochs", "crop_size", "seed"}
    _expect_keys(d, allowed, "train")
    defaults = TrainConfig()
    weights = LossWeights(
        lambda1=float(d.get("lambda1", defaults.weights.lambda1)),
        lambda2=float(d.get("lambda2", defaults.weights.lambda2)),
        lambda3=float(d.get("lambda3", defaults.weights.lambda3)),
        alpha=float(d.get("alpha", defaults.weights.alpha)))
    return TrainConfig(
        batch_size=int(d.get("batch_size", defaults.batch_size)),
        lr_structure=float(d.get("lr_structure", defaults.lr_structure)),
        lr_detail=float(d.get("lr_detail", defaults.lr_detail)),
        lr_critic=float(d.get("lr_critic", defaults.lr_critic)),
        weights=weights,
        critic_steps_per_gen=int(
            d.get("critic_steps_per_gen", defaults.critic_steps_per_gen)),
        critic_schedule=str(d.get("critic_schedule", defaults.critic_schedule)),
        phase1_epochs=int(d.get("phase1_epochs", defaults.phase1_epochs)),
        phase2_epochs=int(d.get("phase2_epochs", defaults.phase2_epochs)),
        crop_size=int(d.get("crop_size", defaults.crop_size)),
        seed=int(d.get("seed", defaults.seed)))


def _parse_synth(d):
    _expect_keys(d, {"water_types", "light_levels", "depth_scale"}, "synth")
    spec = SynthSpec()
    if "water_types" in d:
        types = []
        for i, w in enumerate(d["water_types"]):
            _expect_keys(w, {"name", "beta", "veil"}, f"synth.water_types[{i}]")
            types.append(WaterType(name=str(w["name"]),
                                   beta=tuple(float(x) for x in w["beta"]),
                                   veil=tuple(float(x) for x in w.get(
                                       "veil", (0.35, 0.80, 0.90)))))
        spec.water_types = types
    if "light_levels" in d:
        spec.light_levels = [float(x) for x in d["light_levels"]]
    if "depth_scale" in d:
        spec.depth_scale = float(d["depth_scale"])
    return spec


def _parse_metrics(d):
    _expect_keys(d, {"uiqm_coeffs", "uciqe_coeffs"}, "metrics")
    return MetricCoeffs(
        uiqm=tuple(float(x) for x in d.get("uiqm_coeffs", UIQM_COEFFS)),
        uciqe=tuple(float(x) for x in d.get("uciqe_coeffs", UCIQE_COEFFS)))

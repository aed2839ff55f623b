"""The three networks and the full enhancement pipeline.

- structure network: a U-net over the 9-channel multi-color stack of the
  low-frequency band, sigmoid head rescaled to the band's [0, 2] range.
- detail network: ten 3x3/64 convolutions with ReLU after the hidden
  layers and a linear final layer (detail coefficients may be negative);
  one weight set shared across the three high-frequency bands.
- critic: strided convolutions with leaky ReLU reduced to one unbounded
  score per image, kept Lipschitz during training by weight clipping.

`enhance_t` composes analysis, the two streams, and synthesis, handling
internal reflect padding so any input size works; ablation switches in
`PipelineConfig` can bypass the wavelet split, the detail stream, the
multi-color stack, or the critic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as eng
from . import wavelet as wv
from .colorspace import multi_color_stack
from .errors import DimensionError

DETAIL_LAYERS = 10
DETAIL_KERNEL = 3
DETAIL_WIDTH = 64


@dataclass
class StructureNetConfig:
    levels: int = 3
    base_channels: int = 32
    in_channels: int = 9
    out_channels: int = 3

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("structure net needs at least one level")
        if self.base_channels < 8:
            raise ValueError("structure net base width below 8")


@dataclass
class DetailNetConfig:
    """Fixed by design: 10 layers of 3x3 kernels, 64 channels wide."""

    layers: int = DETAIL_LAYERS
    kernel: int = DETAIL_KERNEL
    width: int = DETAIL_WIDTH
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        fixed = (DETAIL_LAYERS, DETAIL_KERNEL, DETAIL_WIDTH, 3, 3)
        got = (self.layers, self.kernel, self.width,
               self.in_channels, self.out_channels)
        if got != fixed:
            raise ValueError(f"detail net architecture is fixed at {fixed}, got {got}")


@dataclass
class CriticConfig:
    layers: int = 4
    base_channels: int = 32
    clip: float = 0.01


@dataclass
class AblationFlags:
    use_dwt: bool = True
    use_detail: bool = True
    use_multicolor: bool = True
    use_gan: bool = True


@dataclass
class PipelineConfig:
    structure: StructureNetConfig = field(default_factory=StructureNetConfig)
    detail: DetailNetConfig = field(default_factory=DetailNetConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    ablation: AblationFlags = field(default_factory=AblationFlags)


class _ConvLayer:
    def __init__(self, name, cin, cout, k, stride=1, padding=0, transpose=False):
        shape = (cin, cout, k, k) if transpose else (cout, cin, k, k)
        self.weight = eng.Parameter(f"{name}.weight", np.zeros(shape, np.float32))
        self.bias = eng.Parameter(f"{name}.bias", np.zeros(
            cout, np.float32))
        self.stride = stride
        self.padding = padding
        self.transpose = transpose
        self.fan_in = cin * k * k

    def params(self):
        return [self.weight, self.bias]

    def __call__(self, x):
        if self.transpose:
            return eng.conv_transpose2d(x, self.weight.t, self.bias.t,
                                        stride=self.stride, padding=self.padding)
        return eng.conv2d(x, self.weight.t, self.bias.t,
                          stride=self.stride, padding=self.padding)


class StructureNet:
    """U-net: strided-conv encoder, transposed-conv decoder, skip concats."""

    def __init__(self, cfg: StructureNetConfig):
        self.cfg = cfg
        b = cfg.base_channels
        self.stem = _ConvLayer("structure.stem", cfg.in_channels, b, 3, padding=1)
        self.downs = []
        self.dec_ups = []
        self.dec_convs = []
        ch = b
        for i in range(cfg.levels):
            self.downs.append((
                _ConvLayer(f"structure.down{i}.reduce", ch, 2 * ch, 4,
                           stride=2, padding=1),
                _ConvLayer(f"structure.down{i}.conv", 2 * ch, 2 * ch, 3, padding=1),
            ))
            ch *= 2
        for i in reversed(range(cfg.levels)):
            self.dec_ups.append(
                _ConvLayer(f"structure.up{i}.expand", ch, ch // 2, 4,
                           stride=2, padding=1, transpose=True))
            self.dec_convs.append(
                _ConvLayer(f"structure.up{i}.conv", ch, ch // 2, 3, padding=1))
            ch //= 2
        self.head = _ConvLayer("structure.head", b, cfg.out_channels, 3, padding=1)

    def layers(self):
        out = [self.stem]
        for a, c in self.downs:
            out += [a, c]
        for u, c in zip(self.dec_ups, self.dec_convs):
            out += [u, c]
        out.append(self.head)
        return out

    def params(self):
        return [p for layer in self.layers() for p in layer.params()]

    def __call__(self, x, out_scale=2.0):
        h, w = x.shape[2], x.shape[3]
        div = 2 ** self.cfg.levels
        if h % div or w % div:
            raise DimensionError(
                f"structure net: {h}x{w} input not divisible by {div}; "
                f"reflect-pad by ({(-h) % div}, {(-w) % div}) first")
        skips = []
        t = eng.relu(self.stem(x))
        for reduce_l, conv_l in self.downs:
            skips.append(t)
            t = eng.relu(reduce_l(t))
            t = eng.relu(conv_l(t))
        for up_l, conv_l in zip(self.dec_ups, self.dec_convs):
            t = eng.relu(up_l(t))
            t = eng.concat_channels([t, skips.pop()])
            t = eng.relu(conv_l(t))
        return eng.mul(eng.sigmoid(self.head(t)), out_scale)


class DetailNet:
    """Shared-weight refiner for the high-frequency bands.

    `residual` is a diagnostic bypass: when set, the input band is added to
    the network output. It defaults off, so a zeroed final layer yields an
    exactly zero band.
    """

    def __init__(self, cfg: DetailNetConfig, residual=False):
        self.cfg = cfg
        self.residual = residual
        p = cfg.kernel // 2
        chans = [cfg.in_channels] + [cfg.width] * (cfg.layers - 1) + [cfg.out_channels]
        self.convs = [
            _ConvLayer(f"detail.conv{i}", chans[i], chans[i + 1], cfg.kernel,
                       padding=p)
            for i in range(cfg.layers)
        ]

    def params(self):
        return [p for layer in self.convs for p in layer.params()]

    def __call__(self, band):
        t = band
        for layer in self.convs[:-1]:
            t = eng.relu(layer(t))
        t = self.convs[-1](t)
        if self.residual:
            t = eng.add(t, band)
        return t


class Critic:
    """Strided-conv critic; unbounded mean score, no output nonlinearity."""

    def __init__(self, cfg: CriticConfig):
        self.cfg = cfg
        chans = [3] + [cfg.base_channels * 2 ** i for i in range(cfg.layers)]
        self.convs = [
            _ConvLayer(f"critic.conv{i}", chans[i], chans[i + 1], 4,
                       stride=2, padding=1)
            for i in range(cfg.layers)
        ]

    def params(self):
        return [p for layer in self.convs for p in layer.params()]

    def __call__(self, x):
        t = x
        for layer in self.convs:
            t = eng.leaky_relu(layer(t), 0.2)
        return eng.reduce_mean(t)


@dataclass
class ModelBundle:
    structure: StructureNet
    detail: DetailNet
    critic: Critic | None
    config: PipelineConfig
    seed: int
    structure_bypass: bool = False  # diagnostic: f_S acts as identity

    def parameters(self):
        out = self.structure.params() + self.detail.params()
        if self.critic is not None:
            out += self.critic.params()
        names = [p.name for p in out]
        assert len(names) == len(set(names)), "duplicate parameter names"
        return out

    def generator_parameters(self):
        return self.structure.params() + self.detail.params()

    def critic_parameters(self):
        return self.critic.params() if self.critic is not None else []

    @property
    def dtype(self):
        return self.structure.stem.weight.t.data.dtype

    def astype(self, dtype):
        for p in self.parameters():
            p.t.data = p.t.data.astype(dtype)
            if p.state is not None:
                p.state = p.state.astype(dtype)
        return self


def build_bundle(config: PipelineConfig | None = None, seed: int = 0) -> ModelBundle:
    config = config or PipelineConfig()
    structure_cfg = config.structure
    if not config.ablation.use_multicolor:
        structure_cfg = StructureNetConfig(
            levels=structure_cfg.levels,
            base_channels=structure_cfg.base_channels,
            in_channels=3,
            out_channels=structure_cfg.out_channels)
    bundle = ModelBundle(
        structure=StructureNet(structure_cfg),
        detail=DetailNet(config.detail),
        critic=Critic(config.critic) if config.ablation.use_gan else None,
        config=config,
        seed=seed)
    init_params(bundle, seed)
    if bundle.critic is not None:
        # Lipschitz constraint applies from the start: every training
        # trajectory clips after its first critic step anyway
        eng.clamp_params(bundle.critic.params(),
                         -config.critic.clip, config.critic.clip)
    return bundle


def init_params(bundle: ModelBundle, seed: int):
    """He fan-in normal init for weights, zero biases, one seeded stream.

    The detail net's final layer starts at zero so the refinement stream is
    neutral until trained; a freshly initialized pipeline then reconstructs
    from the structure band alone instead of injecting random detail.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    nets = [bundle.structure, bundle.detail] + (
        [bundle.critic] if bundle.critic is not None else [])
    for net in nets:
        layers = net.layers() if hasattr(net, "layers") else net.convs
        for layer in layers:
            std = np.sqrt(2.0 / layer.fan_in)
            layer.weight.t.data = rng.normal(
                0.0, std, size=layer.weight.t.shape).astype(np.float32)
            layer.bias.t.data = np.zeros(layer.bias.t.shape, np.float32)
    last = bundle.detail.convs[-1]
    last.weight.t.data = np.zeros(last.weight.t.shape, np.float32)
    bundle.seed = seed


def detail_param_count(cfg: DetailNetConfig | None = None) -> int:
    cfg = cfg or DetailNetConfig()
    chans = [cfg.in_channels] + [cfg.width] * (cfg.layers - 1) + [cfg.out_channels]
    return sum(chans[i] * chans[i + 1] * cfg.kernel ** 2 + chans[i + 1]
               for i in range(cfg.layers))


def _stack_batch(data01, use_multicolor):
    """Convert a (N, 3, h, w) [0,1] array into the network input stack."""
    if not use_multicolor:
        return data01
    return np.stack([multi_color_stack(img) for img in data01])


def structure_forward(bundle: ModelBundle, ll, in_scale=2.0):
    """Run the structure stream on a band tensor of range [0, in_scale].

    The band is rescaled to [0, 1], expanded to the multi-color stack, sent
    through the U-net and mapped back to the input range by the sigmoid
    head. The color stack is a data transform: gradients flow through the
    network only, which is all training requires.
    """
    ll = eng.as_tensor(ll)
    if bundle.structure_bypass:
        return ll
    h, w = ll.shape[2], ll.shape[3]
    div = 2 ** bundle.structure.cfg.levels
    if h % div or w % div:
        raise DimensionError(
            f"structure_forward: {h}x{w} not divisible by {div}; "
            f"reflect-pad by ({(-h) % div}, {(-w) % div}) first")
    x01 = np.clip(ll.data / in_scale, 0.0, 1.0)
    stack = _stack_batch(x01, bundle.config.ablation.use_multicolor)
    return bundle.structure(eng.as_tensor(stack.astype(ll.dtype)),
                            out_scale=in_scale)


def detail_forward(bundle: ModelBundle, band):
    """Run the shared detail stream on one high-frequency band tensor."""
    return bundle.detail(eng.as_tensor(band))


def detail_forward_bands(bundle: ModelBundle, bands):
    """One batched pass of the shared detail net over several bands.

    Mathematically identical to per-band calls (the weights are shared and
    the net is spatially local), but one pass keeps the BLAS calls large.
    """
    n = bands[0].shape[0]
    stacked = eng.concat_batch(list(bands))
    refined = bundle.detail(stacked)
    return tuple(eng.slice_batch(refined, i * n, (i + 1) * n)
                 for i in range(len(bands)))


def critic_forward(bundle: ModelBundle, image):
    """Mean critic score of a (N, 3, H, W) tensor (or one 3 x H x W image)."""
    if bundle.critic is None:
        raise ValueError("bundle has no critic (GAN disabled)")
    t = eng.as_tensor(image)
    if t.ndim == 3:
        t = eng.reshape(t, (1,) + t.shape)
    return bundle.critic(t)


def _pad_to_multiple_t(x, mult):
    h, w = x.shape[2], x.shape[3]
    pb, pr = (-h) % mult, (-w) % mult
    if pb or pr:
        x = eng.pad2d(x, (0, pb, 0, pr), mode="reflect")
    return x


def enhance_t(bundle: ModelBundle, x):
    """Full pipeline on an NCHW tensor in [0, 1]; shape-preserving."""
    x = eng.as_tensor(x)
    n, c, h, w = x.shape
    flags = bundle.config.ablation
    levels = bundle.structure.cfg.levels
    mult = 2 ** (levels + 1) if flags.use_dwt else 2 ** levels
    xp = _pad_to_multiple_t(x, mult)
    if flags.use_dwt:
        ll, lh, hl, hh = wv.dwt2_t(xp)
        s = structure_forward(bundle, ll, in_scale=2.0)
        if flags.use_detail:
            bands = detail_forward_bands(bundle, (lh, hl, hh))
        else:
            bands = (lh, hl, hh)
        y = wv.idwt2_t(s, *bands)
    else:
        y = structure_forward(bundle, xp, in_scale=1.0)
        if flags.use_detail:
            y = eng.add(y, detail_forward(bundle, xp))
    if y.shape[2] != h or y.shape[3] != w:
        y = eng.crop2d(y, 0, 0, h, w)
    return eng.clamp01(y)


def enhance(bundle: ModelBundle, image):
    """Enhance one 3 x H x W image in [0, 1]; returns the same shape."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DimensionError(f"enhance: expected 3 x H x W, got {arr.shape}")
    with eng.no_grad():
        out = enhance_t(bundle, eng.as_tensor(arr[None]))
    return out.data[0]

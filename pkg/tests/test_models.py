import numpy as np
import pytest

from uwenhance import engine as eng
from uwenhance import losses, models
from uwenhance import wavelet as wv
from uwenhance.errors import DimensionError

from helpers import param_gradcheck

rng = np.random.default_rng(5)


def small_config(**ablation):
    return models.PipelineConfig(
        structure=models.StructureNetConfig(levels=2, base_channels=8),
        ablation=models.AblationFlags(**ablation))


def test_structure_forward_shape_and_range():
    bundle = models.build_bundle(small_config(), seed=3)
    ll = rng.uniform(0, 2, size=(2, 3, 16, 16)).astype(np.float32)
    out = models.structure_forward(bundle, eng.as_tensor(ll))
    assert out.shape == (2, 3, 16, 16)
    assert out.data.min() >= 0.0 and out.data.max() <= 2.0


def test_structure_forward_divisibility_hint():
    bundle = models.build_bundle(small_config(), seed=3)
    ll = rng.uniform(0, 2, size=(1, 3, 10, 16)).astype(np.float32)
    with pytest.raises(DimensionError, match="reflect-pad"):
        models.structure_forward(bundle, eng.as_tensor(ll))


def test_structure_forward_deterministic_given_seed():
    ll = rng.uniform(0, 2, size=(1, 3, 16, 16)).astype(np.float32)
    outs = []
    for _ in range(2):
        bundle = models.build_bundle(small_config(), seed=11)
        outs.append(models.structure_forward(bundle, eng.as_tensor(ll)).data)
    assert np.array_equal(outs[0], outs[1])


def test_detail_net_parameter_count_closed_form():
    bundle = models.build_bundle(small_config(), seed=0)
    total = sum(p.t.data.size for p in bundle.detail.params())
    expected = (3 * 64 * 9 + 64) + 8 * (64 * 64 * 9 + 64) + (64 * 3 * 9 + 3)
    assert total == expected == models.detail_param_count()


def test_detail_net_config_is_fixed():
    with pytest.raises(ValueError, match="fixed"):
        models.DetailNetConfig(layers=5)


def test_detail_forward_shape_and_zero_final_layer():
    bundle = models.build_bundle(small_config(), seed=0)
    band = rng.uniform(-1, 1, size=(1, 3, 12, 12)).astype(np.float32)
    out = models.detail_forward(bundle, eng.as_tensor(band))
    assert out.shape == band.shape
    last = bundle.detail.convs[-1]
    last.weight.t.data[:] = 0.0
    last.bias.t.data[:] = 0.0
    out = models.detail_forward(bundle, eng.as_tensor(band))
    np.testing.assert_array_equal(out.data, 0.0)
    bundle.detail.residual = True
    out = models.detail_forward(bundle, eng.as_tensor(band))
    np.testing.assert_allclose(out.data, band, rtol=1e-6)


def test_detail_net_shared_weights_order_independent():
    bundle = models.build_bundle(small_config(), seed=0)
    bands = [rng.uniform(-1, 1, size=(1, 3, 8, 8)).astype(np.float32)
             for _ in range(3)]
    first = [models.detail_forward(bundle, eng.as_tensor(b)).data for b in bands]
    permuted = [models.detail_forward(bundle, eng.as_tensor(bands[i])).data
                for i in (2, 0, 1)]
    for i, j in zip((2, 0, 1), range(3)):
        np.testing.assert_array_equal(first[i], permuted[j])


def test_critic_scalar_output_and_sensitivity():
    bundle = models.build_bundle(small_config(), seed=1)
    img = rng.uniform(0, 1, size=(3, 32, 32)).astype(np.float32)
    score = models.critic_forward(bundle, img)
    assert score.shape == ()
    bumped = models.critic_forward(bundle, img + 0.05)
    assert abs(score.item() - bumped.item()) > 0  # non-constant after init


def test_critic_weight_clamp():
    bundle = models.build_bundle(small_config(), seed=1)
    eng.clamp_params(bundle.critic_parameters(), -0.01, 0.01)
    for p in bundle.critic_parameters():
        assert p.t.data.min() >= -0.01 and p.t.data.max() <= 0.01


@pytest.mark.parametrize("h,w", [(32, 32), (33, 41), (17, 16)])
def test_enhance_shape_preserving_and_bounded(h, w):
    bundle = models.build_bundle(small_config(), seed=2)
    img = rng.uniform(0, 1, size=(3, h, w)).astype(np.float32)
    out = models.enhance(bundle, img)
    assert out.shape == (3, h, w)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_enhance_identity_configuration_matches_ll_blur_oracle():
    bundle = models.build_bundle(small_config(), seed=2)
    bundle.structure_bypass = True
    bundle.detail.residual = False
    last = bundle.detail.convs[-1]
    last.weight.t.data[:] = 0.0
    last.bias.t.data[:] = 0.0
    img = rng.uniform(0, 1, size=(3, 24, 24))
    got = models.enhance(bundle, img.astype(np.float32))
    bands = wv.dwt2(img)
    zero = np.zeros_like(bands.ll)
    expect = np.clip(wv.idwt2(wv.SubBands(
        bands.ll, zero, zero, zero, bands.parent_shape)), 0.0, 1.0)
    np.testing.assert_allclose(got, expect, atol=1e-5)


def test_enhance_deterministic():
    bundle = models.build_bundle(small_config(), seed=9)
    img = rng.uniform(0, 1, size=(3, 20, 28)).astype(np.float32)
    a = models.enhance(bundle, img)
    b = models.enhance(bundle, img)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("flags", [
    dict(use_dwt=False),
    dict(use_detail=False),
    dict(use_multicolor=False),
    dict(use_gan=False),
])
def test_ablation_switches_runnable(flags):
    bundle = models.build_bundle(small_config(**flags), seed=4)
    img = rng.uniform(0, 1, size=(3, 16, 16)).astype(np.float32)
    out = models.enhance(bundle, img)
    assert out.shape == (3, 16, 16)
    if flags.get("use_gan", True) is False:
        assert bundle.critic is None


def test_init_params_seeding_and_scale():
    b1 = models.build_bundle(small_config(), seed=7)
    b2 = models.build_bundle(small_config(), seed=7)
    b3 = models.build_bundle(small_config(), seed=8)
    for p, q in zip(b1.parameters(), b2.parameters()):
        assert np.array_equal(p.t.data, q.t.data)
    assert any(not np.array_equal(p.t.data, q.t.data)
               for p, q in zip(b1.parameters(), b3.parameters()))
    mid = b1.detail.convs[4].weight.t.data  # a 64->64 3x3 layer
    target = np.sqrt(2.0 / (64 * 9))
    assert abs(mid.std() - target) / target < 0.2


def test_bundle_parameter_names_unique():
    bundle = models.build_bundle(small_config(), seed=0)
    names = [p.name for p in bundle.parameters()]
    assert len(names) == len(set(names))


def test_end_to_end_gradcheck_small():
    bundle = models.build_bundle(small_config(), seed=6).astype(np.float64)
    img = rng.uniform(0.1, 0.9, size=(1, 3, 8, 8))
    target = rng.uniform(0.1, 0.9, size=(1, 3, 8, 8))

    def build_loss():
        out = models.enhance_t(bundle, eng.as_tensor(img))
        return losses.l1_loss(out, eng.as_tensor(target))

    sampled = [bundle.structure.head.weight, bundle.structure.stem.bias,
               bundle.detail.convs[0].weight, bundle.detail.convs[-1].bias]
    param_gradcheck(build_loss, sampled, n_samples=4)

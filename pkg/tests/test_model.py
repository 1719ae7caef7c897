import numpy as np
import pytest

from fewloc import kernels as K
from fewloc.layers import Conv2d
from fewloc.model import BackboneConfig, LocalizationModel, ModelConfig, box_to_window, crop_support, self_query
from fewloc.tensor import ShapeError, Tensor, adaptive_avg_pool
from fewloc.verify import oracles


@pytest.fixture(scope="module")
def desk():
    return LocalizationModel(ModelConfig(), seed=0)


@pytest.fixture(scope="module")
def image():
    return Tensor(np.random.default_rng(0).random((1, 3, 64, 64)))


def test_desk_feature_shape_and_determinism(desk, image):
    a = desk.extract_features(image)
    b = desk.extract_features(Tensor(image.data.copy()))
    assert a.shape == (1, 32, 16, 16)
    np.testing.assert_array_equal(a.data, b.data)


def test_reference_channel_layout():
    cfg = ModelConfig(backbone=BackboneConfig.reference(), head_widths=(16, 8))
    model = LocalizationModel(cfg, seed=0)
    fq = model.extract_features(Tensor(np.random.default_rng(1).random((1, 3, 64, 64))))
    # 512 px input gives 128 x 128 at the same stride
    assert fq.shape == (1, 256, 16, 16)
    assert cfg.backbone.feature_stride == 4 and 512 // cfg.backbone.feature_stride == 128


def test_resolution_not_divisible_by_stride(desk):
    with pytest.raises(ShapeError):
        desk.extract_features(Tensor(np.zeros((1, 3, 60, 60))))


def test_crop_support_examples():
    rng = np.random.default_rng(2)
    fq = Tensor(rng.normal(size=(1, 4, 16, 16)))
    whole = crop_support(fq, (0, 0, 64, 64), 4)
    np.testing.assert_allclose(whole.data, adaptive_avg_pool(fq, (3, 3)).data, atol=1e-15)
    exact = crop_support(fq, (8, 12, 20, 24), 4)
    np.testing.assert_array_equal(exact.data, fq.data[:, :, 3:6, 2:5])
    # width 5 px starting mid-cell spans two columns after outward rounding
    y0, y1, x0, x1 = box_to_window((6, 8, 11, 20), 4, (16, 16))
    assert (x0, x1) == (1, 3) and (y0, y1) == (2, 5)
    got = crop_support(fq, (6, 8, 11, 20), 4)
    ref = oracles.adaptive_pool_loops(fq.data[0, :, 2:5, 1:3], 3, 3)
    np.testing.assert_allclose(got.data[0], ref, atol=1e-14)


def test_degenerate_box_is_named():
    with pytest.raises(ValueError, match=r"\(5, 5, 5, 9\)"):
        box_to_window((5, 5, 5, 9), 4, (16, 16))


def test_dfa_shapes_and_weight_sharing(desk, image):
    fq = desk.extract_features(image)
    fs = crop_support(fq, (8, 8, 20, 20), 4)
    outs = desk.dfa_forward(fq, fs)
    assert [o.shape for o in outs] == [fq.shape, fs.shape, fq.shape, fs.shape]
    # processing the support alone gives the same branch outputs
    np.testing.assert_array_equal(desk.deform(fs).data, outs[1].data)
    np.testing.assert_array_equal(desk.gradient(fs).data, outs[3].data)
    with pytest.raises(ShapeError):
        desk.dfa_forward(fq, Tensor(np.ones((1, 8, 3, 3))))


def test_dfa_identity_weights_pass_inputs_through():
    cfg = ModelConfig(theta=0.0)
    model = LocalizationModel(cfg, seed=0)
    C = cfg.backbone.channels
    delta = np.zeros((C, C, 3, 3))
    cross = np.zeros((C, C, 5))
    for c in range(C):
        delta[c, c, 1, 1] = 1.0
        cross[c, c, 2] = 1.0
    model.deform.weight.data[...] = delta
    model.gradient.weight.data[...] = cross
    fq = Tensor(np.random.default_rng(3).normal(size=(1, C, 8, 8)))
    # a zero-init offset conv gives zero offsets and masks of 0.5
    np.testing.assert_allclose(model.deform(fq).data, 0.5 * fq.data, atol=1e-14)
    np.testing.assert_array_equal(model.gradient(fq).data, fq.data)


def test_similarity_examples(desk):
    rng = np.random.default_rng(4)
    qd, qc = (Tensor(a) for a in rng.normal(size=(2, 1, 32, 16, 16)))
    sd, sc = (Tensor(a) for a in rng.normal(size=(2, 1, 32, 3, 3)))
    zq, zs = Tensor(np.zeros(qc.shape)), Tensor(np.zeros(sc.shape))
    np.testing.assert_array_equal(desk.similarity_forward(qd, sd, zq, zs).data, K.corr2d_depthwise(qd, sd).data)
    ref = oracles.corr2d_loops(qd.data[0], sd.data[0]) + oracles.corr2d_loops(qc.data[0], sc.data[0])
    np.testing.assert_allclose(desk.similarity_forward(qd, sd, qc, sc).data[0], ref, atol=1e-11)


def _sq_convs(C, rng, identity=False):
    inc = Conv2d(C, C, 1, bias=False, rng=rng)
    outc = Conv2d(C, C, 1, bias=False, rng=rng)
    if identity:
        inc.weight.data[...] = np.eye(C)[:, :, None, None]
    return inc, outc


def test_self_query_properties():
    rng = np.random.default_rng(5)
    C = 6
    fq = Tensor(rng.normal(size=(1, C, 5, 5)))
    s = Tensor(rng.normal(size=(1, C, 5, 5)))
    inc, outc = _sq_convs(C, rng)
    _, w = self_query(s, fq, inc, outc)
    _, w_neg = self_query(Tensor(-s.data), fq, inc, outc)
    _, w_scaled = self_query(Tensor(7.3 * s.data), fq, inc, outc)
    np.testing.assert_array_equal(w_neg.data, -w.data)
    np.testing.assert_allclose(w_scaled.data, w.data, atol=1e-12, rtol=0)
    assert np.all(np.abs(w.data) <= 1)
    inc_id, _ = _sq_convs(C, rng, identity=True)
    _, w_self = self_query(fq, fq, inc_id, outc)
    np.testing.assert_allclose(w_self.data, 1.0, atol=1e-12)


def test_self_query_residual_modes():
    rng = np.random.default_rng(6)
    C = 4
    fq = Tensor(rng.normal(size=(1, C, 4, 4)))
    s = Tensor(rng.normal(size=(1, C, 4, 4)))
    inc, outc = _sq_convs(C, rng)
    a, _ = self_query(s, fq, inc, outc, "projected")
    b, _ = self_query(s, fq, inc, outc, "raw")
    assert a.shape == b.shape == fq.shape
    assert not np.allclose(a.data, b.data)
    with pytest.raises(ValueError):
        self_query(s, fq, inc, outc, "other")
    with pytest.raises(ShapeError):
        self_query(Tensor(np.ones((1, C, 3, 3))), fq, inc, outc)


def test_head_shapes(desk):
    out = desk.regression_head(Tensor(np.zeros((1, 32, 16, 16))), (64, 64))
    assert out.shape == (1, 1, 64, 64)
    with pytest.raises(ShapeError):
        desk.regression_head(Tensor(np.zeros((1, 32, 16, 16))), (48, 48))


def test_head_reaches_full_resolution_from_quarter_grid():
    model = LocalizationModel(ModelConfig(head_widths=(8, 8, 4)), seed=0)
    out = model.regression_head(Tensor(np.zeros((1, 32, 128, 128))), (512, 512))
    assert out.shape == (1, 1, 512, 512)


def test_forward_end_to_end(desk, image):
    feats = desk.forward(image, (10, 10, 22, 22))
    assert feats.prediction.shape == (1, 1, 64, 64)
    assert feats.weights.shape == (1, 1, 16, 16)
    # zero-initialized output conv: the untrained map is flat
    np.testing.assert_array_equal(feats.prediction.data, desk.head_out.bias.data[0] if desk.head_out.bias is not None else 0.0)


def test_ablation_variants_drop_parameters():
    full = LocalizationModel(ModelConfig(), seed=0).parameters()
    no_sq = LocalizationModel(ModelConfig(use_sq=False), seed=0).parameters()
    no_dfa = LocalizationModel(ModelConfig(use_dc=False, use_ccdc=False), seed=0).parameters()
    assert any(k.startswith("in_conv") for k in full)
    assert not any(k.startswith("in_conv") for k in no_sq)
    assert not any("offset" in k for k in no_dfa)
    assert set(no_sq) < set(full)


def test_seeded_init_is_reproducible():
    a = LocalizationModel(ModelConfig(), seed=3).parameters()
    b = LocalizationModel(ModelConfig(), seed=3).parameters()
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewloc import kernels as K
from fewloc.tensor import ShapeError, tensor
from fewloc.verify import oracles


def _field(offsets, masks):
    return K.DeformField(tensor(offsets), tensor(masks))


def test_kernel_offsets_enumerate_grid():
    offs = K.kernel_offsets(3, 3)
    assert len(offs) == 9
    assert offs[0] == (-1, -1) and offs[4] == (0, 0) and offs[-1] == (1, 1)


def test_conv2d_examples():
    ones = tensor(np.ones((1, 1, 3, 3)))
    assert K.conv2d(ones, ones).data.item() == 9.0
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 3, 6, 6))
    delta = np.zeros((3, 3, 3, 3))
    for c in range(3):
        delta[c, c, 1, 1] = 1.0
    np.testing.assert_array_equal(K.conv2d(tensor(x), tensor(delta), padding=1).data, x)
    x = rng.normal(size=(1, 4, 6, 6))
    w = rng.normal(size=(2, 4, 3, 3))
    np.testing.assert_allclose(K.conv2d(tensor(x), tensor(w), padding=1).data[0], oracles.conv2d_loops(x[0], w, padding=1), atol=1e-12)


def test_conv2d_stride_and_bias_match_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 2, 7, 7))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    got = K.conv2d(tensor(x), tensor(w), tensor(b), stride=2, padding=1).data[0]
    np.testing.assert_allclose(got, oracles.conv2d_loops(x[0], w, b, stride=2, padding=1), atol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError):
        K.conv2d(tensor(np.ones((1, 2, 4, 4))), tensor(np.ones((1, 3, 3, 3))))


def test_deform_zero_offsets_unit_masks_is_conv():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 3, 6, 6))
    w = rng.normal(size=(2, 3, 3, 3))
    f = _field(np.zeros((1, 18, 6, 6)), np.ones((1, 9, 6, 6)))
    np.testing.assert_array_equal(K.deform_conv2d(tensor(x), tensor(w), f).data, K.conv2d(tensor(x), tensor(w), padding=1).data)


def test_deform_integer_shift_on_interior():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 2, 8, 8))
    w = rng.normal(size=(2, 2, 3, 3))
    off = np.zeros((1, 18, 8, 8))
    off[:, 1::2] = 1.0  # dx = +1 on every tap
    got = K.deform_conv2d(tensor(x), tensor(w), _field(off, np.ones((1, 9, 8, 8)))).data
    shifted = np.zeros_like(x)
    shifted[..., :-1] = x[..., 1:]
    ref = K.conv2d(tensor(shifted), tensor(w), padding=1).data
    np.testing.assert_allclose(got[..., 1:-1, 1:-2], ref[..., 1:-1, 1:-2], atol=1e-12)


@pytest.mark.parametrize("axis", [0, 1])
def test_deform_half_pixel_on_ramp_is_exact(axis):
    H = W = 8
    ramp = np.broadcast_to(np.arange(W, dtype=float), (H, W)).copy()
    if axis == 0:
        ramp = ramp.T.copy()
    x = ramp[None, None]
    w = np.random.default_rng(4).normal(size=(1, 1, 3, 3))
    off = np.zeros((1, 18, H, W))
    off[:, axis::2] = 0.5
    got = K.deform_conv2d(tensor(x), tensor(w), _field(off, np.ones((1, 9, H, W)))).data
    ref = K.conv2d(tensor(x + 0.5), tensor(w), padding=1).data
    np.testing.assert_allclose(got[..., 1:-2, 1:-2], ref[..., 1:-2, 1:-2], atol=1e-12)


def test_deform_rejects_bad_fields():
    x = tensor(np.ones((1, 1, 4, 4)))
    w = tensor(np.ones((1, 1, 3, 3)))
    with pytest.raises(ShapeError):
        _field(np.zeros((1, 17, 4, 4)), np.ones((1, 9, 4, 4)))
    off = np.zeros((1, 18, 4, 4))
    off[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        K.deform_conv2d(x, w, _field(off, np.ones((1, 9, 4, 4))))


def test_ccdc_examples():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(2, 3, 5))
    const = np.full((1, 3, 5, 5), 2.5)
    np.testing.assert_allclose(K.ccdc_hv(tensor(const), tensor(w), theta=1.0).data, 0.0, atol=1e-13)
    x = rng.normal(size=(1, 3, 5, 5))
    cross = np.zeros((2, 3, 3, 3))
    for k, (dy, dx) in enumerate(K.CROSS_TAPS):
        cross[:, :, dy + 1, dx + 1] = w[..., k]
    np.testing.assert_allclose(
        K.ccdc_hv(tensor(x), tensor(w), theta=0.0).data, K.conv2d(tensor(x), tensor(cross), padding=1).data, atol=1e-13
    )
    x = rng.normal(size=(1, 2, 5, 5))
    w = rng.normal(size=(2, 2, 5))
    np.testing.assert_allclose(K.ccdc_hv(tensor(x), tensor(w), 0.5).data[0], oracles.ccdc_loops(x[0], w, 0.5), atol=1e-12)


def test_corr2d_examples():
    rng = np.random.default_rng(6)
    q = rng.normal(size=(1, 3, 6, 6))
    delta = np.zeros((1, 3, 3, 3))
    delta[..., 1, 1] = 1.0
    np.testing.assert_array_equal(K.corr2d_depthwise(tensor(q), tensor(delta)).data, q)
    np.testing.assert_array_equal(K.corr2d_depthwise(tensor(q), tensor(np.zeros((1, 3, 3, 3)))).data, 0.0)
    k = rng.normal(size=(1, 3, 3, 3))
    np.testing.assert_allclose(K.corr2d_depthwise(tensor(q), tensor(k)).data[0], oracles.corr2d_loops(q[0], k[0]), atol=1e-12)


def _dual(qd, qc, kd, kc):
    return K.DualStack(query=[("D", tensor(qd)), ("C", tensor(qc))], kernel=[("D", tensor(kd)), ("C", tensor(kc))])


def test_conv3d_dual_examples():
    rng = np.random.default_rng(7)
    qd, qc = rng.normal(size=(2, 1, 4, 8, 8))
    kd, kc = rng.normal(size=(2, 1, 4, 3, 3))
    d_only = K.corr2d_depthwise(tensor(qd), tensor(kd)).data
    np.testing.assert_array_equal(K.conv3d_dual(_dual(qd, np.zeros_like(qc), kd, np.zeros_like(kc))).data, d_only)
    np.testing.assert_allclose(K.conv3d_dual(_dual(qd, qd, kd, kd)).data, 2 * d_only, atol=1e-12)
    ref = oracles.corr2d_loops(qd[0], kd[0]) + oracles.corr2d_loops(qc[0], kc[0])
    np.testing.assert_allclose(K.conv3d_dual(_dual(qd, qc, kd, kc)).data[0], ref, atol=1e-12)


def test_dual_stack_checks_order():
    t = tensor(np.ones((1, 2, 4, 4)))
    k = tensor(np.ones((1, 2, 3, 3)))
    with pytest.raises(ShapeError):
        K.DualStack(query=[("D", t), ("C", t)], kernel=[("C", k), ("D", k)])


@settings(max_examples=40, deadline=None)
@given(
    c=st.integers(1, 4),
    h=st.integers(3, 8),
    w=st.integers(3, 8),
    o=st.integers(1, 3),
    pad=st.integers(0, 2),
    seed=st.integers(0, 2**31 - 1),
)
def test_conv2d_matches_oracle_property(c, h, w, o, pad, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(1, c, h, w))
    wt = rng.normal(size=(o, c, 3, 3))
    got = K.conv2d(tensor(x), tensor(wt), padding=pad).data[0]
    np.testing.assert_allclose(got, oracles.conv2d_loops(x[0], wt, padding=pad), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.0, 3.0))
def test_deform_matches_oracle_property(seed, scale):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(1, 2, 5, 6))
    wt = rng.normal(size=(2, 2, 3, 3))
    off = rng.normal(scale=scale, size=(1, 18, 5, 6))
    m = rng.random((1, 9, 5, 6))
    got = K.deform_conv2d(tensor(x), tensor(wt), _field(off, m)).data[0]
    np.testing.assert_allclose(got, oracles.deform_conv2d_loops(x[0], wt, off[0], m[0]), atol=1e-10)

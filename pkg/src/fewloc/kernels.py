"""Convolution operators: vanilla, deformable, cross central-difference and
the depth-2 dual-stack correlation used to compare support and query features.

All operators take and return 4-D (or 5-D for the stacked case) tensors and
register their gradients on the active tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, _result, stack

# HV cross taps as (dy, dx), in the order the cross weights are stored
CROSS_TAPS = ((-1, 0), (0, -1), (0, 0), (0, 1), (1, 0))


def kernel_offsets(kh: int, kw: int) -> list[tuple[int, int]]:
    """Sampling offsets p_k of a kh x kw grid relative to its center, row-major."""
    return [(i - kh // 2, j - kw // 2) for i in range(kh) for j in range(kw)]


def output_extent(n: int, k: int, padding: int, stride: int) -> int:
    return (n + 2 * padding - k) // stride + 1


# --------------------------------------------------------------------------
# vanilla convolution (im2col)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, Ho: int, Wo: int) -> np.ndarray:
    B, C = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (Ho - 1) * stride + 1 : stride, : (Wo - 1) * stride + 1 : stride]
    # B, C, Ho, Wo, kh, kw -> B, C*kh*kw, Ho*Wo
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(B, C * kh * kw, Ho * Wo)


def _col2im(cols: np.ndarray, shape, kh, kw, stride, padding, Ho, Wo) -> np.ndarray:
    B, C, H, W = shape
    gp = np.zeros((B, C, H + 2 * padding, W + 2 * padding), dtype=cols.dtype)
    cols = cols.reshape(B, C, kh, kw, Ho, Wo)
    ys = (Ho - 1) * stride + 1
    xs = (Wo - 1) * stride + 1
    for i in range(kh):
        for j in range(kw):
            gp[:, :, i : i + ys : stride, j : j + xs : stride] += cols[:, :, i, j]
    if padding:
        gp = gp[:, :, padding:-padding, padding:-padding]
    return gp


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int):
    B, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if C != Cw:
        raise ShapeError(f"conv2d channel mismatch: input has {C}, weights expect {Cw}")
    Ho = output_extent(H, kh, padding, stride)
    Wo = output_extent(W, kw, padding, stride)
    if Ho < 1 or Wo < 1:
        raise ShapeError(
            f"conv2d output would be empty: input {H}x{W}, kernel {kh}x{kw}, "
            f"padding {padding}, stride {stride}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    cols = _im2col(xp, kh, kw, stride, Ho, Wo)
    out = np.matmul(w.reshape(O, -1), cols).reshape(B, O, Ho, Wo)
    return out, cols, (Ho, Wo)


def _conv_backward(g, x_shape, w, cols, stride, padding, out_hw):
    O, C, kh, kw = w.shape
    B = g.shape[0]
    Ho, Wo = out_hw
    g2 = g.reshape(B, O, Ho * Wo)
    gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    gcols = np.matmul(w.reshape(O, -1).T, g2)
    gx = _col2im(gcols, x_shape, kh, kw, stride, padding, Ho, Wo)
    return gx, gw


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """y(p) = sum_k w_k x(p + p_k) (+ bias) with zero padding."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    out, cols, hw = _conv_forward(x.data, weight.data, stride, padding)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def bw(g):
        gx, gw = _conv_backward(g, x.shape, weight.data, cols, stride, padding, hw)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, inputs, bw)


# --------------------------------------------------------------------------
# deformable convolution


@dataclass
class DeformField:
    """Per-location sampling offsets (B x 2N x Ho x Wo, (dy, dx) pairs per tap)
    and modulation masks (B x N x Ho x Wo, values in [0, 1])."""

    offsets: Tensor
    masks: Tensor

    def __post_init__(self):
        if self.offsets.ndim != 4 or self.masks.ndim != 4:
            raise ShapeError("deform field tensors must be 4-D")
        if self.offsets.shape[1] != 2 * self.masks.shape[1]:
            raise ShapeError(
                f"offsets carry {self.offsets.shape[1]} channels but masks carry "
                f"{self.masks.shape[1]}; expected 2N and N"
            )
        if self.offsets.shape[2:] != self.masks.shape[2:]:
            raise ShapeError("offsets and masks must share spatial extents")

    @property
    def n_taps(self) -> int:
        return self.masks.shape[1]


def _bilinear_gather(xb: np.ndarray, py: np.ndarray, px: np.ndarray):
    """Sample xb (C x H x W) at fractional positions with zero exterior.

    Returns sampled values (C x *py.shape) plus what the backward pass needs.
    """
    C, H, W = xb.shape
    y0 = np.floor(py)
    x0 = np.floor(px)
    ly = py - y0
    lx = px - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    corners = []
    val = np.zeros((C,) + py.shape, dtype=xb.dtype)
    for dy, dx, wy, wx in (
        (0, 0, 1 - ly, 1 - lx),
        (0, 1, 1 - ly, lx),
        (1, 0, ly, 1 - lx),
        (1, 1, ly, lx),
    ):
        yc = y0 + dy
        xc = x0 + dx
        valid = (yc >= 0) & (yc < H) & (xc >= 0) & (xc < W)
        yi = np.clip(yc, 0, H - 1)
        xi = np.clip(xc, 0, W - 1)
        sample = xb[:, yi, xi] * valid
        val += sample * (wy * wx)
        corners.append((yi, xi, valid, dy, dx, sample))
    return val, (ly, lx, corners)


def _bilinear_scatter(gval, cache, shape):
    """Adjoint of :func:`_bilinear_gather` wrt the image and the positions."""
    C, H, W = shape
    ly, lx, corners = cache
    gx = np.zeros(C * H * W, dtype=gval.dtype)
    gpy = np.zeros(ly.shape, dtype=gval.dtype)
    gpx = np.zeros(lx.shape, dtype=gval.dtype)
    chan = (np.arange(C) * (H * W)).reshape((C,) + (1,) * ly.ndim)
    for yi, xi, valid, dy, dx, sample in corners:
        wy = ly if dy else 1 - ly
        wx = lx if dx else 1 - lx
        contrib = gval * (wy * wx * valid)
        idx = (chan + yi * W + xi).ravel()
        gx += np.bincount(idx, weights=contrib.ravel(), minlength=C * H * W)
        gs = (gval * sample).sum(axis=0)
        gpy += gs * (wx if dy else -wx)
        gpx += gs * (wy if dx else -wy)
    return gx.reshape(C, H, W), gpy, gpx


def deform_conv2d(
    x: Tensor,
    weight: Tensor,
    field: DeformField,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 1,
) -> Tensor:
    """y(p) = sum_k w_k x(p + p_k + dp_k) m_k, bilinear sampling, zero exterior."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"deform_conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    B, C, H, W = x.shape
    O, Cw, kh, kw = weight.shape
    if C != Cw:
        raise ShapeError(f"deform_conv2d channel mismatch: input has {C}, weights expect {Cw}")
    N = kh * kw
    Ho = output_extent(H, kh, padding, stride)
    Wo = output_extent(W, kw, padding, stride)
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"deform_conv2d output would be empty for input {H}x{W}")
    off, msk = field.offsets, field.masks
    if field.n_taps != N:
        raise ShapeError(f"deform field has {field.n_taps} taps, kernel grid has {N}")
    if off.shape[0] != B or off.shape[2:] != (Ho, Wo):
        raise ShapeError(
            f"deform field shape {off.shape} does not match output extents {(B, 2 * N, Ho, Wo)}"
        )
    if not np.all(np.isfinite(off.data)):
        raise ValueError("deform_conv2d offsets contain non-finite values")

    ky = (np.arange(N) // kw).reshape(N, 1, 1)
    kx = (np.arange(N) % kw).reshape(N, 1, 1)
    base_y = (np.arange(Ho) * stride - padding).reshape(1, Ho, 1) + ky
    base_x = (np.arange(Wo) * stride - padding).reshape(1, 1, Wo) + kx
    w2 = weight.data.reshape(O, C * N)

    out = np.empty((B, O, Ho, Wo), dtype=x.dtype)
    caches = []
    for b in range(B):
        py = base_y + off.data[b, 0::2]
        px = base_x + off.data[b, 1::2]
        val, cache = _bilinear_gather(x.data[b], py, px)  # C, N, Ho, Wo
        cols = (val * msk.data[b][None]).reshape(C * N, Ho * Wo)
        out[b] = (w2 @ cols).reshape(O, Ho, Wo)
        caches.append((val, cols, cache))
    if bias is not None:
        out += bias.data.reshape(1, -1, 1, 1)

    def bw(g):
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(weight.data).reshape(O, C * N)
        goff = np.zeros_like(off.data)
        gmsk = np.zeros_like(msk.data)
        for b in range(B):
            val, cols, cache = caches[b]
            g2 = g[b].reshape(O, Ho * Wo)
            gw += g2 @ cols.T
            gcols = (w2.T @ g2).reshape(C, N, Ho, Wo)
            gmsk[b] = (gcols * val).sum(axis=0)
            gval = gcols * msk.data[b][None]
            gx[b], goff[b, 0::2], goff[b, 1::2] = _bilinear_scatter(gval, cache, (C, H, W))
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw.reshape(weight.shape), goff, gmsk, gb

    inputs = (x, weight, off, msk) + (() if bias is None else (bias,))
    return _result(out, inputs, bw)


# --------------------------------------------------------------------------
# cross central-difference convolution


def _cross_kernel(w: np.ndarray) -> np.ndarray:
    O, C, _ = w.shape
    K = np.zeros((O, C, 3, 3), dtype=w.dtype)
    for k, (dy, dx) in enumerate(CROSS_TAPS):
        K[:, :, dy + 1, dx + 1] = w[:, :, k]
    return K


def _cross_valid(H: int, W: int, dtype) -> np.ndarray:
    """valid[k, h, w] = 1 where tap k of pixel (h, w) falls inside the image."""
    v = np.zeros((len(CROSS_TAPS), H, W), dtype=dtype)
    for k, (dy, dx) in enumerate(CROSS_TAPS):
        v[k, max(0, -dy) : H - max(0, dy), max(0, -dx) : W - max(0, dx)] = 1.0
    return v


def ccdc_hv(x: Tensor, weight: Tensor, theta: float = 0.5, bias: Optional[Tensor] = None) -> Tensor:
    """Cross central-difference convolution over the five HV-cross taps.

    y(p) = theta * sum_k w_k (x(p+p_k) - x(p)) + (1 - theta) * sum_k w_k x(p+p_k)

    ``weight`` has shape O x C x 5 with taps ordered as :data:`CROSS_TAPS`.
    Taps falling outside the image are dropped from both sums, so a constant
    input yields exactly zero at theta = 1, borders included.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if weight.ndim != 3 or weight.shape[2] != len(CROSS_TAPS):
        raise ShapeError(f"ccdc_hv weight must be O x C x 5 (HV cross), got {weight.shape}")
    if x.ndim != 4:
        raise ShapeError(f"ccdc_hv expects 4-D input, got {x.shape}")
    B, C, H, W = x.shape
    O = weight.shape[0]
    if weight.shape[1] != C:
        raise ShapeError(f"ccdc_hv channel mismatch: input has {C}, weights expect {weight.shape[1]}")

    K = _cross_kernel(weight.data)
    raw, cols, hw = _conv_forward(x.data, K, 1, 1)
    valid = _cross_valid(H, W, x.dtype)
    # A[o, c, h, w] = sum over in-image taps of w[o, c, k]
    A = np.einsum("ock,khw->ochw", weight.data, valid)
    center = np.einsum("ochw,bchw->bohw", A, x.data)
    out = raw - theta * center
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def bw(g):
        gx, gK = _conv_backward(g, x.shape, K, cols, 1, 1, hw)
        gw = np.stack([gK[:, :, dy + 1, dx + 1] for dy, dx in CROSS_TAPS], axis=2)
        if theta:
            gx = gx - theta * np.einsum("bohw,ochw->bchw", g, A)
            gw = gw - theta * np.einsum("bohw,khw,bchw->ock", g, valid, x.data, optimize=True)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, inputs, bw)


# --------------------------------------------------------------------------
# channel-preserving correlation


def _depthwise_forward(q: np.ndarray, k: np.ndarray):
    B, C, H, W = q.shape
    kh, kw = k.shape[-2:]
    ph, pw = kh // 2, kw // 2
    qp = np.pad(q, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros_like(q)
    for i in range(kh):
        for j in range(kw):
            out += k[:, :, i, j, None, None] * qp[:, :, i : i + H, j : j + W]
    return out, qp


def _depthwise_backward(g, q_shape, k, qp):
    B, C, H, W = q_shape
    kh, kw = k.shape[-2:]
    ph, pw = kh // 2, kw // 2
    gqp = np.zeros_like(qp)
    gk = np.zeros((max(B, k.shape[0]),) + k.shape[1:], dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            gqp[:, :, i : i + H, j : j + W] += g * k[:, :, i, j, None, None]
            gk[:, :, i, j] = (g * qp[:, :, i : i + H, j : j + W]).sum(axis=(2, 3))
    if k.shape[0] == 1 and B > 1:
        gk = gk.sum(axis=0, keepdims=True)
    gq = gqp[:, :, ph : ph + H, pw : pw + W]
    return gq, gk


def _check_depthwise(q: Tensor, k: Tensor) -> None:
    if q.ndim != 4 or k.ndim != 4:
        raise ShapeError(f"expected 4-D query and kernel, got {q.shape} and {k.shape}")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"channel mismatch: query has {q.shape[1]}, kernel has {k.shape[1]}")
    if k.shape[0] not in (1, q.shape[0]):
        raise ShapeError(f"kernel batch {k.shape[0]} incompatible with query batch {q.shape[0]}")
    if k.shape[2] % 2 == 0 or k.shape[3] % 2 == 0:
        raise ShapeError(f"kernel extents must be odd to preserve size, got {k.shape[2:]}")


def corr2d_depthwise(query: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel 2-D correlation, same-size output (padding k//2)."""
    _check_depthwise(query, kernel)
    out, qp = _depthwise_forward(query.data, kernel.data)

    def bw(g):
        return _depthwise_backward(g, query.shape, kernel.data, qp)

    return _result(out, (query, kernel), bw)


def conv3d_depth(query: Tensor, kernel: Tensor) -> Tensor:
    """3-D correlation whose kernel spans the full depth of the input.

    query: B x C x D x H x W, kernel: B x C x D x kh x kw. With no depth
    padding the output depth is 1 and is squeezed, giving B x C x H x W.
    Channels are not mixed.
    """
    if query.ndim != 5 or kernel.ndim != 5:
        raise ShapeError(f"conv3d_depth expects 5-D stacks, got {query.shape} and {kernel.shape}")
    B, C, D, H, W = query.shape
    if kernel.shape[1:3] != (C, D):
        raise ShapeError(f"kernel stack {kernel.shape} does not match query stack {query.shape}")
    kB = kernel.shape[0]
    q4 = query.data.reshape(B, C * D, H, W)
    k4 = kernel.data.reshape(kB, C * D, *kernel.shape[3:])
    if kB not in (1, B):
        raise ShapeError(f"kernel batch {kB} incompatible with query batch {B}")
    per_depth, qp = _depthwise_forward(q4, k4)
    out = per_depth.reshape(B, C, D, H, W).sum(axis=2)

    def bw(g):
        g4 = np.repeat(g[:, :, None], D, axis=2).reshape(B, C * D, H, W)
        gq, gk = _depthwise_backward(g4, q4.shape, k4, qp)
        return gq.reshape(query.shape), gk.reshape(kernel.shape)

    return _result(out, (query, kernel), bw)


@dataclass
class DualStack:
    """Depth-ordered query and kernel stacks for the similarity correlation.

    ``query`` and ``kernel`` are sequences of ``(label, tensor)`` pairs; the
    labels must appear in the same order in both, which fixes which kernel
    slice meets which query slice.
    """

    query: Sequence[tuple[str, Tensor]]
    kernel: Sequence[tuple[str, Tensor]]

    def __post_init__(self):
        q_order = [name for name, _ in self.query]
        k_order = [name for name, _ in self.kernel]
        if q_order != k_order:
            raise ShapeError(f"depth ordering differs: query {q_order} vs kernel {k_order}")
        if len(set(q_order)) != len(q_order):
            raise ShapeError(f"duplicate depth labels {q_order}")
        c_q = {t.shape[1] for _, t in self.query}
        c_k = {t.shape[1] for _, t in self.kernel}
        if len(c_q) != 1 or c_q != c_k:
            raise ShapeError(f"channel counts differ across stack: query {c_q}, kernel {c_k}")

    @property
    def order(self) -> list[str]:
        return [name for name, _ in self.query]

    @property
    def depth(self) -> int:
        return len(self.query)

    def stacked(self) -> tuple[Tensor, Tensor]:
        q = stack([t for _, t in self.query], axis=2)
        k = stack([t for _, t in self.kernel], axis=2)
        return q, k


def conv3d_dual(dual: DualStack) -> Tensor:
    """Correlate the kernel stack over the query stack along H, W and depth.

    The result equals the sum of the per-slice depthwise correlations.
    """
    q, k = dual.stacked()
    return conv3d_depth(q, k)

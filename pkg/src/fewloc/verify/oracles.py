"""Nested-loop reference implementations.

These are deliberately naive: one scalar at a time, explicit bounds checks,
no numpy vectorization. They exist to check the fast operators and must not
share code with them.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def _at(x, c, i, j):
    H, W = x.shape[1:]
    if 0 <= i < H and 0 <= j < W:
        return x[c, i, j]
    return 0.0


def conv2d_loops(x, w, bias=None, stride=1, padding=0):
    """x: C x H x W, w: O x C x kh x kw -> O x Ho x Wo."""
    C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    y = np.zeros((O, Ho, Wo))
    for o in range(O):
        for i in range(Ho):
            for j in range(Wo):
                acc = 0.0 if bias is None else float(bias[o])
                for c in range(C):
                    for a in range(kh):
                        for b in range(kw):
                            acc += w[o, c, a, b] * _at(x, c, i * stride - padding + a, j * stride - padding + b)
                y[o, i, j] = acc
    return y


def bilinear_loops(x, c, py, px):
    """Sample channel c of x at (py, px); zero outside the image."""
    y0 = math.floor(py)
    x0 = math.floor(px)
    fy = py - y0
    fx = px - x0
    return (
        (1 - fy) * (1 - fx) * _at(x, c, y0, x0)
        + (1 - fy) * fx * _at(x, c, y0, x0 + 1)
        + fy * (1 - fx) * _at(x, c, y0 + 1, x0)
        + fy * fx * _at(x, c, y0 + 1, x0 + 1)
    )


def deform_conv2d_loops(x, w, offsets, masks, stride=1, padding=1):
    """offsets: 2N x Ho x Wo as (dy, dx) per tap; masks: N x Ho x Wo."""
    C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    y = np.zeros((O, Ho, Wo))
    for o in range(O):
        for i in range(Ho):
            for j in range(Wo):
                acc = 0.0
                for a in range(kh):
                    for b in range(kw):
                        k = a * kw + b
                        py = i * stride - padding + a + offsets[2 * k, i, j]
                        px = j * stride - padding + b + offsets[2 * k + 1, i, j]
                        for c in range(C):
                            acc += w[o, c, a, b] * bilinear_loops(x, c, py, px) * masks[k, i, j]
                y[o, i, j] = acc
    return y


HV_TAPS = [(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]


def ccdc_loops(x, w, theta):
    """w: O x C x 5 over the HV cross; out-of-image taps are skipped."""
    C, H, W = x.shape
    O = w.shape[0]
    y = np.zeros((O, H, W))
    for o in range(O):
        for i in range(H):
            for j in range(W):
                grad_term = 0.0
                raw_term = 0.0
                for c in range(C):
                    for k, (dy, dx) in enumerate(HV_TAPS):
                        ii, jj = i + dy, j + dx
                        if not (0 <= ii < H and 0 <= jj < W):
                            continue
                        grad_term += w[o, c, k] * (x[c, ii, jj] - x[c, i, j])
                        raw_term += w[o, c, k] * x[c, ii, jj]
                y[o, i, j] = theta * grad_term + (1 - theta) * raw_term
    return y


def corr2d_loops(q, k):
    """Per-channel correlation of q (C x H x W) with k (C x kh x kw), same size."""
    C, H, W = q.shape
    kh, kw = k.shape[1:]
    y = np.zeros((C, H, W))
    for c in range(C):
        for i in range(H):
            for j in range(W):
                acc = 0.0
                for a in range(kh):
                    for b in range(kw):
                        acc += k[c, a, b] * _at(q, c, i + a - kh // 2, j + b - kw // 2)
                y[c, i, j] = acc
    return y


def conv3d_loops(q, k):
    """q: C x D x H x W, k: C x D x kh x kw; full-depth kernel, output C x H x W."""
    C, D, H, W = q.shape
    kh, kw = k.shape[2:]
    y = np.zeros((C, H, W))
    for c in range(C):
        for i in range(H):
            for j in range(W):
                acc = 0.0
                for d in range(D):
                    for a in range(kh):
                        for b in range(kw):
                            ii = i + a - kh // 2
                            jj = j + b - kw // 2
                            if 0 <= ii < H and 0 <= jj < W:
                                acc += k[c, d, a, b] * q[c, d, ii, jj]
                y[c, i, j] = acc
    return y


def adaptive_pool_loops(x, oh, ow):
    """x: C x H x W; average over [floor(i H / oh), ceil((i + 1) H / oh))."""
    C, H, W = x.shape
    y = np.zeros((C, oh, ow))
    for c in range(C):
        for i in range(oh):
            y0 = (i * H) // oh
            y1 = math.ceil((i + 1) * H / oh)
            for j in range(ow):
                x0 = (j * W) // ow
                x1 = math.ceil((j + 1) * W / ow)
                vals = [x[c, a, b] for a in range(y0, y1) for b in range(x0, x1)]
                y[c, i, j] = sum(vals) / len(vals)
    return y


def max_matching_bruteforce(pred, gt, sigma):
    """Largest one-to-one gated matching, ties broken by smallest total distance.

    Returns (tp, total_distance). Enumerates every injective assignment of the
    smaller set into the larger one, so keep both sets tiny.
    """
    pred = list(pred)
    gt = list(gt)
    swap = len(pred) > len(gt)
    small, large = (gt, pred) if swap else (pred, gt)
    best = (0, 0.0)
    for perm in itertools.permutations(range(len(large)), len(small)):
        tp = 0
        total = 0.0
        for i, j in enumerate(perm):
            d = math.hypot(small[i][0] - large[j][0], small[i][1] - large[j][1])
            if d <= sigma:
                tp += 1
                total += d
        if tp > best[0] or (tp == best[0] and total < best[1] - 1e-12):
            best = (tp, total)
    return best

"""Convolution kernels next to their loop-by-loop definitions.

Each fast kernel is compared with a direct nested-loop evaluation, then the
special cases that tie them together are shown.
"""
import numpy as np

from fewloc import kernels as K
from fewloc.tensor import tensor
from fewloc.verify import oracles

rng = np.random.default_rng(0)
x = rng.normal(size=(1, 3, 7, 7))
w = rng.normal(size=(2, 3, 3, 3))

fast = K.conv2d(tensor(x), tensor(w), padding=1).data[0]
slow = oracles.conv2d_loops(x[0], w, padding=1)
print("conv2d vs loops, max |diff|:", np.abs(fast - slow).max())

# A deformable conv samples each tap at a learned fractional offset and
# scales it by a mask. With zero offsets and unit masks it is a plain conv.
n = 9
zero = K.DeformField(tensor(np.zeros((1, 2 * n, 7, 7))), tensor(np.ones((1, n, 7, 7))))
same = K.deform_conv2d(tensor(x), tensor(w), zero).data[0]
print("deform(0 offsets, 1 masks) == conv2d:", np.array_equal(same, fast))

off = rng.normal(scale=0.7, size=(1, 2 * n, 7, 7))
mask = rng.random((1, n, 7, 7))
d_fast = K.deform_conv2d(tensor(x), tensor(w), K.DeformField(tensor(off), tensor(mask))).data[0]
d_slow = oracles.deform_conv2d_loops(x[0], w, off[0], mask[0])
print("deform_conv2d vs loops, max |diff|:", np.abs(d_fast - d_slow).max())

# The cross-shaped central-difference conv blends raw taps with
# center-subtracted taps. On a constant image the differences vanish.
wc = rng.normal(size=(2, 3, 5))
flat = np.full((1, 3, 7, 7), 0.8)
for theta in (0.0, 0.5, 1.0):
    out = K.ccdc_hv(tensor(flat), tensor(wc), theta).data
    print(f"ccdc on constant input, theta={theta}: max |out| = {np.abs(out).max():.3g}")
print("ccdc vs loops, max |diff|:",
      np.abs(K.ccdc_hv(tensor(x), tensor(wc), 0.5).data[0] - oracles.ccdc_loops(x[0], wc, 0.5)).max())

# Stacking two branches along depth and correlating with a depth-2 kernel
# equals summing the two per-branch correlations.
qd, qc = rng.normal(size=(2, 1, 3, 8, 8))
kd, kc = rng.normal(size=(2, 1, 3, 3, 3))
dual = K.DualStack(query=[("D", tensor(qd)), ("C", tensor(qc))], kernel=[("D", tensor(kd)), ("C", tensor(kc))])
both = K.conv3d_dual(dual).data
parts = K.corr2d_depthwise(tensor(qd), tensor(kd)).data + K.corr2d_depthwise(tensor(qc), tensor(kc)).data
print("depth-stacked correlation vs branch sum, max |diff|:", np.abs(both - parts).max())

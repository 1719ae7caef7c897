"""The self-query weight plane.

The similarity map and the query features are projected by one shared 1x1
conv, and their per-pixel cosine along channels gives a weight W in [-1, 1].
"""
import numpy as np

from fewloc.layers import Conv2d
from fewloc.model import self_query
from fewloc.tensor import Tensor

rng = np.random.default_rng(1)
C = 8
query = Tensor(rng.normal(size=(1, C, 6, 6)))
sim = Tensor(rng.normal(size=(1, C, 6, 6)))
in_conv = Conv2d(C, C, 1, bias=False, rng=rng)
out_conv = Conv2d(C, C, 1, bias=False, rng=rng)

enhanced, W = self_query(sim, query, in_conv, out_conv)
print("W range:", W.data.min().round(3), W.data.max().round(3))
print("enhanced map shape:", enhanced.shape)

_, W_scaled = self_query(Tensor(7.3 * sim.data), query, in_conv, out_conv)
_, W_neg = self_query(Tensor(-sim.data), query, in_conv, out_conv)
print("scaling the map leaves W unchanged:", np.abs(W_scaled.data - W.data).max())
print("negating the map negates W:", np.array_equal(W_neg.data, -W.data))

identity = Conv2d(C, C, 1, bias=False)
identity.weight.data[...] = np.eye(C)[:, :, None, None]
_, W_self = self_query(query, query, identity, out_conv)
print("a map compared with itself gives W = 1:", np.allclose(W_self.data, 1.0))

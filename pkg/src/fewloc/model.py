"""The localization network: backbone, support cropping, dual-path
augmentation, dual-stack correlation, self query and regression head."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels as K
from .layers import Conv2d, CrossDiffConv, DeformConv2d, Layer
from .tensor import (
    DEFAULT_DTYPE,
    ShapeError,
    Tensor,
    adaptive_avg_pool,
    add,
    bilinear_upsample,
    concat,
    cosine_similarity,
    crop,
    leaky_relu,
)


@dataclass(frozen=True)
class BackboneConfig:
    """Strided conv backbone; stage outputs are resampled to the feature grid,
    concatenated and projected to ``channels``.

    ``stage_strides`` are cumulative strides relative to the input image.
    """

    stage_channels: tuple[int, ...] = (16, 32, 64)
    stage_strides: tuple[int, ...] = (4, 8, 16)
    channels: int = 32
    feature_stride: int = 4
    stem_channels: int = 16

    def __post_init__(self):
        if len(self.stage_channels) != len(self.stage_strides):
            raise ValueError("stage_channels and stage_strides differ in length")
        prev = 2
        for s in self.stage_strides:
            if s % prev or s < prev:
                raise ValueError(f"stage strides must grow by integer factors from 2: {self.stage_strides}")
            prev = s
        if self.stage_strides[0] != self.feature_stride:
            raise ValueError("first stage must sit on the feature grid")

    @property
    def concat_width(self) -> int:
        return sum(self.stage_channels)

    @classmethod
    def reference(cls) -> "BackboneConfig":
        """Widths of the first three ResNet50 stages, projected to 256."""
        return cls(stage_channels=(256, 512, 1024), stage_strides=(4, 8, 16), channels=256, stem_channels=64)


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    head_widths: tuple[int, ...] = (16, 16, 8)
    theta: float = 0.5
    slope: float = 0.01
    use_dc: bool = True
    use_ccdc: bool = True
    use_sq: bool = True
    # "projected": W + In_conv(F_Q); "raw": W + F_Q
    sq_residual: str = "projected"
    dtype: str = "float64"

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class EpisodeFeatures:
    query: Tensor
    support: Tensor
    query_d: Tensor
    support_d: Tensor
    query_c: Tensor
    support_c: Tensor
    similarity: Tensor
    weights: Optional[Tensor]
    enhanced: Tensor
    prediction: Tensor


def box_to_window(box, stride: int, hw: tuple[int, int]) -> tuple[int, int, int, int]:
    """Map a pixel box (x1, y1, x2, y2) onto feature cells, rounding outward.

    Returns (y0, y1, x0, x1) with exclusive upper bounds.
    """
    x1, y1, x2, y2 = box
    H, W = hw
    if not (x2 > x1 and y2 > y1):
        raise ValueError(f"exemplar box {tuple(box)} has no area")
    fx0 = max(0, math.floor(x1 / stride))
    fy0 = max(0, math.floor(y1 / stride))
    fx1 = min(W, math.ceil(x2 / stride))
    fy1 = min(H, math.ceil(y2 / stride))
    if fx1 <= fx0 or fy1 <= fy0:
        raise ValueError(
            f"exemplar box {tuple(box)} maps to an empty {fy1 - fy0}x{fx1 - fx0} window "
            f"on the {H}x{W} feature grid at stride {stride}"
        )
    return fy0, fy1, fx0, fx1


def crop_support(query: Tensor, box, stride: int) -> Tensor:
    """Crop the exemplar window from the query features and pool it to 3 x 3."""
    y0, y1, x0, x1 = box_to_window(box, stride, query.shape[2:])
    return adaptive_avg_pool(crop(query, y0, y1, x0, x1), (3, 3))


def self_query(
    sim: Tensor, query: Tensor, in_conv: Conv2d, out_conv: Conv2d, residual: str = "projected"
) -> tuple[Tensor, Tensor]:
    """Weight the similarity map by its agreement with the query features.

    Returns (enhanced map, weight plane W). W is the channel-axis cosine
    between the shared projections of ``sim`` and ``query``; it is added to
    every channel of the projected query features and mapped through
    ``out_conv``.
    """
    if sim.shape != query.shape:
        raise ShapeError(f"self_query needs equal shapes, got {sim.shape} and {query.shape}")
    q_t = in_conv(query)
    s_t = in_conv(sim)
    w = cosine_similarity(s_t, q_t)
    if residual == "projected":
        base = q_t
    elif residual == "raw":
        base = query
    else:
        raise ValueError(f"unknown self-query residual {residual!r}")
    return out_conv(add(base, w)), w


class LocalizationModel(Layer):
    def __init__(self, cfg: ModelConfig = ModelConfig(), seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dt = cfg.np_dtype
        bb = cfg.backbone
        C = bb.channels

        self.stem = Conv2d(3, bb.stem_channels, 3, stride=2, rng=rng, dtype=dt)
        self.stages = []
        cin, prev = bb.stem_channels, 2
        for i, (cout, s) in enumerate(zip(bb.stage_channels, bb.stage_strides)):
            conv = Conv2d(cin, cout, 3, stride=s // prev, rng=rng, dtype=dt)
            self.stages.append(conv)
            cin, prev = cout, s
        self.project = Conv2d(bb.concat_width, C, 3, rng=rng, dtype=dt)

        self.deform = DeformConv2d(C, C, rng=rng, dtype=dt) if cfg.use_dc else Conv2d(C, C, 3, bias=False, rng=rng, dtype=dt)
        self.gradient = (
            CrossDiffConv(C, C, cfg.theta, rng=rng, dtype=dt)
            if cfg.use_ccdc
            else Conv2d(C, C, 3, bias=False, rng=rng, dtype=dt)
        )

        self.in_conv = Conv2d(C, C, 1, bias=False, rng=rng, dtype=dt)
        self.out_conv = Conv2d(C, C, 1, bias=False, rng=rng, dtype=dt)

        self.head = []
        cin = C
        for i, w in enumerate(cfg.head_widths):
            conv = Conv2d(cin, w, 3, rng=rng, dtype=dt)
            self.head.append(conv)
            cin = w
        # the map starts flat at zero; random output weights stall some seeds
        self.head_out = Conv2d(cin, 1, 1, rng=rng, dtype=dt, zero_init=True)

        self._children["stem"] = self.stem
        self._children.update({f"stage{i + 1}": c for i, c in enumerate(self.stages)})
        self._children.update(project=self.project, deform=self.deform, gradient=self.gradient)
        if cfg.use_sq:
            self._children.update(in_conv=self.in_conv, out_conv=self.out_conv)
        self._children.update({f"head{i + 1}": c for i, c in enumerate(self.head)})
        self._children["head_out"] = self.head_out

    # ------------------------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def extract_features(self, image: Tensor) -> Tensor:
        bb = self.cfg.backbone
        R = image.shape[2]
        if image.shape[2] % bb.stage_strides[-1] or image.shape[3] % bb.stage_strides[-1]:
            raise ShapeError(
                f"image {image.shape[2]}x{image.shape[3]} is not divisible by the backbone stride "
                f"{bb.stage_strides[-1]}"
            )
        grid = (image.shape[2] // bb.feature_stride, image.shape[3] // bb.feature_stride)
        slope = self.cfg.slope
        h = leaky_relu(self.stem(image), slope)
        outs = []
        for conv in self.stages:
            h = leaky_relu(conv(h), slope)
            outs.append(h if h.shape[2:] == grid else bilinear_upsample(h, grid))
        assert R // bb.feature_stride == grid[0]
        return self.project(concat(outs, axis=1))

    def dfa_forward(self, query: Tensor, support: Tensor):
        if query.shape[1] != support.shape[1]:
            raise ShapeError(f"query has {query.shape[1]} channels, support has {support.shape[1]}")
        return self.deform(query), self.deform(support), self.gradient(query), self.gradient(support)

    def similarity_forward(self, qd, sd, qc, sc) -> Tensor:
        dual = K.DualStack(
            query=[("deformation", qd), ("gradient", qc)],
            kernel=[("deformation", sd), ("gradient", sc)],
        )
        return K.conv3d_dual(dual)

    def regression_head(self, x: Tensor, out_hw: tuple[int, int]) -> Tensor:
        H, W = x.shape[2:]
        fy, fx = out_hw[0] / H, out_hw[1] / W
        n_up = round(math.log2(fy)) if fy >= 1 else -1
        if fy != fx or n_up < 0 or 2**n_up != fy or n_up >= len(self.head) + 1:
            raise ShapeError(
                f"{H}x{W} cannot reach {out_hw[0]}x{out_hw[1]} with {len(self.head)} head blocks "
                "and x2 upsampling"
            )
        for i, conv in enumerate(self.head):
            x = leaky_relu(conv(x), self.cfg.slope)
            if i < n_up:
                x = bilinear_upsample(x, (x.shape[2] * 2, x.shape[3] * 2))
        return self.head_out(x)

    def forward(self, image, box) -> EpisodeFeatures:
        if not isinstance(image, Tensor):
            image = Tensor(np.asarray(image, dtype=self.cfg.np_dtype))
        if image.ndim == 3:
            image = Tensor._wrap(image.data[None], image.requires_grad)
        fq = self.extract_features(image)
        fs = crop_support(fq, box, self.cfg.backbone.feature_stride)
        qd, sd, qc, sc = self.dfa_forward(fq, fs)
        sim = self.similarity_forward(qd, sd, qc, sc)
        if self.cfg.use_sq:
            enhanced, w = self_query(sim, fq, self.in_conv, self.out_conv, self.cfg.sq_residual)
        else:
            enhanced, w = sim, None
        pred = self.regression_head(enhanced, image.shape[2:])
        return EpisodeFeatures(fq, fs, qd, sd, qc, sc, sim, w, enhanced, pred)

    def __call__(self, image, box) -> Tensor:
        return self.forward(image, box).prediction

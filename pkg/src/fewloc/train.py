"""Episodic training, prediction and evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Episode
from .locmap import DecoderConfig, decode_peaks, encode_location_map
from .metrics import MetricsReport, evaluate
from .model import LocalizationModel
from .optim import Adam, step_decay_lr
from .tensor import GradTape, Tensor, mse_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-5
    decay_factor: float = 0.25
    decay_every: int = 80  # epochs
    epochs: int = 200
    batch_size: int = 1
    resolution: int = 512
    shots: int = 1
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.shots != 1:
            raise ValueError("only the one-shot setting is supported")
        if self.batch_size != 1:
            raise ValueError("episodes are processed one at a time (batch size 1)")

    def lr_at(self, epoch: int) -> float:
        return step_decay_lr(self.lr, epoch, self.decay_factor, self.decay_every)

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        """Small-canvas preset: 100x the reference rate and a schedule
        compressed to the same decay points relative to the run length."""
        base = dict(lr=2e-3, epochs=9, decay_every=4, resolution=64, max_steps=300)
        base.update(kw)
        return cls(**base)


def episode_target(ep: Episode, dtype=np.float64) -> Tensor:
    _, H, W = ep.image.shape
    return Tensor(encode_location_map(ep.points, (H, W)).astype(dtype)[None, None])


def train_step(model: LocalizationModel, ep: Episode, opt: Adam, lr: float) -> float:
    """One forward/backward/update on a single episode; returns the loss."""
    dt = model.cfg.np_dtype
    opt.zero_grad()
    with GradTape() as tape:
        pred = model(Tensor(ep.image.astype(dt)), ep.box)
        loss = mse_loss(pred, episode_target(ep, dt))
    value = loss.item()
    if not math.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value} on episode {ep.image_id}")
    tape.backward(loss)
    opt.step(lr)
    return value


def predict_map(model: LocalizationModel, ep: Episode) -> np.ndarray:
    dt = model.cfg.np_dtype
    return model(Tensor(ep.image.astype(dt)), ep.box).data[0, 0]


def predict_points(model, ep: Episode, decoder: DecoderConfig = DecoderConfig()):
    return decode_peaks(predict_map(model, ep), decoder)


def evaluate_model(
    model: LocalizationModel,
    episodes: Sequence[Episode],
    sigmas: Sequence[float] = (5.0, 10.0),
    decoder: DecoderConfig = DecoderConfig(),
) -> MetricsReport:
    preds = [predict_points(model, ep, decoder) for ep in episodes]
    return evaluate(preds, [ep.points for ep in episodes], sigmas, [ep.image_id for ep in episodes])


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    val_f1: Optional[float] = None


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_state: Optional[dict[str, np.ndarray]] = None
    steps: int = 0


def fit(
    model: LocalizationModel,
    train_eps: Sequence[Episode],
    cfg: TrainConfig,
    val_eps: Sequence[Episode] = (),
    val_sigma: float = 10.0,
    decoder: DecoderConfig = DecoderConfig(),
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """Train for ``cfg.epochs`` epochs (or ``cfg.max_steps`` steps).

    Episodes are visited in a seeded order per epoch. When validation
    episodes are given, the parameters of the epoch with the best F1 at
    ``val_sigma`` are kept in ``best_state``.
    """
    if not train_eps:
        raise ValueError("training split is empty")
    params = model.parameters()
    opt = Adam(params, cfg.betas, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    out = TrainResult()
    best = -1.0
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        losses = []
        for i in rng.permutation(len(train_eps)):
            if cfg.max_steps is not None and out.steps >= cfg.max_steps:
                break
            losses.append(train_step(model, train_eps[i], opt, lr))
            out.steps += 1
        if not losses:
            break
        rec = EpochRecord(epoch, lr, float(np.mean(losses)))
        if val_eps:
            rec.val_f1 = evaluate_model(model, val_eps, (val_sigma,), decoder).f1(val_sigma)
            if rec.val_f1 > best:
                best = rec.val_f1
                out.best_epoch = epoch
                out.best_state = {k: p.data.copy() for k, p in params.items()}
        out.history.append(rec)
        log.info("epoch %d lr %.3g loss %.6f val_f1 %s", epoch, lr, rec.loss, rec.val_f1)
        if on_epoch is not None:
            on_epoch(rec)
    return out

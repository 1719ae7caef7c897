"""Run configuration: a flat ``key = value`` text document.

Defaults are overridden by a config file, which is overridden by command
line flags. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .locmap import DecoderConfig
from .model import BackboneConfig, ModelConfig
from .train import TrainConfig


@dataclass
class RunConfig:
    seed: int = 0
    dtype: str = "float64"
    out: str = "runs/latest"
    jobs: int = 1

    # data: either a synthetic preset or an annotation directory
    synth: str = "default"
    data_root: str = ""
    split_protocol: str = "class"
    train_classes: str = "disc,square"
    val_classes: str = "triangle"
    test_classes: str = "triangle"
    per_class: int = 16
    eval_per_class: int = 8
    canvas: int = 64

    # model
    channels: int = 32
    stage_channels: str = "16,32,64"
    stage_strides: str = "4,8,16"
    feature_stride: int = 4
    stem_channels: int = 16
    head_widths: str = "16,16,8"
    theta: float = 0.5
    slope: float = 0.01
    no_dc: bool = False
    no_ccdc: bool = False
    no_sq: bool = False
    sq_residual: str = "projected"

    # optimization
    lr: float = 2e-3
    decay_factor: float = 0.25
    decay_every: int = 4
    epochs: int = 9
    max_steps: int = 300

    # decoding and evaluation
    threshold: float = 100 / 255
    floor: float = 0.06
    absolute_threshold: bool = False
    sigmas: str = "5,10"
    checkpoint: str = ""
    maps: str = ""
    dump_maps: bool = False

    # ------------------------------------------------------------------

    def model_config(self) -> ModelConfig:
        bb = BackboneConfig(
            stage_channels=_ints(self.stage_channels),
            stage_strides=_ints(self.stage_strides),
            channels=self.channels,
            feature_stride=self.feature_stride,
            stem_channels=self.stem_channels,
        )
        return ModelConfig(
            backbone=bb,
            head_widths=_ints(self.head_widths),
            theta=self.theta,
            slope=self.slope,
            use_dc=not self.no_dc,
            use_ccdc=not self.no_ccdc,
            use_sq=not self.no_sq,
            sq_residual=self.sq_residual,
            dtype=self.dtype,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            decay_factor=self.decay_factor,
            decay_every=self.decay_every,
            epochs=self.epochs,
            resolution=self.canvas,
            seed=self.seed,
            max_steps=self.max_steps if self.max_steps > 0 else None,
        )

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(threshold=self.threshold, floor=self.floor, relative=not self.absolute_threshold)

    def sigma_list(self) -> list[float]:
        return [float(s) for s in self.sigmas.split(",") if s.strip()]

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def updated(self, values: Mapping[str, Any]) -> "RunConfig":
        known = {f.name: f for f in fields(self)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise KeyError(f"unknown config keys: {', '.join(unknown)}")
        conv = {k: _convert(known[k].type, v) for k, v in values.items()}
        return dataclasses.replace(self, **conv)


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _convert(typ, v):
    if not isinstance(v, str):
        return v
    typ = typ if isinstance(typ, str) else typ.__name__
    if typ == "bool":
        low = v.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {v!r}")
    if typ == "int":
        return int(v)
    if typ == "float":
        return float(v)
    return v.strip()


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path) -> RunConfig:
    return RunConfig().updated(parse_config_text(Path(path).read_text()))

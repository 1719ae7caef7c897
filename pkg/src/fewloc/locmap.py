"""Location-map encoding from point annotations and local-maxima decoding."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

# threshold presets, as fractions of 255
T_DEFAULT = 100 / 255
T_DENSE = 40 / 255
T_SPARSE = 60 / 255
VALUE_FLOOR = 0.06


@dataclass(frozen=True)
class DecoderConfig:
    """Local-maxima decoder settings.

    ``threshold`` is relative to the map maximum unless ``relative`` is False.
    ``floor`` is always absolute.
    """

    threshold: float = T_DEFAULT
    floor: float = VALUE_FLOOR
    neighborhood: int = 3
    relative: bool = True

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in (0, 1], got {self.threshold}")
        if not 0.0 <= self.floor < 1.0:
            raise ValueError(f"floor must lie in [0, 1), got {self.floor}")
        if self.neighborhood < 1 or self.neighborhood % 2 == 0:
            raise ValueError(f"neighborhood must be a positive odd size, got {self.neighborhood}")

    @classmethod
    def preset(cls, name: str) -> "DecoderConfig":
        table = {"default": T_DEFAULT, "dense": T_DENSE, "sparse": T_SPARSE}
        if name not in table:
            raise ValueError(f"unknown decoder preset {name!r}; choose from {sorted(table)}")
        return cls(threshold=table[name])


def _check_points(points, hw) -> np.ndarray:
    H, W = hw
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    for i, (x, y) in enumerate(pts):
        if not (0 <= x < W and 0 <= y < H):
            raise ValueError(f"point {i} at ({x}, {y}) lies outside the {W}x{H} map")
    return pts


def _distance_to_nearest(pts: np.ndarray, hw) -> np.ndarray:
    H, W = hw
    # annotations are snapped to the pixel grid before measuring distance
    seeds = np.ones((H, W), dtype=bool)
    cols = np.clip(np.round(pts[:, 0]).astype(int), 0, W - 1)
    rows = np.clip(np.round(pts[:, 1]).astype(int), 0, H - 1)
    seeds[rows, cols] = False
    return ndimage.distance_transform_edt(seeds)


def encode_location_map(
    points: Sequence[Sequence[float]],
    hw: tuple[int, int],
    alpha: float = 0.02,
    beta: float = 0.75,
    c0: float = 1.0,
) -> np.ndarray:
    """Inverse-distance map ``1 / (D**(alpha*D + beta) + c0)``.

    D is the Euclidean distance of each pixel to the nearest point, given as
    (x, y). An empty point set gives an all-zero map.
    """
    pts = _check_points(points, hw)
    if len(pts) == 0:
        return np.zeros(hw)
    D = _distance_to_nearest(pts, hw)
    return 1.0 / (np.power(D, alpha * D + beta) + c0)


def encode_gaussian_map(points, hw, sigma: float = 2.0) -> np.ndarray:
    """Alternative encoder: max over per-point Gaussians of width ``sigma``."""
    pts = _check_points(points, hw)
    if len(pts) == 0:
        return np.zeros(hw)
    D = _distance_to_nearest(pts, hw)
    return np.exp(-(D**2) / (2 * sigma**2))


def decode_peaks(lmap: np.ndarray, cfg: DecoderConfig = DecoderConfig()) -> list[tuple[int, int]]:
    """Return (x, y) of local maxima passing the threshold and floor.

    A pixel is a candidate when it equals the maximum of its neighborhood.
    Connected candidates form a flat plateau; each plateau keeps only its
    smallest (x, y).
    """
    m = np.asarray(lmap, dtype=float)
    m = m.reshape(m.shape[-2:])
    if m.size == 0 or not np.any(m > cfg.floor):
        return []
    local_max = ndimage.maximum_filter(m, size=cfg.neighborhood, mode="nearest")
    cut = cfg.threshold * m.max() if cfg.relative else cfg.threshold
    cand = (m == local_max) & (m > cut) & (m > cfg.floor)
    if not cand.any():
        return []
    labels, n = ndimage.label(cand, structure=np.ones((3, 3), dtype=int))
    rows, cols = np.nonzero(cand)
    best: dict[int, tuple[int, int]] = {}
    for r, c in zip(rows, cols):
        lab = labels[r, c]
        key = (int(c), int(r))
        if lab not in best or key < best[lab]:
            best[lab] = key
    return sorted(best.values())


# --------------------------------------------------------------------------
# 16-bit PGM dumps


def write_pgm16(path, lmap: np.ndarray) -> None:
    """Write a map with values in [0, 1] as a binary 16-bit PGM (big-endian)."""
    m = np.asarray(lmap, dtype=float)
    m = m.reshape(m.shape[-2:])
    q = np.round(np.clip(m, 0.0, 1.0) * 65535).astype(">u2")
    H, W = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())


def read_pgm16(path) -> np.ndarray:
    """Inverse of :func:`write_pgm16`; returns values in [0, 1]."""
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        fields.append(raw[pos:end].decode("ascii"))
        pos = end
    pos += 1
    magic, W, H, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != "P5" or maxval != 65535:
        raise ValueError(f"{path}: expected a 16-bit binary PGM, got {magic} maxval {maxval}")
    q = np.frombuffer(raw, dtype=">u2", count=W * H, offset=pos).reshape(H, W)
    return q.astype(float) / 65535

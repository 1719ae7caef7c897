"""Episodes: synthetic shape scenes, point-annotation loading and splits."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

SHAPES = ("disc", "square", "triangle")


@dataclass
class Episode:
    """Query image (3 x R x R in [0, 1]), one exemplar box and the GT points.

    ``box`` is (x1, y1, x2, y2) in pixels with x2/y2 exclusive; points are
    (x, y) with x to the right and y downward.
    """

    image: np.ndarray
    box: tuple[float, float, float, float]
    points: list[tuple[float, float]]
    label: str
    image_id: str
    split: str = ""

    def validate(self) -> None:
        _, H, W = self.image.shape
        x1, y1, x2, y2 = self.box
        if not (0 <= x1 < x2 <= W and 0 <= y1 < y2 <= H):
            raise ValueError(f"{self.image_id}: box {self.box} outside {W}x{H} or empty")
        for x, y in self.points:
            if not (0 <= x < W and 0 <= y < H):
                raise ValueError(f"{self.image_id}: point ({x}, {y}) outside {W}x{H}")
        if float(self.image.min()) < 0 or float(self.image.max()) > 1:
            raise ValueError(f"{self.image_id}: pixel values outside [0, 1]")


@dataclass
class SynthConfig:
    canvas: int = 64
    count_range: tuple[int, int] = (3, 7)
    shape: str = "disc"
    size_range: tuple[float, float] = (3.5, 5.0)  # half-extent in pixels
    min_distance: float = 12.0  # between object centers
    margin: int = 3
    intensity_jitter: float = 0.1
    background_noise: float = 0.03
    max_tries: int = 200
    seed: int = 0


def _shape_mask(shape: str, cx: float, cy: float, r: float, yy, xx) -> np.ndarray:
    if shape == "disc":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    if shape == "square":
        return (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
    if shape == "triangle":
        # upright triangle, centroid at (cx, cy)
        top = cy - r
        base = cy + r
        half = (yy - top) / (2 * r) * r * 1.15
        return (yy >= top) & (yy <= base) & (np.abs(xx - cx) <= half)
    raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")


def generate_scene(cfg: SynthConfig, image_id: str | None = None) -> Episode:
    """Render K objects of one shape class; one object's box becomes the exemplar."""
    rng = np.random.default_rng(cfg.seed)
    R = cfg.canvas
    lo, hi = cfg.count_range
    if lo < 1 or hi < lo:
        raise ValueError(f"bad count range {cfg.count_range}")
    k = int(rng.integers(lo, hi + 1))
    rmax = cfg.size_range[1]
    edge = cfg.margin + math.ceil(rmax)
    if edge * 2 >= R:
        raise ValueError(f"objects of size {rmax} do not fit a {R}px canvas: {cfg}")

    centers: list[tuple[float, float]] = []
    tries = 0
    while len(centers) < k:
        tries += 1
        if tries > cfg.max_tries * k:
            raise ValueError(f"could not place {k} objects under the spacing rule: {cfg}")
        c = (float(rng.integers(edge, R - edge)), float(rng.integers(edge, R - edge)))
        if all(math.hypot(c[0] - o[0], c[1] - o[1]) >= cfg.min_distance for o in centers):
            centers.append(c)

    yy, xx = np.mgrid[0:R, 0:R].astype(float)
    bg = 0.1 + 0.1 * rng.random(3)
    img = bg[:, None, None] + cfg.background_noise * rng.standard_normal((3, R, R))
    base = 0.55 + 0.4 * rng.random(3)
    boxes = []
    for cx, cy in centers:
        r = rng.uniform(*cfg.size_range)
        color = np.clip(base + cfg.intensity_jitter * rng.standard_normal(3), 0.3, 1.0)
        m = _shape_mask(cfg.shape, cx, cy, r, yy, xx)
        img[:, m] = color[:, None]
        ys, xs = np.nonzero(m)
        boxes.append((int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1))
    img = np.clip(img, 0.0, 1.0)
    pick = int(rng.integers(len(centers)))
    ep = Episode(
        image=img,
        box=boxes[pick],
        points=centers,
        label=cfg.shape,
        image_id=image_id or f"{cfg.shape}-{cfg.seed}",
    )
    ep.validate()
    return ep


def synth_dataset(shapes: Sequence[str], per_shape: int, seed: int, **kw) -> list[Episode]:
    """``per_shape`` scenes for each shape, seeded from ``seed`` deterministically."""
    ss = np.random.SeedSequence(seed)
    seeds = ss.generate_state(len(shapes) * per_shape)
    out = []
    i = 0
    for shape in shapes:
        for n in range(per_shape):
            cfg = SynthConfig(shape=shape, seed=int(seeds[i]), **kw)
            out.append(generate_scene(cfg, image_id=f"{shape}-{n:03d}"))
            i += 1
    return out


# --------------------------------------------------------------------------
# annotation loading


@dataclass
class LoadReport:
    episodes: list[Episode] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (image, reason)


def _read_image(path: Path, size: int) -> tuple[np.ndarray, tuple[int, int]]:
    with Image.open(path) as im:
        w, h = im.size
        im = im.convert("RGB")
        if (w, h) != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1), (w, h)


def load_annotations(root, resolution: int = 512, doc_name: str = "annotations.json") -> LoadReport:
    """Load ``{image: {points, boxes, class}}`` records from ``root/doc_name``.

    Images are resized to ``resolution`` and coordinates scaled by the same
    factors. The first box is the exemplar. Bad records are skipped and
    listed in the report.
    """
    root = Path(root)
    doc = json.loads((root / doc_name).read_text())
    report = LoadReport()
    if not doc:
        log.warning("annotation document %s is empty", root / doc_name)
        return report
    for name in sorted(doc):
        rec = doc[name]
        try:
            points = [tuple(map(float, p)) for p in rec["points"]]
            boxes = [tuple(map(float, b)) for b in rec["boxes"]]
            if not boxes or any(len(b) != 4 for b in boxes) or any(len(p) != 2 for p in points):
                raise ValueError("malformed points or boxes")
            path = root / name
            if not path.exists():
                raise FileNotFoundError(f"missing image file {path}")
            image, (w, h) = _read_image(path, resolution)
            sx, sy = resolution / w, resolution / h
            x1, y1, x2, y2 = boxes[0]
            ep = Episode(
                image=image,
                box=(x1 * sx, y1 * sy, x2 * sx, y2 * sy),
                points=[(x * sx, y * sy) for x, y in points],
                label=str(rec.get("class", "object")),
                image_id=name,
            )
            ep.validate()
        except (KeyError, TypeError, ValueError, OSError) as err:
            report.skipped.append((name, str(err)))
            log.warning("skipping %s: %s", name, err)
            continue
        report.episodes.append(ep)
    if report.skipped:
        log.warning("skipped %d of %d records", len(report.skipped), len(doc))
    return report


def rescale_episode(ep: Episode, factor: float) -> Episode:
    """Resize an episode's image by ``factor`` and scale its coordinates."""
    _, H, W = ep.image.shape
    size = (max(1, round(W * factor)), max(1, round(H * factor)))
    im = Image.fromarray(np.round(ep.image.transpose(1, 2, 0) * 255).astype(np.uint8))
    arr = np.asarray(im.resize(size, Image.BILINEAR), dtype=np.float64) / 255.0
    sx, sy = size[0] / W, size[1] / H
    x1, y1, x2, y2 = ep.box
    return replace(
        ep,
        image=arr.transpose(2, 0, 1),
        box=(x1 * sx, y1 * sy, x2 * sx, y2 * sy),
        points=[(x * sx, y * sy) for x, y in ep.points],
    )


# --------------------------------------------------------------------------
# splits


def split_episodes(
    episodes: Sequence[Episode],
    protocol: str = "class",
    parts: Sequence[float] = (1, 1, 1),
    seed: int = 0,
    classes: dict[str, Sequence[str]] | None = None,
) -> dict[str, list[Episode]]:
    """Partition into train/val/test.

    ``protocol="class"`` keeps every class inside one partition; ``classes``
    may fix the assignment explicitly, otherwise classes are shuffled with
    ``seed`` and dealt out in proportion to ``parts``. ``protocol="image"``
    splits images at random regardless of class.
    """
    names = ("train", "val", "test")
    out: dict[str, list[Episode]] = {n: [] for n in names}
    rng = np.random.default_rng(seed)
    if protocol == "class":
        labels = sorted({e.label for e in episodes})
        if classes is not None:
            assign = {c: split for split, cs in classes.items() for c in cs}
            unknown = set(assign) - set(labels)
            if unknown:
                raise ValueError(f"split names classes not in the data: {sorted(unknown)}")
        else:
            if len(labels) < 2:
                raise ValueError(f"class-disjoint split needs >= 2 classes, got {labels}")
            order = [labels[i] for i in rng.permutation(len(labels))]
            counts = _allocate(len(order), parts)
            assign = {}
            start = 0
            for split, n in zip(names, counts):
                for c in order[start : start + n]:
                    assign[c] = split
                start += n
        for e in episodes:
            split = assign.get(e.label)
            if split is not None:
                out[split].append(replace(e, split=split))
    elif protocol == "image":
        idx = rng.permutation(len(episodes))
        counts = _allocate(len(episodes), parts)
        start = 0
        for split, n in zip(names, counts):
            out[split] = [replace(episodes[i], split=split) for i in idx[start : start + n]]
            start += n
    else:
        raise ValueError(f"unknown split protocol {protocol!r}")
    return out


def _allocate(n: int, parts: Sequence[float]) -> list[int]:
    w = np.asarray(parts, dtype=float)
    raw = n * w / w.sum()
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()

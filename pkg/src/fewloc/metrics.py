"""Distance-gated point matching, localization rates and counting errors."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

# (strict, lenient) thresholds in pixels
SIGMAS_CROWD = (4.0, 8.0)
SIGMAS_DEFAULT = (5.0, 10.0)


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]]  # (pred index, gt index, distance)
    tp: int
    fp: int
    fn: int
    sigma: float


def point_error(p, g) -> float:
    """Euclidean distance between a predicted and an annotated point."""
    return math.hypot(p[0] - g[0], p[1] - g[1])


def match_points(pred: Sequence, gt: Sequence, sigma: float) -> MatchResult:
    """One-to-one matching of predictions to annotations within ``sigma``.

    Maximizes the number of matched pairs, then minimizes their total
    distance. Pairs farther apart than ``sigma`` are never matched.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    P = np.asarray(pred, dtype=float).reshape(-1, 2)
    G = np.asarray(gt, dtype=float).reshape(-1, 2)
    if len(P) == 0 or len(G) == 0:
        return MatchResult([], 0, len(P), len(G), sigma)
    dist = np.hypot(P[:, None, 0] - G[None, :, 0], P[:, None, 1] - G[None, :, 1])
    gated = dist <= sigma
    # a forbidden pair costs more than any set of allowed pairs can save
    big = (min(len(P), len(G)) + 1) * sigma + 1.0
    cost = np.where(gated, dist, big)
    rows, cols = linear_sum_assignment(cost)
    pairs = sorted(
        (int(r), int(c), float(dist[r, c])) for r, c in zip(rows, cols) if gated[r, c]
    )
    tp = len(pairs)
    return MatchResult(pairs, tp, len(P) - tp, len(G) - tp, sigma)


def prf1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and F1; any zero denominator yields 0."""
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def counting_errors(gt_counts: Sequence[float], pred_counts: Sequence[float]) -> tuple[float, float]:
    """MAE and RMSE between per-image counts."""
    y = np.asarray(gt_counts, dtype=float)
    yh = np.asarray(pred_counts, dtype=float)
    if y.size == 0:
        raise ValueError("counting_errors needs at least one image")
    if y.shape != yh.shape:
        raise ValueError(f"count lists differ in length: {y.size} vs {yh.size}")
    d = y - yh
    return float(np.mean(np.abs(d))), float(np.sqrt(np.mean(d * d)))


@dataclass
class ThresholdBlock:
    sigma: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    """Aggregate over an image set. Rates are pooled over all images."""

    blocks: list[ThresholdBlock]
    mae: float
    rmse: float
    gt_counts: list[int]
    pred_counts: list[int]
    image_ids: list[str] = field(default_factory=list)

    @property
    def n_images(self) -> int:
        return len(self.gt_counts)

    def block(self, sigma: float) -> ThresholdBlock:
        for b in self.blocks:
            if b.sigma == sigma:
                return b
        raise KeyError(f"no block for sigma={sigma}")

    def f1(self, sigma: float) -> float:
        return self.block(sigma).f1

    def to_text(self) -> str:
        lines = [f"images = {self.n_images}", f"mae = {self.mae:.6f}", f"rmse = {self.rmse:.6f}"]
        for b in self.blocks:
            lines += [
                "",
                f"[sigma = {b.sigma:g}]",
                f"tp = {b.tp}",
                f"fp = {b.fp}",
                f"fn = {b.fn}",
                f"precision = {b.precision:.6f}",
                f"recall = {b.recall:.6f}",
                f"f1 = {b.f1:.6f}",
            ]
        return "\n".join(lines) + "\n"

    def to_tsv(self) -> str:
        head = "sigma\ttp\tfp\tfn\tprecision\trecall\tf1\tmae\trmse\timages"
        rows = [
            f"{b.sigma:g}\t{b.tp}\t{b.fp}\t{b.fn}\t{b.precision:.6f}\t{b.recall:.6f}\t"
            f"{b.f1:.6f}\t{self.mae:.6f}\t{self.rmse:.6f}\t{self.n_images}"
            for b in self.blocks
        ]
        return "\n".join([head] + rows) + "\n"


def evaluate(
    preds: Sequence[Sequence], gts: Sequence[Sequence], sigmas: Iterable[float], image_ids=None
) -> MetricsReport:
    """Match every image at every sigma and pool TP/FP/FN over the set."""
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} images")
    blocks = []
    for s in sigmas:
        tp = fp = fn = 0
        for p, g in zip(preds, gts):
            m = match_points(p, g, s)
            tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
        blocks.append(ThresholdBlock(float(s), tp, fp, fn, *prf1(tp, fp, fn)))
    gt_counts = [len(g) for g in gts]
    pred_counts = [len(p) for p in preds]
    mae, rmse = counting_errors(gt_counts, pred_counts)
    ids = list(image_ids) if image_ids is not None else [str(i) for i in range(len(gts))]
    return MetricsReport(blocks, mae, rmse, gt_counts, pred_counts, ids)


def write_points_csv(path, image_id: str, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "x", "y"])
        for x, y in points:
            w.writerow([image_id, x, y])


def read_points_csv(path) -> dict[str, list[tuple[float, float]]]:
    out: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["image_id"], []).append((float(row["x"]), float(row["y"])))
    return out

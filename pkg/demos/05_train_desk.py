"""Train the desk-scale model on synthetic discs and squares, then localize
triangles, a shape it never saw, from one exemplar box each.

Takes about ten seconds on one core.
"""
import numpy as np

from fewloc.data import synth_dataset
from fewloc.model import LocalizationModel, ModelConfig
from fewloc.train import TrainConfig, evaluate_model, fit, predict_points

train = synth_dataset(["disc", "square"], 16, seed=0)
novel = synth_dataset(["triangle"], 8, seed=1000)
model = LocalizationModel(ModelConfig(), seed=0)
cfg = TrainConfig.desk()
print(f"{len(train)} training scenes, {sum(p.size for p in model.parameters().values())} parameters")

fit(model, train, cfg, on_epoch=lambda r: print(f"epoch {r.epoch}  lr {r.lr:.1e}  loss {r.loss:.5f}"))

for name, eps in (("train", train), ("novel", novel)):
    rep = evaluate_model(model, eps, (5, 10))
    print(f"{name}: F1@5 {rep.f1(5):.3f}  F1@10 {rep.f1(10):.3f}  MAE {rep.mae:.2f}")

ep = novel[0]
found = predict_points(model, ep)
print("exemplar box:", ep.box)
print("annotated:", sorted((int(x), int(y)) for x, y in ep.points))
print("predicted:", found)
err = [min(np.hypot(x - gx, y - gy) for gx, gy in ep.points) for x, y in found]
print("distance to nearest annotation:", np.round(err, 2))

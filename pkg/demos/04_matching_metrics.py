"""Scoring predicted points against annotations.

Predictions and annotations are paired one-to-one, only within distance
sigma, maximizing the number of pairs. Counts are pooled over images.
"""
from fewloc.metrics import evaluate, match_points, prf1

m = match_points([(3, 4)], [(0, 0)], sigma=4)
print("distance 5 at sigma 4 -> tp/fp/fn:", m.tp, m.fp, m.fn)
m = match_points([(3, 4)], [(0, 0)], sigma=10)
print("distance 5 at sigma 10 -> tp/fp/fn:", m.tp, m.fp, m.fn)

# Greedy nearest-first pairing would match (5,0)-(6,0) and strand (0,0).
m = match_points([(5, 0), (14, 0)], [(0, 0), (6, 0)], sigma=8)
print("assignment pairs:", m.pairs)

print("prf1(59, 41, 30):", [round(v, 4) for v in prf1(59, 41, 30)])

preds = [[(10, 10), (40, 40)], [(5, 5), (20, 20), (33, 8)]]
gts = [[(12, 9)], [(6, 6), (21, 24), (50, 50)]]
print(evaluate(preds, gts, (5, 10), ["a", "b"]).to_text())

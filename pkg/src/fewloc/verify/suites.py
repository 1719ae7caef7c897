"""Verification suites: oracle equivalence, degenerate reductions, gradients,
self-query properties, map roundtrip, matching and metric formulas.

Each suite returns a :class:`SuiteResult`; an exception inside a suite is
reported as a failure rather than propagated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import kernels as K
from .. import locmap, metrics
from .. import tensor as T
from ..layers import Conv2d
from ..model import LocalizationModel, ModelConfig, self_query
from ..tensor import Tensor
from . import oracles
from .gradcheck import check_gradients


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    cases: int
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    error: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        msg = f"[{status}] {self.name}: max_error={self.max_error:.3e} tol={self.tolerance:.0e} cases={self.cases}"
        if self.error:
            msg += f" error={self.error}"
        return msg

    def summary(self) -> tuple:
        """Run-independent content, used to compare reruns."""
        return (self.name, self.passed, self.max_error, self.cases, tuple(sorted(self.details.items())))


def _run(name: str, tol: float, body: Callable[[], tuple[float, int, dict]]) -> SuiteResult:
    t0 = time.perf_counter()
    try:
        err, cases, details = body()
        ok = bool(err <= tol)
        res = SuiteResult(name, ok, float(err), tol, cases, details)
    except Exception as exc:  # a broken operator must fail the suite, not abort the run
        res = SuiteResult(name, False, math.inf, tol, 0, error=f"{type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


# --------------------------------------------------------------------------
# oracle equivalence


def kernel_oracles(seed: int = 0, n: int = 200, tol: float = 1e-6) -> list[SuiteResult]:
    """Each operator against its nested-loop oracle on ``n`` random cases."""

    def conv_case(rng):
        C, O = rng.integers(1, 5, size=2)
        H, W = rng.integers(3, 9, size=2)
        k = int(rng.choice([1, 3]))
        stride = int(rng.choice([1, 2]))
        pad = int(rng.integers(0, k // 2 + 1))
        x = rng.standard_normal((1, C, H, W))
        w = rng.standard_normal((O, C, k, k))
        b = rng.standard_normal(O) if rng.random() < 0.5 else None
        got = K.conv2d(Tensor(x), Tensor(w), None if b is None else Tensor(b), stride, pad).data[0]
        want = oracles.conv2d_loops(x[0], w, b, stride, pad)
        return np.abs(got - want).max() if got.shape == want.shape else math.inf

    def deform_case(rng):
        C, O = rng.integers(1, 5, size=2)
        H, W = rng.integers(3, 9, size=2)
        x = rng.standard_normal((1, C, H, W))
        w = rng.standard_normal((O, C, 3, 3))
        off = 1.5 * rng.standard_normal((1, 18, H, W))
        m = rng.random((1, 9, H, W))
        got = K.deform_conv2d(Tensor(x), Tensor(w), K.DeformField(Tensor(off), Tensor(m))).data[0]
        return np.abs(got - oracles.deform_conv2d_loops(x[0], w, off[0], m[0])).max()

    def ccdc_case(rng):
        C, O = rng.integers(1, 5, size=2)
        H, W = rng.integers(1, 9, size=2)
        theta = float(rng.random())
        x = rng.standard_normal((1, C, H, W))
        w = rng.standard_normal((O, C, 5))
        got = K.ccdc_hv(Tensor(x), Tensor(w), theta).data[0]
        return np.abs(got - oracles.ccdc_loops(x[0], w, theta)).max()

    def corr_case(rng):
        C = int(rng.integers(1, 5))
        H, W = rng.integers(1, 9, size=2)
        q = rng.standard_normal((1, C, H, W))
        k = rng.standard_normal((1, C, 3, 3))
        got = K.corr2d_depthwise(Tensor(q), Tensor(k)).data[0]
        return np.abs(got - oracles.corr2d_loops(q[0], k[0])).max()

    def dual_case(rng):
        C = int(rng.integers(1, 5))
        H, W = rng.integers(1, 9, size=2)
        qd, qc = rng.standard_normal((2, 1, C, H, W))
        kd, kc = rng.standard_normal((2, 1, C, 3, 3))
        dual = K.DualStack(
            query=[("deformation", Tensor(qd)), ("gradient", Tensor(qc))],
            kernel=[("deformation", Tensor(kd)), ("gradient", Tensor(kc))],
        )
        got = K.conv3d_dual(dual).data[0]
        want = oracles.conv3d_loops(np.stack([qd[0], qc[0]], 1), np.stack([kd[0], kc[0]], 1))
        return np.abs(got - want).max()

    out = []
    for offset, (name, case) in enumerate(
        [
            ("oracle.conv2d", conv_case),
            ("oracle.deform_conv2d", deform_case),
            ("oracle.ccdc_hv", ccdc_case),
            ("oracle.corr2d_depthwise", corr_case),
            ("oracle.conv3d_dual", dual_case),
        ]
    ):

        def body(case=case, offset=offset):
            rng = np.random.default_rng([seed, offset])
            return max(case(rng) for _ in range(n)), n, {}

        out.append(_run(name, tol, body))
    return out


def adaptive_pool_oracle(seed: int = 0, n: int = 50, tol: float = 1e-12) -> SuiteResult:
    def body():
        rng = np.random.default_rng([seed, 10])
        worst = 0.0
        for _ in range(n):
            C = int(rng.integers(1, 4))
            H, W = rng.integers(1, 12, size=2)
            x = rng.standard_normal((1, C, H, W))
            got = T.adaptive_avg_pool(Tensor(x), (3, 3)).data[0]
            worst = max(worst, np.abs(got - oracles.adaptive_pool_loops(x[0], 3, 3)).max())
        return worst, n, {}

    return _run("oracle.adaptive_avg_pool", tol, body)


# --------------------------------------------------------------------------
# degenerate reductions


def degenerate_reductions(seed: int = 0, n: int = 50, tol: float = 1e-12) -> list[SuiteResult]:
    def deform_is_conv(rng):
        C, O = rng.integers(1, 5, size=2)
        H, W = rng.integers(3, 9, size=2)
        x = rng.standard_normal((1, C, H, W))
        w = rng.standard_normal((O, C, 3, 3))
        field = K.DeformField(Tensor(np.zeros((1, 18, H, W))), Tensor(np.ones((1, 9, H, W))))
        a = K.deform_conv2d(Tensor(x), Tensor(w), field).data
        b = K.conv2d(Tensor(x), Tensor(w), padding=1).data
        return np.abs(a - b).max()

    def ccdc_theta0(rng):
        C, O = rng.integers(1, 5, size=2)
        H, W = rng.integers(1, 9, size=2)
        x = rng.standard_normal((1, C, H, W))
        w = rng.standard_normal((O, C, 5))
        a = K.ccdc_hv(Tensor(x), Tensor(w), 0.0).data
        cross = np.zeros((O, C, 3, 3))
        for k, (dy, dx) in enumerate(K.CROSS_TAPS):
            cross[:, :, dy + 1, dx + 1] = w[:, :, k]
        b = K.conv2d(Tensor(x), Tensor(cross), padding=1).data
        return np.abs(a - b).max()

    def ccdc_constant(rng):
        C, O = rng.integers(1, 5, size=2)
        H, W = rng.integers(1, 9, size=2)
        x = np.full((1, C, H, W), rng.standard_normal())
        w = rng.standard_normal((O, C, 5))
        return np.abs(K.ccdc_hv(Tensor(x), Tensor(w), 1.0).data).max()

    def dual_is_sum(rng):
        C = int(rng.integers(1, 5))
        H, W = rng.integers(1, 9, size=2)
        qd, qc = (Tensor(a) for a in rng.standard_normal((2, 1, C, H, W)))
        kd, kc = (Tensor(a) for a in rng.standard_normal((2, 1, C, 3, 3)))
        dual = K.DualStack([("deformation", qd), ("gradient", qc)], [("deformation", kd), ("gradient", kc)])
        a = K.conv3d_dual(dual).data
        b = K.corr2d_depthwise(qd, kd).data + K.corr2d_depthwise(qc, kc).data
        return np.abs(a - b).max()

    def weight_linearity(rng):
        C, O = rng.integers(1, 5, size=2)
        H, W = rng.integers(3, 9, size=2)
        x = Tensor(rng.standard_normal((1, C, H, W)))
        alpha = float(rng.uniform(-3, 3))
        w = rng.standard_normal((O, C, 3, 3))
        w5 = rng.standard_normal((O, C, 5))
        kq = rng.standard_normal((1, C, 3, 3))
        field = K.DeformField(Tensor(rng.standard_normal((1, 18, H, W))), Tensor(rng.random((1, 9, H, W))))
        pairs = [
            (K.conv2d(x, Tensor(alpha * w), padding=1), K.conv2d(x, Tensor(w), padding=1)),
            (K.deform_conv2d(x, Tensor(alpha * w), field), K.deform_conv2d(x, Tensor(w), field)),
            (K.ccdc_hv(x, Tensor(alpha * w5), 0.5), K.ccdc_hv(x, Tensor(w5), 0.5)),
            (K.corr2d_depthwise(x, Tensor(alpha * kq)), K.corr2d_depthwise(x, Tensor(kq))),
        ]
        return max(np.abs(a.data - alpha * b.data).max() for a, b in pairs)

    out = []
    for offset, (name, case) in enumerate(
        [
            ("reduce.deform_zero_offsets_is_conv2d", deform_is_conv),
            ("reduce.ccdc_theta0_is_cross_conv", ccdc_theta0),
            ("reduce.ccdc_constant_theta1_is_zero", ccdc_constant),
            ("reduce.conv3d_dual_is_branch_sum", dual_is_sum),
            ("reduce.weight_linearity", weight_linearity),
        ]
    ):

        def body(case=case, offset=offset):
            rng = np.random.default_rng([seed, 100 + offset])
            return max(case(rng) for _ in range(n)), n, {}

        out.append(_run(name, tol, body))
    return out


# --------------------------------------------------------------------------
# gradients


def _loss_against(y: Tensor, r: np.ndarray) -> Tensor:
    # random linear functional keeps every output entry in play
    return T.sum(T.mul(y, Tensor(r)))


def _op_cases():
    """name -> builder(rng) returning (loss_fn, params)."""

    def elementwise_add(rng):
        a = Tensor(rng.standard_normal((1, 3, 4, 4)))
        b = Tensor(rng.standard_normal((1, 1, 4, 4)))
        r = rng.standard_normal((1, 3, 4, 4))
        return lambda: _loss_against(T.add(a, b), r), [a, b]

    def elementwise_mul(rng):
        a = Tensor(rng.standard_normal((1, 3, 4, 4)))
        b = Tensor(rng.standard_normal((1, 1, 4, 4)))
        r = rng.standard_normal((1, 3, 4, 4))
        return lambda: _loss_against(T.mul(a, b), r), [a, b]

    def leaky(rng):
        x = Tensor(rng.standard_normal((1, 2, 5, 5)))
        r = rng.standard_normal((1, 2, 5, 5))
        return lambda: _loss_against(T.leaky_relu(x, 0.01), r), [x]

    def sigm(rng):
        x = Tensor(rng.standard_normal((1, 2, 4, 4)))
        r = rng.standard_normal((1, 2, 4, 4))
        return lambda: _loss_against(T.sigmoid(x), r), [x]

    def pool(rng):
        H, W = rng.integers(3, 9, size=2)
        x = Tensor(rng.standard_normal((1, 2, H, W)))
        r = rng.standard_normal((1, 2, 3, 3))
        return lambda: _loss_against(T.adaptive_avg_pool(x, (3, 3)), r), [x]

    def upsample(rng):
        H, W = rng.integers(1, 5, size=2)
        x = Tensor(rng.standard_normal((1, 2, H, W)))
        out = (2 * H + 1, 3 * W)
        r = rng.standard_normal((1, 2) + out)
        return lambda: _loss_against(T.bilinear_upsample(x, out), r), [x]

    def cosine(rng):
        a = Tensor(rng.standard_normal((1, 4, 3, 3)))
        b = Tensor(rng.standard_normal((1, 4, 3, 3)))
        r = rng.standard_normal((1, 1, 3, 3))
        return lambda: _loss_against(T.cosine_similarity(a, b), r), [a, b]

    def mse(rng):
        a = Tensor(rng.standard_normal((1, 1, 5, 5)))
        b = Tensor(rng.standard_normal((1, 1, 5, 5)))
        return lambda: T.mse_loss(a, b), [a, b]

    def crop_pool(rng):
        x = Tensor(rng.standard_normal((1, 2, 6, 6)))
        r = rng.standard_normal((1, 2, 3, 3))
        return lambda: _loss_against(T.adaptive_avg_pool(T.crop(x, 1, 5, 0, 3), (3, 3)), r), [x]

    def concat_slice(rng):
        a = Tensor(rng.standard_normal((1, 2, 3, 3)))
        b = Tensor(rng.standard_normal((1, 3, 3, 3)))
        r = rng.standard_normal((1, 3, 3, 3))
        return lambda: _loss_against(T.channel_slice(T.concat([a, b]), 1, 4), r), [a, b]

    def conv(rng):
        x = Tensor(rng.standard_normal((1, 3, 6, 6)))
        w = Tensor(rng.standard_normal((2, 3, 3, 3)))
        b = Tensor(rng.standard_normal(2))
        stride = int(rng.choice([1, 2]))
        y = K.conv2d(x, w, b, stride, 1)
        r = rng.standard_normal(y.shape)
        return lambda: _loss_against(K.conv2d(x, w, b, stride, 1), r), [x, w, b]

    def deform(rng):
        x = Tensor(rng.standard_normal((1, 2, 5, 5)))
        w = Tensor(rng.standard_normal((2, 2, 3, 3)))
        # fractional offsets keep samples off the bilinear kinks
        off = Tensor(rng.uniform(0.1, 0.9, (1, 18, 5, 5)) * rng.choice([-1, 1], (1, 18, 5, 5)))
        m = Tensor(rng.random((1, 9, 5, 5)))
        r = rng.standard_normal((1, 2, 5, 5))
        return lambda: _loss_against(K.deform_conv2d(x, w, K.DeformField(off, m)), r), [x, w, off, m]

    def ccdc(rng):
        x = Tensor(rng.standard_normal((1, 2, 5, 5)))
        w = Tensor(rng.standard_normal((3, 2, 5)))
        theta = float(rng.random())
        r = rng.standard_normal((1, 3, 5, 5))
        return lambda: _loss_against(K.ccdc_hv(x, w, theta), r), [x, w]

    def corr(rng):
        q = Tensor(rng.standard_normal((1, 3, 5, 5)))
        k = Tensor(rng.standard_normal((1, 3, 3, 3)))
        r = rng.standard_normal((1, 3, 5, 5))
        return lambda: _loss_against(K.corr2d_depthwise(q, k), r), [q, k]

    def dual(rng):
        qd, qc = (Tensor(a) for a in rng.standard_normal((2, 1, 2, 4, 4)))
        kd, kc = (Tensor(a) for a in rng.standard_normal((2, 1, 2, 3, 3)))
        r = rng.standard_normal((1, 2, 4, 4))

        def f():
            d = K.DualStack([("deformation", qd), ("gradient", qc)], [("deformation", kd), ("gradient", kc)])
            return _loss_against(K.conv3d_dual(d), r)

        return f, [qd, qc, kd, kc]

    def conv_relu_sum(rng):
        x = Tensor(rng.standard_normal((1, 2, 5, 5)))
        w = Tensor(rng.standard_normal((2, 2, 3, 3)))
        return lambda: T.sum(T.leaky_relu(K.conv2d(x, w, padding=1))), [x, w]

    return {
        "elementwise_add": elementwise_add,
        "elementwise_mul": elementwise_mul,
        "leaky_relu": leaky,
        "sigmoid": sigm,
        "adaptive_avg_pool": pool,
        "bilinear_upsample": upsample,
        "cosine_similarity": cosine,
        "mse_loss": mse,
        "crop": crop_pool,
        "concat_channel_slice": concat_slice,
        "conv2d": conv,
        "deform_conv2d": deform,
        "ccdc_hv": ccdc,
        "corr2d_depthwise": corr,
        "conv3d_dual": dual,
        "conv_relu_sum": conv_relu_sum,
    }


def op_gradients(seed: int = 0, n: int = 20, samples: int = 10, tol: float = 1e-4) -> list[SuiteResult]:
    out = []
    for offset, (name, build) in enumerate(_op_cases().items()):

        def body(build=build, offset=offset):
            rng = np.random.default_rng([seed, 200 + offset])
            worst = 0.0
            for _ in range(n):
                fn, params = build(rng)
                worst = max(worst, check_gradients(fn, params, rng, n_samples=samples))
            return worst, n, {}

        out.append(_run(f"grad.{name}", tol, body))
    return out


def desk_model_for_gradcheck(seed: int = 0) -> LocalizationModel:
    """Desk model with every parameter perturbed away from its init.

    The output conv starts at zero and the offset branch at zero offsets;
    both would make a finite-difference check degenerate.
    """
    model = LocalizationModel(ModelConfig(), seed=seed)
    rng = np.random.default_rng([seed, 300])
    for name, p in model.named_parameters():
        if name.startswith("head_out") or name.startswith("deform.offset"):
            p.data[...] = 0.05 * rng.standard_normal(p.shape)
    return model


def pipeline_gradients(seed: int = 0, per_group: int = 4, tol: float = 1e-4) -> SuiteResult:
    """Finite differences through the full desk pipeline (C=32, 16x16 features)."""
    from ..data import SynthConfig, generate_scene
    from ..locmap import encode_location_map

    def body():
        model = desk_model_for_gradcheck(seed)
        ep = generate_scene(SynthConfig(seed=seed))
        target = Tensor(encode_location_map(ep.points, (64, 64))[None, None])
        image = Tensor(ep.image)

        def fn():
            return T.mse_loss(model(image, ep.box), target)

        params = model.parameters()
        groups = {
            "backbone": [p for k, p in params.items() if k.startswith(("stem", "stage", "project"))],
            "deform_offsets": [params["deform.offset_weight"], params["deform.offset_bias"]],
            "deform_weight": [params["deform.weight"]],
            "ccdc": [params["gradient.weight"]],
            "self_query": [params["in_conv.weight"], params["out_conv.weight"]],
            "head": [p for k, p in params.items() if k.startswith("head")],
        }
        rng = np.random.default_rng([seed, 301])
        details = {}
        for gname, ps in groups.items():
            details[gname] = check_gradients(fn, ps, rng, n_samples=per_group)
        return max(details.values()), per_group * len(groups), details

    return _run("grad.pipeline_desk", tol, body)


# --------------------------------------------------------------------------
# self query


def self_query_properties(seed: int = 0, n: int = 1000) -> list[SuiteResult]:
    def bounds():
        rng = np.random.default_rng([seed, 400])
        worst = 0.0
        for i in range(n):
            C = int(rng.integers(1, 9))
            H, W = rng.integers(1, 7, size=2)
            scale = 10.0 ** rng.uniform(-8, 4)
            s = Tensor(scale * rng.standard_normal((1, C, H, W)))
            q = Tensor(rng.standard_normal((1, C, H, W)))
            if i % 10 == 0:
                s.data[..., 0, 0] = 0.0  # zero columns exercise the eps guard
            inc = Conv2d(C, C, 1, bias=False, rng=rng)
            outc = Conv2d(C, C, 1, bias=False, rng=rng)
            _, w = self_query(s, q, inc, outc)
            worst = max(worst, float(np.abs(w.data).max()) - 1.0)
        return max(worst, 0.0), n, {}

    def scale_invariance():
        rng = np.random.default_rng([seed, 401])
        worst = 0.0
        for _ in range(n // 10):
            C = int(rng.integers(1, 9))
            s = Tensor(rng.standard_normal((1, C, 5, 5)))
            q = Tensor(rng.standard_normal((1, C, 5, 5)))
            inc = Conv2d(C, C, 1, bias=False, rng=rng)
            outc = Conv2d(C, C, 1, bias=False, rng=rng)
            _, w1 = self_query(s, q, inc, outc)
            for alpha in (7.3, float(rng.uniform(0.01, 100))):
                _, w2 = self_query(T.scale(s, alpha), q, inc, outc)
                worst = max(worst, np.abs(w1.data - w2.data).max())
        return worst, n // 10, {}

    def identity():
        rng = np.random.default_rng([seed, 402])
        worst = 0.0
        for _ in range(n // 10):
            C = int(rng.integers(1, 9))
            q = Tensor(rng.standard_normal((1, C, 5, 5)))
            inc = Conv2d(C, C, 1, bias=False, rng=rng)
            inc.weight.data[...] = np.eye(C).reshape(C, C, 1, 1)
            outc = Conv2d(C, C, 1, bias=False, rng=rng)
            _, w = self_query(q, q, inc, outc)
            worst = max(worst, np.abs(w.data - 1.0).max())
        return worst, n // 10, {}

    return [
        _run("self_query.weights_in_unit_interval", 0.0, bounds),
        _run("self_query.positive_scale_invariance", 1e-12, scale_invariance),
        _run("self_query.self_similarity_is_one", 1e-12, identity),
    ]


# --------------------------------------------------------------------------
# location maps


def random_point_set(rng, size=64, min_sep=5.0, margin=3, max_points=12):
    k = int(rng.integers(1, max_points + 1))
    pts: list[tuple[int, int]] = []
    for _ in range(2000):
        if len(pts) == k:
            break
        p = (int(rng.integers(margin, size - margin)), int(rng.integers(margin, size - margin)))
        if all(math.hypot(p[0] - q[0], p[1] - q[1]) >= min_sep for q in pts):
            pts.append(p)
    return pts


def locmap_roundtrip(seed: int = 0, n: int = 100) -> SuiteResult:
    presets = {
        "default": locmap.T_DEFAULT,
        "dense": locmap.T_DENSE,
        "sparse": locmap.T_SPARSE,
    }

    def body():
        rng = np.random.default_rng([seed, 500])
        failures = 0
        for _ in range(n):
            pts = random_point_set(rng)
            m = locmap.encode_location_map(pts, (64, 64))
            for t in presets.values():
                got = locmap.decode_peaks(m, locmap.DecoderConfig(threshold=t, floor=locmap.VALUE_FLOOR))
                failures += set(got) != set(pts)
        return float(failures), n, {k: round(v, 12) for k, v in presets.items()}

    return _run("locmap.encode_decode_roundtrip", 0.0, body)


# --------------------------------------------------------------------------
# matching and metrics


def matching_oracle(seed: int = 0, n: int = 500) -> SuiteResult:
    def body():
        rng = np.random.default_rng([seed, 600])
        mismatches = 0
        worst_dist = 0.0
        for _ in range(n):
            P = rng.uniform(0, 30, (int(rng.integers(0, 7)), 2))
            G = rng.uniform(0, 30, (int(rng.integers(0, 7)), 2))
            sigma = float(rng.choice([4.0, 5.0, 8.0, 10.0]))
            m = metrics.match_points(P, G, sigma)
            tp, total = oracles.max_matching_bruteforce(P.tolist(), G.tolist(), sigma)
            mismatches += m.tp != tp
            worst_dist = max(worst_dist, abs(sum(d for *_, d in m.pairs) - total))
        spot = metrics.point_error((3, 4), (0, 0))
        strict = metrics.match_points([(3, 4)], [(0, 0)], 4.0)
        loose = metrics.match_points([(3, 4)], [(0, 0)], 10.0)
        bad = (spot != 5.0) + ((strict.tp, strict.fp, strict.fn) != (0, 1, 1)) + (loose.tp != 1)
        bad += worst_dist > 1e-9
        return float(mismatches + bad), n, {"spot_error": spot}

    return _run("metrics.matching_vs_bruteforce", 0.0, body)


# (tp, fp, fn) -> (precision, recall, f1), all hand-computed
PRF_FIXTURES = [
    ((0, 0, 0), (0.0, 0.0, 0.0)),
    ((1, 1, 0), (0.5, 1.0, 2 / 3)),
    ((59, 41, 30), (0.59, 59 / 89, 2 * 59 / (2 * 59 + 41 + 30))),
    ((0, 5, 3), (0.0, 0.0, 0.0)),
    ((4, 0, 0), (1.0, 1.0, 1.0)),
    ((3, 0, 1), (1.0, 0.75, 6 / 7)),
]
# (gt counts, predicted counts) -> (mae, rmse)
COUNT_FIXTURES = [
    (([3, 2], [2, 4]), (1.5, math.sqrt(2.5))),
    (([5, 5, 5], [5, 5, 5]), (0.0, 0.0)),
    (([0], [4]), (4.0, 4.0)),
    (([1, 2, 3, 4], [2, 2, 2, 8]), (1.5, math.sqrt(4.5))),
]


def metric_formulas(seed: int = 0, n: int = 1000) -> SuiteResult:
    def body():
        worst = 0.0
        for (tp, fp, fn), want in PRF_FIXTURES:
            worst = max(worst, max(abs(a - b) for a, b in zip(metrics.prf1(tp, fp, fn), want)))
        for (y, yh), want in COUNT_FIXTURES:
            worst = max(worst, max(abs(a - b) for a, b in zip(metrics.counting_errors(y, yh), want)))
        rng = np.random.default_rng([seed, 700])
        violations = 0
        for _ in range(n):
            k = int(rng.integers(1, 20))
            y = rng.integers(0, 50, k)
            yh = rng.integers(0, 50, k)
            mae, rmse = metrics.counting_errors(y, yh)
            violations += rmse < mae - 1e-12
        return worst + violations, len(PRF_FIXTURES) + len(COUNT_FIXTURES) + n, {}

    return _run("metrics.formulas", 1e-12, body)


# --------------------------------------------------------------------------


def run_all(seed: int = 0, quick: bool = False) -> list[SuiteResult]:
    """Every suite except the learning runs. ``quick`` trims case counts."""
    f = 5 if quick else 1
    results = []
    results += kernel_oracles(seed, n=200 // f)
    results.append(adaptive_pool_oracle(seed))
    results += degenerate_reductions(seed, n=50 // f)
    results += op_gradients(seed, n=20 // f if not quick else 4)
    results.append(pipeline_gradients(seed))
    results += self_query_properties(seed, n=1000 // f)
    results.append(locmap_roundtrip(seed, n=100 // f))
    results.append(matching_oracle(seed, n=500 // f))
    results.append(metric_formulas(seed, n=1000 // f))
    return results


# --------------------------------------------------------------------------
# desk-scale learning


@dataclass
class LearningRun:
    seed: int
    variant: dict
    train_f1: float
    novel_f1: float
    losses: list[float]
    steps: int
    seconds: float

    def summary(self) -> tuple:
        return (self.seed, tuple(sorted(self.variant.items())), self.train_f1, self.novel_f1, tuple(self.losses), self.steps)


def desk_learning(seed: int = 0, sigma: float = 10.0, **model_kw) -> LearningRun:
    """Train on discs and squares, then score the training images and held-out
    triangles (a class never seen in training)."""
    from ..data import synth_dataset
    from ..train import TrainConfig, evaluate_model, fit

    t0 = time.perf_counter()
    train = synth_dataset(["disc", "square"], 16, seed=seed)
    novel = synth_dataset(["triangle"], 8, seed=seed + 1000)
    model = LocalizationModel(ModelConfig(**model_kw), seed=seed)
    res = fit(model, train, TrainConfig.desk(seed=seed))
    tr = evaluate_model(model, train, (sigma,)).f1(sigma)
    nv = evaluate_model(model, novel, (sigma,)).f1(sigma)
    return LearningRun(seed, dict(model_kw), tr, nv, [r.loss for r in res.history], res.steps, time.perf_counter() - t0)

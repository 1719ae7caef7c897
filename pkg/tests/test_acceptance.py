"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from fewloc.config import RunConfig
from fewloc.locmap import T_DEFAULT, T_DENSE, T_SPARSE, VALUE_FLOOR
from fewloc.metrics import match_points, point_error
from fewloc.verify import suites


def report(capsys, n, ok, text):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {text}")


def _by_prefix(results, *prefixes):
    return [r for r in results if r.name.startswith(prefixes)]


@pytest.fixture(scope="module")
def first_run():
    """Every suite of criteria 1-7 plus the criterion-8 learning run, timed."""
    t0 = time.perf_counter()
    kern = suites.kernel_oracles(0, n=200, tol=1e-6)
    t_kern = time.perf_counter() - t0
    red = suites.degenerate_reductions(0, n=50, tol=1e-12)
    t0 = time.perf_counter()
    grads = suites.op_gradients(0, n=20, samples=10, tol=1e-4) + [suites.pipeline_gradients(0, per_group=4)]
    t_grad = time.perf_counter() - t0
    sq = suites.self_query_properties(0, n=1000)
    loc = suites.locmap_roundtrip(0, n=100)
    match = suites.matching_oracle(0, n=500)
    form = suites.metric_formulas(0, n=1000)
    learn = suites.desk_learning(0)
    return dict(kern=kern, t_kern=t_kern, red=red, grads=grads, t_grad=t_grad, sq=sq, loc=loc, match=match, form=form, learn=learn)


def _lines(results):
    return "; ".join(f"{r.name} err={r.max_error:.2e} n={r.cases}" for r in results)


def test_criterion_1_kernel_oracles(first_run, capsys):
    res = first_run["kern"]
    names = {r.name for r in res}
    want = {f"oracle.{k}" for k in ("conv2d", "deform_conv2d", "ccdc_hv", "corr2d_depthwise", "conv3d_dual")}
    ok = (
        want <= names
        and all(r.passed and r.tolerance == 1e-6 and r.cases >= 200 for r in res)
        and first_run["t_kern"] < 120
    )
    report(capsys, 1, ok, f"{_lines(res)}; {first_run['t_kern']:.1f}s")
    assert ok


def test_criterion_2_degenerate_reductions(first_run, capsys):
    res = first_run["red"]
    want = {
        "reduce.deform_zero_offsets_is_conv2d",
        "reduce.ccdc_theta0_is_cross_conv",
        "reduce.ccdc_constant_theta1_is_zero",
        "reduce.conv3d_dual_is_branch_sum",
    }
    ok = want <= {r.name for r in res} and all(r.passed and r.max_error <= 1e-12 for r in res)
    report(capsys, 2, ok, _lines(res))
    assert ok


def test_criterion_3_gradients(first_run, capsys):
    res = first_run["grads"]
    pipe = [r for r in res if r.name == "grad.pipeline_desk"]
    ok = (
        len(pipe) == 1
        and all(r.passed and r.max_error <= 1e-4 and r.cases >= 20 for r in res)
        and first_run["t_grad"] < 300
    )
    report(capsys, 3, ok, f"{len(res)} suites, worst rel err {max(r.max_error for r in res):.2e}; {first_run['t_grad']:.1f}s")
    assert ok


def test_criterion_4_self_query(first_run, capsys):
    res = first_run["sq"]
    bounds = [r for r in res if r.name == "self_query.weights_in_unit_interval"]
    ok = (
        len(res) == 3
        and bounds[0].cases >= 1000
        and all(r.passed for r in res)
        and all(r.max_error <= 1e-12 for r in res)
    )
    report(capsys, 4, ok, _lines(res))
    assert ok


def test_criterion_5_locmap_roundtrip(first_run, capsys):
    r = first_run["loc"]
    cfg = RunConfig()
    constants = (T_DEFAULT, T_DENSE, T_SPARSE, VALUE_FLOOR) == (100 / 255, 40 / 255, 60 / 255, 0.06)
    wired = cfg.threshold == T_DEFAULT and cfg.floor == VALUE_FLOOR
    ok = r.passed and r.cases >= 100 and r.max_error == 0 and constants and wired
    report(capsys, 5, ok, f"{r.line()}; T_a presets {r.details}")
    assert ok


def test_criterion_6_matching(first_run, capsys):
    r = first_run["match"]
    spot = point_error((3, 4), (0, 0))
    gate = match_points([(3, 4)], [(0, 0)], 4).tp == 0 and match_points([(3, 4)], [(0, 0)], 10).tp == 1
    ok = r.passed and r.cases >= 500 and spot == 5.0 and gate
    report(capsys, 6, ok, f"{r.line()}; spot error {spot}")
    assert ok


def test_criterion_7_metric_formulas(first_run, capsys):
    r = first_run["form"]
    ok = r.passed and r.cases >= 1000 + len(suites.PRF_FIXTURES)
    report(capsys, 7, ok, r.line())
    assert ok


def test_criterion_8_desk_learning(first_run, capsys):
    run = first_run["learn"]
    ok = run.train_f1 >= 0.90 and run.novel_f1 >= 0.70 and run.steps <= 300 and run.seconds < 600
    report(
        capsys, 8, ok,
        f"train F1@10={run.train_f1:.3f} (>=0.90), novel F1@10={run.novel_f1:.3f} (>=0.70), "
        f"{run.steps} steps, {run.seconds:.1f}s",
    )
    assert ok


def test_criterion_9_ablation_direction(first_run, capsys):
    variants = {"full": {}, "no_sq": dict(use_sq=False), "no_dfa": dict(use_dc=False, use_ccdc=False)}
    scores = {k: [] for k in variants}
    for seed in range(3):
        for name, kw in variants.items():
            run = first_run["learn"] if (seed == 0 and not kw) else suites.desk_learning(seed, **kw)
            scores[name].append((run.train_f1, run.novel_f1))
    mean = {k: np.mean(v, axis=0) for k, v in scores.items()}
    ok = all(np.all(mean["full"] >= mean[k]) for k in ("no_sq", "no_dfa"))
    text = ", ".join(f"{k} train/novel={m[0]:.3f}/{m[1]:.3f}" for k, m in mean.items())
    report(capsys, 9, ok, text)
    assert ok


def test_criterion_10_determinism(first_run, capsys):
    second = dict(
        kern=suites.kernel_oracles(0, n=200, tol=1e-6),
        red=suites.degenerate_reductions(0, n=50, tol=1e-12),
        grads=suites.op_gradients(0, n=20, samples=10, tol=1e-4) + [suites.pipeline_gradients(0, per_group=4)],
        sq=suites.self_query_properties(0, n=1000),
        loc=suites.locmap_roundtrip(0, n=100),
        match=suites.matching_oracle(0, n=500),
        form=suites.metric_formulas(0, n=1000),
        learn=suites.desk_learning(0),
    )

    def summaries(run):
        out = {}
        for k, v in run.items():
            if k.startswith("t_"):
                continue
            items = v if isinstance(v, list) else [v]
            out[k] = [x.summary() for x in items]
        return out

    a, b = summaries(first_run), summaries(second)
    differ = [k for k in a if a[k] != b[k]]
    ok = not differ
    report(capsys, 10, ok, "criteria 1-8 summaries bit-identical" if ok else f"differ: {differ}")
    assert ok

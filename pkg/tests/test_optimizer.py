import csv
import io
import json
import math

import numpy as np
import pytest

from leakopt.clifford import CostConfig, CostResult
from leakopt.cmaes import CMAES, CmaesConfig, default_popsize
from leakopt.cost import ParameterSet, PulseContext, Stage
from leakopt.optimizer import (
    OptimizationAborted,
    StageSettings,
    calibrate,
    run_optimization,
    two_stage_pipeline,
)
from leakopt.quantum import DeviceConfig, NoiseModel


def sphere(x, *_):
    return -float(np.sum(np.asarray(x) ** 2))


def rosenbrock(x, *_):
    x = np.asarray(x)
    return -float(np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


def test_default_popsize():
    assert default_popsize(3) == 7
    assert default_popsize(10) == 10
    assert default_popsize(23) == 13
    with pytest.raises(ValueError):
        CmaesConfig(popsize=3)
    with pytest.raises(ValueError):
        CmaesConfig(sigma0=0.0)


def test_ask_shape_and_determinism():
    es1 = CMAES(np.ones(5), CmaesConfig(popsize=9, sigma0=0.3, seed=4))
    es2 = CMAES(np.ones(5), CmaesConfig(popsize=9, sigma0=0.3, seed=4))
    a, b = es1.ask(), es2.ask()
    assert len(a) == 9 and all(x.shape == (5,) for x in a)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_small_sigma_candidates_equal_mean():
    es = CMAES(np.array([0.5, -1.0, 2.0]), CmaesConfig(sigma0=1e-15, seed=0))
    for x in es.ask():
        assert np.abs(x - es.mean).max() < 1e-12


def test_equal_costs_leave_mean_unchanged():
    es = CMAES(np.zeros(4), CmaesConfig(sigma0=0.5, seed=1))
    m0, s0 = es.mean.copy(), es.sigma
    xs = es.ask()
    es.tell(xs, [1.0] * len(xs))
    assert np.abs(es.mean - m0).max() < 1e-12
    assert es.sigma == s0


def test_tell_validation():
    es = CMAES(np.zeros(3), CmaesConfig(seed=0))
    xs = es.ask()
    with pytest.raises(ValueError):
        es.tell(xs, [0.0] * (len(xs) - 1))
    with pytest.raises(ValueError):
        es.tell(xs, [math.nan] * len(xs))


def test_sphere_10d():
    cfg = CmaesConfig(sigma0=1.0, max_iterations=500, target_cost=-1e-6, seed=0)
    res = run_optimization(sphere, np.full(10, 2.0), cfg)
    evals = res.iterations * default_popsize(10)
    assert res.best_cost > -1e-6
    assert evals <= 5000
    again = run_optimization(sphere, np.full(10, 2.0), cfg)
    assert np.array_equal(res.trace.best_series, again.trace.best_series)
    assert np.array_equal(res.best_x, again.best_x)


def test_rosenbrock_best_so_far_monotone():
    res = run_optimization(rosenbrock, np.zeros(5), CmaesConfig(sigma0=0.5, max_iterations=80, seed=2))
    best = res.trace.best_series
    assert np.all(np.diff(best) >= 0)
    assert best[-1] > rosenbrock(np.zeros(5))


def test_constant_objective_runs_to_max_iterations():
    res = run_optimization(lambda x, *_: 0.25, np.zeros(3), CmaesConfig(sigma0=0.1, max_iterations=7, seed=0))
    assert res.iterations == 7
    assert res.best_cost == 0.25
    assert np.abs(res.best_x).max() < 1.0
    assert np.all(np.isfinite(res.trace.mean_cost_series))
    assert len(res.trace.mean_cost_series) == res.iterations


def test_bounds_hold_exactly():
    lower, upper = np.array([-0.1, 0.0, 1.0]), np.array([0.1, 0.05, 1.2])
    cfg = CmaesConfig(sigma0=1.0, lower=lower, upper=upper, max_iterations=20, seed=3, max_resample=2)
    res = run_optimization(lambda x, *_: float(x.sum()), np.array([0.0, 0.02, 1.1]), cfg)
    for rec in res.trace.records:
        assert np.all(rec.candidates >= lower) and np.all(rec.candidates <= upper)


def test_scale_equivariance_first_iteration():
    c = 7.0
    x0 = np.array([1.0, -2.0, 0.5, 3.0])
    a = run_optimization(sphere, x0, CmaesConfig(sigma0=0.3, max_iterations=1, seed=5))
    b = run_optimization(lambda x, *_: sphere(x / c), x0 * c, CmaesConfig(sigma0=0.3 * c, max_iterations=1, seed=5))
    ra, rb = a.trace.records[0], b.trace.records[0]
    assert np.array_equal(np.argsort(ra.costs), np.argsort(rb.costs))
    assert np.abs(ra.candidates * c - rb.candidates).max() < 1e-9


def test_parallel_matches_sequential():
    def noisy(x, it, k):
        rng = np.random.default_rng([it, k])
        return sphere(x) + 0.01 * rng.normal()

    cfg = CmaesConfig(sigma0=0.5, max_iterations=15, seed=8)
    a = run_optimization(noisy, np.ones(6), cfg, workers=1)
    b = run_optimization(noisy, np.ones(6), cfg, workers=4)
    for ra, rb in zip(a.trace.records, b.trace.records):
        assert np.array_equal(ra.costs, rb.costs)
        assert np.array_equal(ra.mean, rb.mean)


def test_invalid_candidates_scored_and_abort():
    def half_bad(x, it, k):
        return CostResult(0.0, False, "bad") if k % 3 == 0 else sphere(x)

    res = run_optimization(half_bad, np.ones(3), CmaesConfig(sigma0=0.2, popsize=9, max_iterations=5, seed=0))
    assert np.all(res.trace.records[0].costs[::3] == 0.0)

    def mostly_bad(x, it, k):
        if k > 1:
            raise ValueError("cannot decode")
        return sphere(x)

    with pytest.raises(OptimizationAborted) as info:
        run_optimization(mostly_bad, np.ones(3), CmaesConfig(sigma0=0.2, popsize=8, max_iterations=5, seed=0))
    assert len(info.value.trace) == 1
    assert "cannot decode" in str(info.value)


def test_trace_exports():
    res = run_optimization(sphere, np.ones(3), CmaesConfig(sigma0=0.2, max_iterations=4, seed=0))
    lines = res.trace.to_jsonl().strip().splitlines()
    assert len(lines) == 4
    rec = json.loads(lines[0])
    assert {"iter", "best", "mean_cost", "sigma", "timings"} <= set(rec)
    assert {"sequence_construction", "setup", "evaluation"} <= set(rec["timings"])
    assert "timings" not in json.loads(res.trace.to_jsonl(timings=False).splitlines()[0])
    rows = list(csv.reader(io.StringIO(res.trace.to_candidates_csv())))
    assert rows[0] == ["iter", "candidate", "cost"]
    assert len(rows) == 1 + 4 * default_popsize(3)


def test_prepare_is_booked_as_setup():
    calls = []
    res = run_optimization(sphere, np.ones(2), CmaesConfig(max_iterations=3, seed=0), prepare=calls.append)
    assert calls == [0, 1, 2]
    assert all(r.timings_ns["setup"] >= 0 for r in res.trace.records)


# -- pulse calibration -------------------------------------------------------

def context(n, noise=None):
    return PulseContext(DeviceConfig(), noise or NoiseModel.noiseless(), n, 2 * math.pi * 0.1)


def test_parameter_sets():
    p = ParameterSet(Stage.DRAG, [0.3, -0.5, 0.6])
    q = p.extend(10)
    assert q.stage is Stage.PWC and q.values.size == 23
    assert np.abs(q.corrections.as_complex).max() == 0
    assert ParameterSet.from_dict(q.to_dict()) == q
    assert ParameterSet.from_dict(p.to_dict()) != q
    assert p.extend(26).values.size == 55
    with pytest.raises(ValueError):
        ParameterSet(Stage.PWC, np.zeros(6))
    with pytest.raises(ValueError):
        q.extend(10)


def test_drag_calibration_noiseless():
    ctx = context(20)
    a0 = ctx.initial_amplitude()
    start = ParameterSet(Stage.DRAG, [a0, -1.0, ctx.ssb_nominal])
    cost = CostConfig(m=120, n_sequences=20, n_shots=1000, seed=0)
    res = calibrate(start, ctx, cost, StageSettings(max_iterations=25), reference_amplitude=a0)
    assert res.cost > 0.99
    assert np.all(np.diff(res.trace.best_series) >= 0)


def test_pipeline_dimensions():
    ctx = context(10, NoiseModel(t1=105e3, t2=39e3))
    cost = CostConfig(m=20, n_sequences=3, n_shots=100)
    res = two_stage_pipeline(ctx, cost, StageSettings(max_iterations=2), StageSettings(max_iterations=2))
    assert res.drag.params.values.size == 3
    assert res.pwc.params.values.size == 23
    assert res.pwc.trace.records[0].candidates.shape[1] == 23
    # stage 2 starts from the stage-1 result with zero corrections
    first_mean = res.pwc.trace.records[0].candidates.mean(axis=0)
    assert np.abs(first_mean[:3] - res.drag.params.values).max() < 1.0


def test_stage_two_does_not_degrade_flat_regime():
    ctx = context(15)
    cost = CostConfig()
    res = two_stage_pipeline(
        ctx, cost, StageSettings(max_iterations=10), StageSettings(max_iterations=5), objective="fidelity"
    )
    assert res.pwc.cost >= res.drag.cost


def test_calibrate_rejects_unknown_objective():
    ctx = context(10)
    with pytest.raises(ValueError):
        calibrate(ParameterSet(Stage.DRAG, [0.3, 0.0, 0.6]), ctx, CostConfig(), StageSettings(), objective="x")

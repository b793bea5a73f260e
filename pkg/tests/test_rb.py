import json

import numpy as np
import pytest

from synthetic import LENGTHS, DEVICE_SCALE, leakage_channel, model_populations, sample_dataset

from leakopt.clifford import CliffordSet, build_clifford_table
from leakopt.quantum import depolarizing_channel
from leakopt.rb import (
    RbDataset,
    analyze_leakage,
    average_fidelity,
    expected_populations,
    fit_double_decay,
    fit_single_decay,
    full_leakage_rb,
    generate_rb_dataset,
    leakage_per_clifford,
)


@pytest.fixture(scope="module")
def table():
    return build_clifford_table()


def test_closed_forms():
    assert leakage_per_clifford(0.5, 1.0) == 0
    assert leakage_per_clifford(1.0, 0.9) == 0
    assert abs(leakage_per_clifford(0.9, 0.99) - 0.001) < 1e-15
    assert average_fidelity(1.0, 0.0) == 1.0
    assert abs(average_fidelity(0.9956, 0.00044) - 0.99758) < 1e-12
    assert abs(average_fidelity(0.9851, 0.0029) - 0.9911) < 1e-12
    ls = np.linspace(0, 0.01, 5)
    assert np.all(np.diff([average_fidelity(0.99, l) for l in ls]) < 0)
    assert np.all(np.diff([average_fidelity(lam, 0.001) for lam in np.linspace(0.9, 1, 5)]) > 0)


def test_single_decay_exact():
    y = 0.98 + 0.02 * 0.999**LENGTHS
    fit = fit_single_decay(LENGTHS, y)
    assert np.abs(fit.params - [0.98, 0.02, 0.999]).max() < 1e-6
    assert fit.residual_norm < 1e-10
    assert fit.converged and not fit.flagged
    assert np.all(np.linalg.eigvalsh(fit.cov) >= -1e-18)


def test_single_decay_order_invariant():
    rng = np.random.default_rng(0)
    y = 0.9 + 0.1 * 0.99**LENGTHS + 0.001 * rng.normal(size=LENGTHS.size)
    perm = rng.permutation(LENGTHS.size)
    a = fit_single_decay(LENGTHS, y)
    b = fit_single_decay(LENGTHS[perm], y[perm])
    assert np.abs(a.params - b.params).max() < 1e-12


def test_single_decay_constant_data_flagged():
    fit = fit_single_decay(LENGTHS, np.full(LENGTHS.size, 0.97))
    assert abs(fit["B"]) < 1e-12
    assert abs(fit["A"] - 0.97) < 1e-12
    assert fit.flagged
    assert not np.isfinite(fit.error("lambda1")) or fit.error("lambda1") > 1


def test_fit_input_validation():
    with pytest.raises(ValueError):
        fit_single_decay([1, 1, 2], [0.9, 0.9, 0.8])
    with pytest.raises(ValueError):
        fit_single_decay([1, 2, 3], [0.9, 0.8])
    with pytest.raises(ValueError):
        fit_single_decay([1, 2, 3], [0.9, 0.8, 0.7], sigma=[0.1, 0.0, 0.1])


def test_double_decay_exact():
    b, lam1 = 0.1, 0.995
    y = 0.45 + b * lam1**LENGTHS + 0.45 * 0.9956**LENGTHS
    fit = fit_double_decay(LENGTHS, y, b, lam1)
    assert np.abs(fit.params - [0.45, 0.45, 0.9956]).max() < 1e-6
    assert fit.residual_norm < 1e-10


def test_double_decay_without_computational_decay_flagged():
    b, lam1 = 0.1, 0.995
    y = 0.5 + b * lam1**LENGTHS
    fit = fit_double_decay(LENGTHS, y, b, lam1)
    assert fit.flagged


def test_noisy_fits_cover_truth():
    rng = np.random.default_rng(42)
    hits1 = hits2 = 0
    trials = 60
    for _ in range(trials):
        res = analyze_leakage(sample_dataset(rng, DEVICE_SCALE))
        hits1 += abs(res.lambda1 - DEVICE_SCALE["lam1"]) < 3 * res.stderr["lambda1"]
        hits2 += abs(res.lambda2 - DEVICE_SCALE["lam2"]) < 3 * res.stderr["lambda2"]
    assert hits1 >= 0.9 * trials
    assert hits2 >= 0.9 * trials


def test_analyze_leakage_exact_model():
    pops = model_populations(LENGTHS, **DEVICE_SCALE)
    shots = 10**9
    counts = np.rint(pops * shots).astype(np.int64)[:, None, :]
    counts[..., 0] += shots - counts.sum(axis=2)
    res = analyze_leakage(RbDataset(LENGTHS, counts, shots, 0))
    assert abs(res.l1 - 0.1 * 0.005) < 1e-6
    assert abs(res.lambda2 - 0.9956) < 1e-5
    assert abs(res.f_avg - average_fidelity(0.9956, 0.0005)) < 1e-5


def test_dataset_round_trip_and_validation():
    rng = np.random.default_rng(1)
    data = sample_dataset(rng, DEVICE_SCALE, k=3, shots=50)
    text = data.to_csv()
    assert text.splitlines()[0] == "m,seq_index,shots,n0,n1,n2"
    assert len(text.splitlines()) == 1 + LENGTHS.size * 3
    back = RbDataset.from_csv(text)
    assert np.array_equal(back.counts, data.counts) and np.array_equal(back.lengths, data.lengths)
    with pytest.raises(ValueError):
        RbDataset(np.array([1, 1, 2]), np.zeros((3, 1, 3), int), 0, 0)
    with pytest.raises(ValueError):
        RbDataset(np.array([1, 2]), np.ones((2, 1, 3), int), 5, 0)


def test_ideal_dataset(table):
    ideal = CliffordSet.ideal(4, table)
    data = generate_rb_dataset(ideal, [1, 10, 100], n_sequences=4, shots=100, seed=0)
    assert np.all(data.counts[..., 0] == 100)
    again = generate_rb_dataset(ideal, [1, 10, 100], n_sequences=4, shots=100, seed=0)
    assert np.array_equal(again.counts, data.counts)
    with pytest.raises(ValueError):
        generate_rb_dataset(ideal, [], 4, 100, 0)


def test_depolarizing_decay(table):
    eps = 0.005
    cliffords = CliffordSet.ideal(2, table, error=depolarizing_channel(2 * eps))
    data = generate_rb_dataset(cliffords, LENGTHS, n_sequences=10, shots=10**5, seed=3)
    mean, err = data.mean("p0")
    fit = fit_single_decay(LENGTHS, mean, err)
    assert abs(fit["lambda1"] - (1 - 2 * eps)) < 0.05 * (1 - 2 * eps)
    res = analyze_leakage(data)
    assert abs(res.lambda2 - (1 - 2 * eps)) < 0.02 * (1 - 2 * eps)
    assert res.l1 < 1e-4


def test_injected_leakage_oracle(table):
    leak = 0.003
    cliffords = CliffordSet.ideal(3, table, error=leakage_channel(leak, seep=0.01))
    res, data = full_leakage_rb(cliffords, LENGTHS, n_sequences=20, shots=1000, seed=5)
    assert abs(res.l1 - leak) < 0.1 * leak
    exact = expected_populations(cliffords, LENGTHS, 20, seed=5)
    assert np.abs(data.fractions().mean(axis=1) - exact).max() < 0.01


def test_ideal_leakage_rb(table):
    res, _ = full_leakage_rb(CliffordSet.ideal(4, table), [1, 20, 60, 120, 200], 5, 1000, seed=0)
    assert res.l1 < 1e-4
    assert res.f_avg > 0.9999
    d = res.to_dict()
    assert set(d) == {"L1", "lambda1", "lambda2", "F_avg", "stderr", "fit_diagnostics"}
    json.dumps(d)

import numpy as np
import pytest

from spa.baseline import (
    BENCH_COLUMNS,
    DEATH_REWARD,
    SATIATED_REWARD,
    IhdrProblem,
    benchmark_ontology,
    default_reward,
    ihdr_value_iteration,
    large_grid_benchmark,
    product_bytes_estimate,
    run_spa_pipeline,
    scaling_benchmark,
    write_benchmark_csv,
)
from spa.core import DomainError
from spa.hierarchy import compose_product_operator


@pytest.fixture(scope="module")
def small():
    ont, start = benchmark_ontology(2, 2, 1, 4, 10, np.random.default_rng(0))
    return ont, start, compose_product_operator(ont)


def test_reward_layout(small):
    ont, _, prod = small
    r = default_reward(ont, prod)
    for i in range(prod.n_states):
        (y,), _ = prod.unravel(i)
        assert r[i] == (DEATH_REWARD if y == 0 else SATIATED_REWARD if y == 3 else 0.0)


def test_value_iteration_fixed_point(small):
    ont, _, prod = small
    prob = IhdrProblem(prod, default_reward(ont, prod))
    res = ihdr_value_iteration(prob)
    assert res.converged
    op = prod.op
    q = np.stack([op.matrix(a) @ res.value for a in range(op.n_actions)])
    bellman = prob.reward + prob.gamma * q.max(axis=0)
    assert np.abs(bellman - res.value).max() <= 1e-5
    # the dead floor is absorbing away from the refill cell: V = R / (1 - gamma)
    refill = set(np.flatnonzero(ont.availability("g0").max(axis=(1, 2))))
    dead = [i for i in range(prod.n_states) if prod.unravel(i)[0][0] == 0 and prod.unravel(i)[1] not in refill]
    assert len(dead) == 3
    assert np.allclose(res.value[dead], DEATH_REWARD / (1 - prob.gamma), atol=1e-3)


def test_ihdr_problem_validation(small):
    ont, _, prod = small
    r = default_reward(ont, prod)
    with pytest.raises(DomainError):
        IhdrProblem(prod, r, gamma=1.0)
    with pytest.raises(DomainError):
        IhdrProblem(prod, r[:-1])
    bad = r.copy()
    bad[0] = np.nan
    with pytest.raises(DomainError):
        IhdrProblem(prod, bad)


def test_spa_pipeline(small):
    ont, start, _ = small
    out = run_spa_pipeline(ont, start, 2, 2)
    assert out["leaves"] >= 1 and len(out["best"]) >= 1


def test_scaling_rows_and_guard(monkeypatch, tmp_path):
    rows = scaling_benchmark([1, 2], trials=1, seed=3)
    assert [(r["method"], r["num_secondary"]) for r in rows] == [("ihdr", 1), ("spa", 1), ("ihdr", 2), ("spa", 2)]
    assert all(r["status"] == "ok" for r in rows)
    monkeypatch.setenv("SPA_GUARD_BYTES", "1000")
    rows = scaling_benchmark([1], trials=1, methods=("ihdr",))
    assert rows[0]["status"].startswith("exceeded:") and np.isnan(rows[0]["seconds"])
    path = tmp_path / "b.csv"
    write_benchmark_csv(rows, path)
    assert path.read_text().splitlines()[0] == ",".join(BENCH_COLUMNS)


def test_large_grid():
    rows = large_grid_benchmark((9,), niss=1, M=1, n=1)
    assert rows[0]["status"] == "ok" and rows[0]["N"] == 9
    with pytest.raises(DomainError):
        large_grid_benchmark((10,))


def test_bytes_estimate_monotone():
    assert product_bytes_estimate(10, 5) < product_bytes_estimate(20, 5) < product_bytes_estimate(20, 6)


def test_too_many_spaces():
    with pytest.raises(DomainError):
        benchmark_ontology(1, 2, 3, 4, 5, np.random.default_rng(0))

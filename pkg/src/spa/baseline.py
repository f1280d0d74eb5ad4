"""Infinite-horizon discounted reward value iteration on the explicit product
space, and the timing benchmarks that compare it with the factorized planner.
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import AvailabilityFn, DomainError, grid_successors, identity_successors, \
    make_chain_space, operator_from_successors, StateSpace, ActionSet, GRID_ACTIONS
from .hierarchy import Goal, ModeFunction, Ontology, ProductOperator, State, compose_product_operator
from .planning import bfs_plan_search, select_best_plan

DEFAULT_GUARD_BYTES = 4 * 2**30
DEATH_REWARD = -1000.0
SATIATED_REWARD = 10.0


def guard_bytes() -> int:
    v = os.environ.get("SPA_GUARD_BYTES")
    return int(v) if v else DEFAULT_GUARD_BYTES


def product_bytes_estimate(n_states: int, n_actions: int) -> int:
    """Deterministic sparse product: one float64 + int32 per (s, a) plus index arrays and value vectors."""
    return n_states * n_actions * 16 + n_states * 8 * 6


@dataclass
class IhdrProblem:
    product: ProductOperator
    reward: np.ndarray
    gamma: float = 0.95
    tol: float = 1e-6
    max_iterations: int = 10**4

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise DomainError("discount must lie in (0, 1)")
        if not np.all(np.isfinite(self.reward)):
            raise DomainError("reward must be finite")
        if self.reward.shape != (self.product.n_states,):
            raise DomainError("reward length must equal the product size")
        if not self.product.op.stationary:
            raise DomainError("IHDR needs a stationary operator (time folded out)")


@dataclass
class IhdrResult:
    value: np.ndarray
    policy: np.ndarray
    iterations: int
    seconds: float
    converged: bool


def ihdr_value_iteration(problem: IhdrProblem) -> IhdrResult:
    """V(s) = R(s) + gamma * max_a sum_s' P(s'|s,a) V(s') to sup-norm tolerance."""
    t0 = time.perf_counter()
    op = problem.product.op
    nS, nA = op.n_states, op.n_actions
    stacked = sp.vstack([op.matrix(a) for a in range(nA)], format="csr")
    R, g = problem.reward, problem.gamma
    V = np.zeros(nS)
    converged, it = False, 0
    for it in range(1, problem.max_iterations + 1):
        q = (stacked @ V).reshape(nA, nS)
        V2 = R + g * q.max(axis=0)
        if np.max(np.abs(V2 - V)) < problem.tol:
            V = V2
            converged = True
            break
        V = V2
    q = (stacked @ V).reshape(nA, nS)
    pol = np.argmax(q >= q.max(axis=0) - 1e-12, axis=0)
    return IhdrResult(V, pol, it, time.perf_counter() - t0, converged)


def default_reward(ont: Ontology, product: ProductOperator) -> np.ndarray:
    """-1000 on any defective component, +10 on the all-max vector of defective-bearing spaces."""
    n = product.n_states
    grids = np.indices(product.dims).reshape(len(product.dims), -1)
    dead = np.zeros(n, dtype=bool)
    full = np.ones(n, dtype=bool)
    for i, op in enumerate(ont.spaces):
        d = op.space.defective
        if not d:
            continue
        dead |= np.isin(grids[i], list(d))
        full &= grids[i] == op.n_states - 1
    r = np.zeros(n)
    r[full] = SATIATED_REWARD
    r[dead] = DEATH_REWARD
    return r


# ---------------------------------------------------------------- benchmarks


def benchmark_ontology(width: int, height: int, n_secondary: int, size: int, horizon: int,
                       rng: np.random.Generator) -> tuple[Ontology, State]:
    """Grid plus ``n_secondary`` chains, each refilled by a goal at a random distinct cell."""
    n_cells = width * height
    if n_secondary > n_cells:
        raise DomainError("more secondary spaces than grid cells")
    cells = rng.choice(n_cells, size=n_secondary, replace=False)
    succ = grid_successors(width, height)
    space = StateSpace("x", n_cells)
    acts = ActionSet("x_moves", GRID_ACTIONS, null_action=GRID_ACTIONS.index("stay"))
    base = operator_from_successors(space, acts, {"normal": succ,
                                                  "defective": identity_successors(n_cells, len(GRID_ACTIONS))})
    spaces, goals = [], []
    for i, c in enumerate(cells):
        sid = f"y{i}"
        spaces.append(make_chain_space(size, space_id=sid))
        goals.append(Goal(f"g{i}", AvailabilityFn.at_states(f"g{i}", [int(c)], len(GRID_ACTIONS), horizon),
                          {sid: 1}))
    ids = [s.space.id for s in spaces]
    zeta = ModeFunction(ids, {sid: [0] for sid in ids})
    ont = Ontology(base, spaces, goals, zeta, horizon)
    start = State(tuple(size - 1 for _ in ids), n_cells // 2, 0)
    return ont, start


def run_spa_pipeline(ont: Ontology, start: State, M: int, n: int) -> dict:
    """All STFFs, BFS to depth M, and task-space empowerment of every leaf."""
    ont.aggregate.solve_all(ont.zeta.labels())
    tree = bfs_plan_search(ont, start, M)
    report = select_best_plan(tree, ont, n, "task")
    return {"leaves": len(tree.leaves), "best": report.best.policies, "valence": report.best.valence}


def _time_spa(ont, start, M, n) -> tuple[float, dict]:
    t0 = time.perf_counter()
    out = run_spa_pipeline(ont, start, M, n)
    return time.perf_counter() - t0, out


def _time_ihdr(ont) -> tuple[float, str]:
    dims = [op.n_states for op in ont.spaces] + [ont.base.n_states]
    n = int(np.prod(dims))
    need = product_bytes_estimate(n, ont.base.n_actions)
    if need > guard_bytes():
        return float("nan"), f"exceeded:{need}"
    t0 = time.perf_counter()
    prod = compose_product_operator(ont, guard=10**12)
    res = ihdr_value_iteration(IhdrProblem(prod, default_reward(ont, prod)))
    status = "ok" if res.converged else "max_iterations"
    return time.perf_counter() - t0, status


def scaling_benchmark(counts=range(1, 5), trials: int = 1, seed: int = 0, M: int = 2, n: int = 3,
                      size: int = 13, width: int = 3, height: int = 3, methods=("ihdr", "spa")) -> list[dict]:
    """Timing rows for IHDR and the factorized planner as secondary spaces are added."""
    rows = []
    horizon = math.ceil(12 * math.sqrt(width * height))
    for trial in range(trials):
        for k in counts:
            trial_seed = seed + 1000 * trial + k
            ont, start = benchmark_ontology(width, height, k, size, horizon, np.random.default_rng(trial_seed))
            if "ihdr" in methods:
                secs, status = _time_ihdr(ont)
                rows.append(dict(method="ihdr", num_secondary=k, N=width * height, M=M, n=n, trial=trial,
                                 seed=trial_seed, seconds=secs, status=status))
            if "spa" in methods:
                ont, start = benchmark_ontology(width, height, k, size, horizon, np.random.default_rng(trial_seed))
                secs, _ = _time_spa(ont, start, M, n)
                rows.append(dict(method="spa", num_secondary=k, N=width * height, M=M, n=n, trial=trial,
                                 seed=trial_seed, seconds=secs, status="ok"))
    return rows


def large_grid_benchmark(Ns=(25, 100), niss: int = 2, M: int = 3, n: int = 2, trials: int = 1,
                         seed: int = 0) -> list[dict]:
    """Factorized planner timings with grid and chains both of size N and T_f = ceil(12 sqrt N)."""
    rows = []
    for trial in range(trials):
        for N in Ns:
            side = int(round(math.sqrt(N)))
            if side * side != N:
                raise DomainError(f"N = {N} is not a perfect square")
            horizon = math.ceil(12 * math.sqrt(N))
            trial_seed = seed + 1000 * trial + N
            dims_bytes = product_bytes_estimate(N, len(GRID_ACTIONS)) * (horizon + 1) * 2 * niss
            if dims_bytes > guard_bytes():
                rows.append(dict(method="spa", num_secondary=niss, N=N, M=M, n=n, trial=trial, seed=trial_seed,
                                 seconds=float("nan"), status=f"exceeded:{dims_bytes}"))
                continue
            ont, start = benchmark_ontology(side, side, niss, N, horizon, np.random.default_rng(trial_seed))
            secs, _ = _time_spa(ont, start, M, n)
            rows.append(dict(method="spa", num_secondary=niss, N=N, M=M, n=n, trial=trial, seed=trial_seed,
                             seconds=secs, status="ok"))
    return rows


BENCH_COLUMNS = ("method", "num_secondary", "N", "M", "n", "trial", "seed", "seconds", "status")


def write_benchmark_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6f}" if k == "seconds" else r[k]) for k in BENCH_COLUMNS})

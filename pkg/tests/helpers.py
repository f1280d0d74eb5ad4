"""Random instance generators and brute-force reference computations."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from spa.core import (
    GRID_ACTIONS,
    ActionSet,
    AvailabilityFn,
    StateSpace,
    TgMdp,
    TransitionOperator,
    grid_successors,
    identity_successors,
    make_chain_space,
    operator_from_successors,
)
from spa.hierarchy import Goal, ModeFunction, Ontology, State


def random_stochastic_operator(rng, n, n_actions, max_support=3, deterministic=False):
    space = StateSpace("x", n)
    acts = ActionSet("a", tuple(f"a{i}" for i in range(n_actions)), 0)
    mats = []
    for _ in range(n_actions):
        m = np.zeros((n, n))
        for x in range(n):
            k = 1 if deterministic else int(rng.integers(1, max_support + 1))
            cols = rng.choice(n, size=min(k, n), replace=False)
            w = rng.random(len(cols)) + 0.1
            m[x, cols] = w / w.sum()
        mats.append(m)
    return TransitionOperator(space, acts, {"normal": mats})


def random_tgmdp(rng, max_states=12, max_horizon=15, deterministic=False, binary_f=False):
    n = int(rng.integers(2, max_states + 1))
    n_a = int(rng.integers(1, 4))
    T = int(rng.integers(0, max_horizon + 1))
    op = random_stochastic_operator(rng, n, n_a, deterministic=deterministic)
    f = np.zeros((n, n_a, T + 1))
    mask = rng.random(f.shape) < 0.15
    f[mask] = 1.0 if binary_f else rng.random(mask.sum())
    return TgMdp(op, f, T)


def dense_kappa(problem: TgMdp) -> np.ndarray:
    """kappa(x,t) = max_a [f + (1-f) * sum_x' P kappa(x', t+1)] by explicit loops."""
    n, n_a, T = problem.n_states, problem.n_actions, problem.horizon
    f = problem.availability
    P = [[problem.matrix(a, t).toarray() for a in range(n_a)] for t in range(T + 1)]
    k = np.zeros((n, T + 2))
    for t in range(T, -1, -1):
        for x in range(n):
            best = 0.0
            for a in range(n_a):
                cont = P[t][a][x] @ k[:, t + 1] if t < T else 0.0
                best = max(best, f[x, a, t] + (1 - f[x, a, t]) * cont)
            k[x, t] = best
    return k[:, :T + 1]


def grid_operator(width, height, slip=0.0, walls=()):
    """Grid base with modes normal/defective; ``slip`` moves mass to 'stay'."""
    n = width * height
    det = grid_successors(width, height, walls)
    stay = GRID_ACTIONS.index("stay")
    space = StateSpace("x", n)
    acts = ActionSet("moves", GRID_ACTIONS, stay)
    if slip == 0.0:
        return operator_from_successors(space, acts, {"normal": det,
                                                      "defective": identity_successors(n, len(GRID_ACTIONS))})
    mats = []
    for a in range(len(GRID_ACTIONS)):
        m = np.zeros((n, n))
        m[np.arange(n), det[:, a]] += 1 - slip
        m[np.arange(n), np.arange(n)] += slip
        mats.append(m)
    ident = [sp.identity(n, format="csr") for _ in GRID_ACTIONS]
    return TransitionOperator(space, acts, {"normal": mats, "defective": ident})


def random_ontology(rng, slip=0.0, single_goal=True, max_side=4, max_chains=2, max_chain=5, max_T=20,
                    n_goals=None):
    w, h = int(rng.integers(1, max_side + 1)), int(rng.integers(2, max_side + 1))
    n = w * h
    T = int(rng.integers(4, max_T + 1))
    base = grid_operator(w, h, slip)
    k = int(rng.integers(1, max_chains + 1))
    chains = [make_chain_space(int(rng.integers(3, max_chain + 1)), space_id=f"y{i}") for i in range(k)]
    ng = 1 if single_goal else (n_goals or int(rng.integers(1, 4)))
    goals = []
    for g in range(ng):
        cells = rng.choice(n, size=int(rng.integers(1, min(3, n) + 1)), replace=False)
        fn = AvailabilityFn.at_states(f"g{g}", [int(c) for c in cells], len(GRID_ACTIONS), T,
                                      actions=[GRID_ACTIONS.index("stay")])
        goals.append(Goal(f"g{g}", fn, {f"y{int(rng.integers(k))}": 1}))
    ids = [c.space.id for c in chains]
    zeta = ModeFunction(ids, {i: [0] for i in ids})
    ont = Ontology(base, chains, goals, zeta, T)
    return ont


def random_start(rng, ont, t=None):
    r = tuple(int(rng.integers(1, op.n_states)) for op in ont.spaces)
    return State(r, int(rng.integers(ont.base.n_states)), 0 if t is None else t)


def random_bog_ontology(rng, max_side=3, max_T=14):
    """Grid, one energy chain with a refill goal, and one random 2-3 bit ordered task."""
    from spa.hierarchy import BogTask, bog_goal_effects, build_bog_operator

    w, h = int(rng.integers(2, max_side + 1)), int(rng.integers(2, max_side + 1))
    n = w * h
    T = int(rng.integers(4, max_T + 1))
    bits = int(rng.integers(2, 4))
    pairs = [(i, j) for i in range(bits) for j in range(bits) if i != j]
    k = int(rng.integers(0, len(pairs) + 1))
    prec = frozenset(pairs[i] for i in rng.choice(len(pairs), size=k, replace=False))
    names = {i: f"b{i}" for i in range(bits)}
    task = BogTask(bits, frozenset({"1" * bits}), prec, names, id="task")
    chain = make_chain_space(int(rng.integers(4, 9)), space_id="y")
    stay = [GRID_ACTIONS.index("stay")]
    effects = bog_goal_effects(task)
    cells = [int(c) for c in rng.choice(n, size=bits + 1, replace=False)]
    goals = [Goal("refill", AvailabilityFn.at_states("refill", [cells[-1]], len(GRID_ACTIONS), T,
                                                     actions=stay), {"y": 1})]
    for i, g in names.items():
        cell = cells[i]
        goals.append(Goal(g, AvailabilityFn.at_states(g, [cell], len(GRID_ACTIONS), T, actions=stay), effects[g]))
    zeta = ModeFunction(["y", "task"], {"y": [0]})
    ont = Ontology(grid_operator(w, h), [chain, build_bog_operator(task)], goals, zeta, T)
    start = State((int(rng.integers(2, chain.n_states)), 0), int(rng.integers(n)), 0)
    return ont, task, start

"""n-step empowerment.

Deterministic operators use exact reachable-set counting. Stochastic channels
use Blahut-Arimoto. Semi-Markov (task-space) empowerment counts the distinct
full states reached after exactly n goal-conditioned policies, so there n
counts policies, not primitive steps.
"""

from __future__ import annotations

import csv
import itertools
from typing import Callable, Hashable, Iterable

import numpy as np

from .core import CapacityError, DomainError, TransitionOperator
from .hierarchy import (
    Ontology,
    ProductOperator,
    State,
    UnsupportedConfiguration,
    goal_operator_step,
    policy_feasible,
    product_step,
)

BA_ROW_GUARD = 10**4
BA_TOL = 1e-6
BA_MAX_ITER = 10**4


def _check_n(n: int) -> None:
    if n < 1:
        raise DomainError("empowerment horizon n must be >= 1")


def reachable_after(step: Callable[[Hashable], Iterable[Hashable]], start: Hashable, n: int) -> set:
    """Distinct states after exactly n applications of a set-valued step."""
    level = {start}
    for _ in range(n):
        nxt = set()
        for s in level:
            nxt.update(step(s))
        level = nxt
    return level


def _bits(count: int) -> float:
    return float(np.log2(count)) if count > 0 else 0.0


# ------------------------------------------------------------------ flat


def reachable_flat(op: TransitionOperator, start: int, n: int, t: int = 0,
                   mode: str | None = None, horizon: int | None = None) -> set:
    """Reachable (x, t) pairs after n uniform-action steps; branches stop at ``horizon``."""
    if not op.deterministic:
        raise DomainError("reachable-set counting needs a deterministic operator")

    def step(st):
        x, tt = st
        if horizon is not None and tt >= horizon:
            return [st]
        succ = op.successors(tt, mode)
        return [(int(y), tt + 1) for y in set(succ[x].tolist())]

    return reachable_after(step, (start, t), n)


def empowerment_deterministic(op: TransitionOperator, start: int, n: int, t: int = 0,
                              mode: str | None = None, horizon: int | None = None) -> float:
    """log2 of the number of state-times reachable in n steps."""
    _check_n(n)
    if not op.deterministic:
        return empowerment_stochastic(op, start, n, t, mode)
    return _bits(len(reachable_flat(op, start, n, t, mode, horizon)))


def empowerment_map(op: TransitionOperator, n: int, t: int = 0, mode: str | None = None) -> np.ndarray:
    """Per-state deterministic empowerment (bits)."""
    _check_n(n)
    if not op.deterministic:
        raise DomainError("empowerment maps need a deterministic operator; use empowerment_blahut_arimoto "
                          f"on small channels (<= {BA_ROW_GUARD} rows)")
    return np.array([empowerment_deterministic(op, x, n, t, mode) for x in range(op.n_states)])


def write_empmap_csv(values: np.ndarray, width: int, height: int, path) -> None:
    grid = np.asarray(values).reshape(height, width)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in grid:
            w.writerow([f"{v:.6f}" for v in row])


# ------------------------------------------------------------ Blahut-Arimoto


def empowerment_blahut_arimoto(channel: np.ndarray, tol: float = BA_TOL, max_iter: int = BA_MAX_ITER) -> float:
    """Capacity in bits of p(y | input) given as a row-stochastic (inputs x outputs) array."""
    p = np.asarray(channel, dtype=np.float64)
    if p.ndim != 2:
        raise DomainError("channel must be a 2-D array")
    if p.shape[0] > BA_ROW_GUARD:
        raise CapacityError(f"channel has {p.shape[0]} rows > {BA_ROW_GUARD}")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise DomainError("channel rows must sum to 1")
    m = p.shape[0]
    q = np.full(m, 1.0 / m)
    logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
    lower = 0.0
    for _ in range(max_iter):
        r = q @ p
        logr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
        d = np.sum(p * (logp - logr), axis=1)
        c = q * np.exp(d)
        lower = float(np.log(c.sum()))
        upper = float(d.max())
        if upper - lower < tol * np.log(2) / 10:
            break
        q = c / c.sum()
    return max(lower, 0.0) / np.log(2)


def channel_from_operator(op: TransitionOperator, start: int, n: int, t: int = 0,
                          mode: str | None = None) -> np.ndarray:
    """p(x_{t+n} | a_1..a_n) with one row per action sequence."""
    rows = op.n_actions ** n
    if rows > BA_ROW_GUARD:
        raise CapacityError(f"|A|^n = {rows} > {BA_ROW_GUARD}")
    out = np.zeros((rows, op.n_states))
    for k, seq in enumerate(itertools.product(range(op.n_actions), repeat=n)):
        v = np.zeros(op.n_states)
        v[start] = 1.0
        for i, a in enumerate(seq):
            v = op.matrix(a, t + i, mode).T @ v
        out[k] = v
    return out


def empowerment_stochastic(op: TransitionOperator, start: int, n: int, t: int = 0,
                           mode: str | None = None) -> float:
    _check_n(n)
    return empowerment_blahut_arimoto(channel_from_operator(op, start, n, t, mode))


# ---------------------------------------------------------- product spaces


def _project(ont: Ontology, s: State, space: str | None):
    if space is None:
        return s
    if space == "x":
        return s.x
    return s.r[ont.space_index(space)]


def reachable_product(ont: Ontology, s: State, n: int) -> set:
    """Full states reachable by n primitive base actions through the hierarchical operator."""

    def step(st):
        out = []
        for a in range(ont.base.n_actions):
            res = product_step(ont, st, a)
            if len(res) != 1:
                raise UnsupportedConfiguration("product operator is not deterministic here")
            out.append(res[0][0])
        return out

    return reachable_after(step, s, n)


def empowerment_product(ont: Ontology, s: State, n: int, space: str | None = None) -> float:
    """Empowerment of the primitive hierarchical operator, optionally marginal on one space."""
    _check_n(n)
    if space is not None and space != "x":
        ont.space_index(space)
    reach = reachable_product(ont, s, n)
    return _bits(len({_project(ont, st, space) for st in reach}))


def empowerment_marginal(model, start, n: int, space: str) -> float:
    """Marginal empowerment on ``space`` ("x" or a secondary id).

    ``model`` is an Ontology (start is a State) or an explicit ProductOperator
    (start is (r, x, t)).
    """
    _check_n(n)
    if isinstance(model, Ontology):
        return empowerment_product(model, start, n, space)
    if isinstance(model, ProductOperator):
        r, x, t = start
        if space == "x":
            k = len(model.dims) - 1
        elif space in model.space_ids:
            k = model.space_ids.index(space)
        else:
            raise DomainError(f"unknown space {space!r}")
        reach = reachable_flat(model.op, model.index(r, x), n, t)
        return _bits(len({np.unravel_index(i, model.dims)[k] for i, _ in reach}))
    raise DomainError("unsupported model type for marginal empowerment")


# --------------------------------------------------------- semi-Markov level


def policy_successors(ont: Ontology, s: State) -> list[State]:
    """Deterministic successor per feasible policy; a state with none maps to itself."""
    out = []
    for g in ont.policies:
        if not policy_feasible(ont, s, g):
            continue
        res = goal_operator_step(ont, s, g)
        if len(res) != 1:
            raise UnsupportedConfiguration("goal operator is not deterministic; factorized empowerment needs determinism")
        out.append(res[0].state)
    return out or [s]


def empowerment_factorized(ont: Ontology, s: State, n: int) -> float:
    """log2 of the number of distinct full states after exactly n policies."""
    _check_n(n)
    ont.check_state(s)
    return _bits(len(reachable_after(lambda st: policy_successors(ont, st), s, n)))


def empowerment(ont: Ontology, s: State, n: int, variant: str = "task") -> float:
    """Dispatch by variant: "task", "full" or "marginal:<space>"."""
    if variant == "task":
        return empowerment_factorized(ont, s, n)
    if variant == "full":
        return empowerment_product(ont, s, n)
    if variant.startswith("marginal:"):
        return empowerment_product(ont, s, n, variant.split(":", 1)[1])
    raise DomainError(f"unknown empowerment variant {variant!r}")

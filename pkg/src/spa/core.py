"""Discrete state spaces, actions, transition operators and availability functions.

States, actions and times are dense integer indices. Labels are metadata only.
Transition operators are stored as one sparse row-stochastic matrix per
(mode, action), optionally per time step for non-stationary dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

ROW_TOL = 1e-12

GRID_ACTIONS = ("up", "down", "left", "right", "stay")
_GRID_DELTAS = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1), "stay": (0, 0)}


class DomainError(ValueError):
    """Input lies outside an operation's domain."""


class CapacityError(RuntimeError):
    """A size guard was exceeded."""


@dataclass(frozen=True)
class StateSpace:
    id: str
    size: int
    labels: tuple[str, ...] | None = None
    defective: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.size < 1:
            raise DomainError(f"space {self.id}: size must be >= 1")
        if any(d < 0 or d >= self.size for d in self.defective):
            raise DomainError(f"space {self.id}: defective index out of range")
        if self.labels is not None and len(self.labels) != self.size:
            raise DomainError(f"space {self.id}: labels length != size")


@dataclass(frozen=True)
class ActionSet:
    id: str
    actions: tuple[str, ...]
    null_action: int | None = None

    def __post_init__(self):
        if not self.actions:
            raise DomainError(f"action set {self.id}: empty")
        if self.null_action is not None and not 0 <= self.null_action < len(self.actions):
            raise DomainError(f"action set {self.id}: null_action out of range")

    def __len__(self) -> int:
        return len(self.actions)

    def index(self, name: str) -> int:
        return self.actions.index(name)


def _as_csr(m, n: int) -> sp.csr_matrix:
    if sp.issparse(m):
        out = sp.csr_matrix(m, dtype=np.float64)
    else:
        out = sp.csr_matrix(np.asarray(m, dtype=np.float64))
    if out.shape != (n, n):
        raise DomainError(f"matrix shape {out.shape} != ({n}, {n})")
    out.eliminate_zeros()
    return out


class TransitionOperator:
    """P(x'|x,a,t,e) as sparse matrices.

    ``mats[mode]`` is either a list of per-action matrices (stationary) or a
    list over t of such lists (time-indexed, length horizon+1).
    """

    def __init__(
        self,
        space: StateSpace,
        actions: ActionSet,
        mats: Mapping[str, Sequence],
        horizon: int | None = None,
        deterministic: bool | None = None,
    ):
        self.space = space
        self.actions = actions
        self.horizon = horizon
        self.modes = tuple(mats.keys())
        n = space.size
        self._mats: dict[str, list] = {}
        for mode, per in mats.items():
            if horizon is None:
                if len(per) != len(actions):
                    raise DomainError(f"mode {mode}: expected {len(actions)} action matrices")
                self._mats[mode] = [_as_csr(m, n) for m in per]
            else:
                if len(per) != horizon + 1:
                    raise DomainError(f"mode {mode}: expected {horizon + 1} time slices")
                self._mats[mode] = [[_as_csr(m, n) for m in slc] for slc in per]
        self._succ_cache: dict = {}
        if deterministic is None:
            deterministic = all(_is_point_mass(m) for m in self._all_matrices())
        self.deterministic = deterministic

    @property
    def stationary(self) -> bool:
        return self.horizon is None

    @property
    def n_states(self) -> int:
        return self.space.size

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def _all_matrices(self):
        for per in self._mats.values():
            if self.horizon is None:
                yield from per
            else:
                for slc in per:
                    yield from slc

    def _mode(self, mode: str | None) -> str:
        if mode is None:
            if len(self.modes) != 1:
                raise DomainError("mode required for a multi-mode operator")
            return self.modes[0]
        if mode not in self._mats:
            raise DomainError(f"unknown mode {mode!r}")
        return mode

    def matrix(self, a: int, t: int = 0, mode: str | None = None) -> sp.csr_matrix:
        per = self._mats[self._mode(mode)]
        if self.horizon is None:
            return per[a]
        return per[min(t, self.horizon)][a]

    def row(self, x: int, a: int, t: int = 0, mode: str | None = None) -> np.ndarray:
        return self.matrix(a, t, mode).getrow(x).toarray().ravel()

    def successors(self, t: int = 0, mode: str | None = None) -> np.ndarray:
        """Integer table succ[x, a] for deterministic operators."""
        if not self.deterministic:
            raise DomainError("successors() requires a deterministic operator")
        key = (self._mode(mode), None if self.horizon is None else min(t, self.horizon))
        if key not in self._succ_cache:
            cols = []
            for a in range(self.n_actions):
                m = self.matrix(a, t, mode)
                cols.append(m.indices[m.indptr[:-1]])
            self._succ_cache[key] = np.stack(cols, axis=1)
        return self._succ_cache[key]

    def restrict(self, mode: str) -> "TransitionOperator":
        """Single-mode view."""
        return TransitionOperator(self.space, self.actions, {mode: self._mats[self._mode(mode)]},
                                  self.horizon, self.deterministic)

    def null_matrix(self, mode: str | None = None) -> sp.csr_matrix:
        if self.actions.null_action is None:
            raise DomainError(f"operator on {self.space.id} has no null action")
        return self.matrix(self.actions.null_action, 0, mode)


def _is_point_mass(m: sp.csr_matrix) -> bool:
    counts = np.diff(m.indptr)
    return bool(np.all(counts == 1) and np.allclose(m.data, 1.0, atol=ROW_TOL, rtol=0))


def validate_operator(op: TransitionOperator) -> list[str]:
    """Return a list of violations; empty means row-stochastic and flag-consistent."""
    out: list[str] = []
    for mode, per in op._mats.items():
        slices = [(None, per)] if op.horizon is None else list(enumerate(per))
        for t, mats in slices:
            for a, m in enumerate(mats):
                sums = np.asarray(m.sum(axis=1)).ravel()
                for x in np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL):
                    out.append(f"mode {mode} t {t} a {a} x {x}: row sum {sums[x]:.12g}")
                if np.any(m.data < 0):
                    out.append(f"mode {mode} t {t} a {a}: negative probability")
                if op.deterministic and not _is_point_mass(m):
                    out.append(f"mode {mode} t {t} a {a}: non-deterministic row")
    return out


def operator_from_successors(space: StateSpace, actions: ActionSet, succ_by_mode: Mapping[str, np.ndarray]) -> TransitionOperator:
    """Deterministic stationary operator from succ[x, a] tables per mode."""
    n = space.size
    mats = {}
    for mode, succ in succ_by_mode.items():
        succ = np.asarray(succ, dtype=np.int64)
        mats[mode] = [sp.csr_matrix((np.ones(n), (np.arange(n), succ[:, a])), shape=(n, n))
                      for a in range(len(actions))]
    return TransitionOperator(space, actions, mats, deterministic=True)


def identity_successors(n_states: int, n_actions: int) -> np.ndarray:
    return np.repeat(np.arange(n_states)[:, None], n_actions, axis=1)


def grid_successors(width: int, height: int, walls: Iterable[tuple[int, int]] = (),
                    moves: Sequence[str] = GRID_ACTIONS, blocked_edges: Iterable = ()) -> np.ndarray:
    """succ[x, a] for a grid; cells are (row, col), index row*width + col.

    ``blocked_edges`` holds unordered pairs of cells that may not be crossed.
    """
    if width < 1 or height < 1:
        raise DomainError("grid width and height must be >= 1")
    wall_set = set()
    for r, c in walls:
        if not (0 <= r < height and 0 <= c < width):
            raise DomainError(f"wall cell {(r, c)} out of bounds")
        wall_set.add((r, c))
    blocked = {frozenset(map(tuple, e)) for e in blocked_edges}
    n = width * height
    succ = np.zeros((n, len(moves)), dtype=np.int64)
    for r in range(height):
        for c in range(width):
            x = r * width + c
            for a, name in enumerate(moves):
                dr, dc = _GRID_DELTAS[name]
                nr, nc = r + dr, c + dc
                ok = (0 <= nr < height and 0 <= nc < width and (nr, nc) not in wall_set
                      and (r, c) not in wall_set and frozenset(((r, c), (nr, nc))) not in blocked)
                succ[x, a] = nr * width + nc if ok else x
    return succ


def make_gridworld(width: int, height: int, walls: Iterable[tuple[int, int]] = (),
                   moves: Sequence[str] = GRID_ACTIONS, space_id: str = "x") -> TransitionOperator:
    """Deterministic stationary grid operator; blocked moves are self-loops."""
    succ = grid_successors(width, height, walls, moves)
    space = StateSpace(space_id, width * height,
                       labels=tuple(f"({r},{c})" for r in range(height) for c in range(width)))
    acts = ActionSet(f"{space_id}_moves", tuple(moves),
                     null_action=list(moves).index("stay") if "stay" in moves else None)
    return operator_from_successors(space, acts, {"normal": succ})


def chain_successors(size: int, top_jump_action: bool = True, null_decrement: bool = True) -> np.ndarray:
    """succ[y, a] with a=0 null (decrement, floor absorbing) and a=1 jump to top."""
    if size < 2:
        raise DomainError("chain size must be >= 2")
    idx = np.arange(size)
    null = np.maximum(idx - 1, 0) if null_decrement else idx
    top = np.full(size, size - 1) if top_jump_action else idx
    return np.stack([null, top], axis=1)


def make_chain_space(size: int, top_jump_action: bool = True, null_decrement: bool = True,
                     space_id: str = "y", defective: Iterable[int] = (0,)) -> TransitionOperator:
    """Physiological chain: active action jumps to y_max, null action descends to y_0."""
    succ = chain_successors(size, top_jump_action, null_decrement)
    space = StateSpace(space_id, size, defective=frozenset(defective))
    acts = ActionSet(f"{space_id}_actions", ("null", "active"), null_action=0)
    return operator_from_successors(space, acts, {"normal": succ})


@dataclass(frozen=True)
class AvailabilityFn:
    """f_g(x, a, t): sparse entries, absent entries are 0."""

    goal_id: str
    entries: Mapping[tuple[int, int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.entries.items():
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"availability {self.goal_id}{k} = {v} outside [0,1]")

    def dense(self, n_states: int, n_actions: int, horizon: int) -> np.ndarray:
        out = np.zeros((n_states, n_actions, horizon + 1))
        for (x, a, t), p in self.entries.items():
            if t <= horizon:
                out[x, a, t] = p
        return out

    @classmethod
    def at_states(cls, goal_id: str, states: Iterable[int], n_actions: int, horizon: int,
                  window: tuple[int, int] | None = None, p: float = 1.0,
                  actions: Iterable[int] | None = None) -> "AvailabilityFn":
        lo, hi = window if window is not None else (0, horizon)
        acts = range(n_actions) if actions is None else list(actions)
        entries = {(x, a, t): p for x in states for a in acts for t in range(lo, min(hi, horizon) + 1)}
        return cls(goal_id, entries)


@dataclass(frozen=True)
class ActionAvailabilityFn:
    """F(alpha|x,a,t) over goal alphabet; absent mass goes to the null goal.

    ``goals`` maps goal id to its availability function. Probabilities of
    distinct goals at one (x,a,t) must sum to at most 1.
    """

    goals: Mapping[str, AvailabilityFn]
    homogeneous: bool = False

    def __post_init__(self):
        if self.homogeneous and len(self.goals) != 1:
            raise DomainError("homogeneous F must have exactly one non-null goal")
        totals: dict = {}
        for f in self.goals.values():
            for k, v in f.entries.items():
                totals[k] = totals.get(k, 0.0) + v
        bad = [k for k, v in totals.items() if v > 1.0 + ROW_TOL]
        if bad:
            raise DomainError(f"goal probabilities exceed 1 at {bad[:3]}")

    def restrict(self, goal_id: str) -> "ActionAvailabilityFn":
        return ActionAvailabilityFn({goal_id: self.goals[goal_id]}, homogeneous=True)

    def pmf(self, x: int, a: int, t: int) -> dict[str | None, float]:
        out: dict[str | None, float] = {}
        for g, f in self.goals.items():
            p = f.entries.get((x, a, t), 0.0)
            if p > 0:
                out[g] = p
        rest = 1.0 - sum(out.values())
        if rest > ROW_TOL:
            out[None] = rest
        return out


@dataclass
class TgMdp:
    """Flat temporal-goal MDP: single-mode dynamics plus a dense availability table."""

    transition: TransitionOperator
    availability: np.ndarray
    horizon: int
    mode: str | None = None
    goal_id: str = "g"

    def __post_init__(self):
        f = np.asarray(self.availability, dtype=np.float64)
        exp = (self.transition.n_states, self.transition.n_actions, self.horizon + 1)
        if f.shape != exp:
            raise DomainError(f"availability shape {f.shape} != {exp}")
        if np.any(f < 0) or np.any(f > 1):
            raise DomainError("availability values outside [0,1]")
        self.availability = f
        if self.horizon < 0:
            raise DomainError("horizon must be >= 0")

    @property
    def n_states(self) -> int:
        return self.transition.n_states

    @property
    def n_actions(self) -> int:
        return self.transition.n_actions

    def matrix(self, a: int, t: int) -> sp.csr_matrix:
        return self.transition.matrix(a, t, self.mode)

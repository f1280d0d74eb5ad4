"""Hierarchical TG-CMDPs: product composition, prediction operators, hitting
times, the constrained aggregate STFF, the goal operator, BOG task spaces and
sublimation.

A full state is ``(r, x, t)`` where ``r`` is a tuple with one index per
secondary space (physiological chains, environment objects and BOG task
spaces alike) and ``x`` is the base state. Secondary operators are
deterministic and stationary with action 0 as the null action.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    ActionAvailabilityFn,
    ActionSet,
    AvailabilityFn,
    CapacityError,
    DomainError,
    StateSpace,
    TgMdp,
    TransitionOperator,
    operator_from_successors,
)
from .feasibility import FeasibilitySolution, feasibility_iteration

ORACLE_GUARD = 10**6
BOG_MAX_BITS = 20


class UnsupportedConfiguration(DomainError):
    """Configuration outside the factorization's assumptions."""


class State(NamedTuple):
    r: tuple
    x: int
    t: int


@dataclass(frozen=True)
class Goal:
    """A base-level goal and the secondary actions it induces on success."""

    id: str
    availability: AvailabilityFn
    effects: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class SecondOrderRule:
    """Induced action on other spaces when ``space`` enters an accepting state."""

    space: str
    accepting: frozenset
    effects: Mapping[str, int]


# ---------------------------------------------------------------- mode function


class ModeFunction:
    """zeta: r -> mode label.

    Any component in its space's defective set gives ``defective_mode``.
    Otherwise each table space contributes a label (joined by "+"), or
    ``default`` when there are no tables.
    """

    def __init__(self, space_ids: Sequence[str], defective: Mapping[str, Iterable[int]] | None = None,
                 tables: Mapping[str, Mapping[int, str]] | None = None,
                 default: str = "normal", defective_mode: str = "defective"):
        self.space_ids = tuple(space_ids)
        self.defective = {s: frozenset((defective or {}).get(s, ())) for s in self.space_ids}
        self.tables = {s: dict(v) for s, v in (tables or {}).items()}
        for s in list(defective or {}) + list(self.tables):
            if s not in self.space_ids:
                raise DomainError(f"mode function references unknown space {s!r}")
        self.default = default
        self.defective_mode = defective_mode
        self._pos = {s: i for i, s in enumerate(self.space_ids)}

    @property
    def element_invariant(self) -> bool:
        """Defectiveness depends only on per-space membership, so it always is."""
        return True

    def is_defective(self, r: Sequence[int]) -> bool:
        return any(r[self._pos[s]] in d for s, d in self.defective.items() if d)

    def __call__(self, r: Sequence[int]) -> str:
        if self.is_defective(r):
            return self.defective_mode
        if not self.tables:
            return self.default
        return "+".join(self.tables[s][r[self._pos[s]]] for s in self.tables)

    def labels(self) -> list[str]:
        out = [self.defective_mode]
        if not self.tables:
            return out + [self.default]
        combos = [""]
        for s in self.tables:
            combos = [f"{c}+{v}" if c else v for c in combos for v in sorted(set(self.tables[s].values()))]
        return out + combos


# ---------------------------------------------------------- prediction operator


class PredictionOperator:
    """omega(y_f | y, t_d): powers of the null-action matrix, cached by iteration."""

    def __init__(self, op: TransitionOperator, max_t_d: int):
        if op.actions.null_action is None:
            raise DomainError(f"space {op.space.id} has no null action")
        self.space = op.space.id
        self.n = op.n_states
        self.max_t_d = max_t_d
        self._null = op.null_matrix()
        self.static = (self._null != sp.identity(self.n, format="csr")).nnz == 0
        self._powers = [sp.identity(self.n, format="csr")]
        self._det = op.deterministic
        if self._det:
            step = self._null.indices[self._null.indptr[:-1]]
            self._idx = [np.arange(self.n)]
            self._step = step

    def matrix(self, t_d: int) -> sp.csr_matrix:
        if t_d < 0:
            raise DomainError("t_d must be >= 0")
        if self.static:
            return self._powers[0]
        while len(self._powers) <= t_d:
            self._powers.append(sp.csr_matrix(self._powers[-1] @ self._null))
        return self._powers[t_d]

    def dist(self, y: int, t_d: int) -> np.ndarray:
        return self.matrix(t_d).getrow(y).toarray().ravel()

    def index(self, y: int, t_d: int) -> int:
        """Deterministic successor after t_d null steps."""
        if not self._det:
            raise DomainError("index() needs deterministic null dynamics")
        if self.static or t_d == 0:
            return y
        while len(self._idx) <= t_d:
            self._idx.append(self._step[self._idx[-1]])
        return int(self._idx[t_d][y])


def build_prediction_operator(op: TransitionOperator, max_t_d: int) -> PredictionOperator:
    return PredictionOperator(op, max_t_d)


# ---------------------------------------------------------------- hitting times


def hitting_times(op: TransitionOperator, defective: Iterable[int]) -> np.ndarray:
    """Expected first-hit time of the defective set under null dynamics.

    Defective states get 0; states with positive probability of never
    arriving get +inf.
    """
    d = sorted(set(defective))
    n = op.n_states
    out = np.full(n, np.inf)
    if not d:
        return out
    out[d] = 0.0
    null = op.null_matrix()
    if op.deterministic:
        step = null.indices[null.indptr[:-1]]
        status = np.zeros(n, dtype=np.int8)
        status[d] = 2
        for y in range(n):
            path, cur = [], y
            while status[cur] == 0:
                status[cur] = 1
                path.append(cur)
                cur = int(step[cur])
            base = out[cur] if status[cur] == 2 else np.inf
            for k, yy in enumerate(reversed(path)):
                out[yy] = base + k + 1
                status[yy] = 2
        return out
    dset = set(d)
    nd = [y for y in range(n) if y not in dset]
    # states that can reach D in the transition graph
    rev = sp.csr_matrix(null.T)
    can = np.zeros(n, dtype=bool)
    can[d] = True
    frontier = list(d)
    while frontier:
        nxt = []
        for y in frontier:
            for p in rev.indices[rev.indptr[y]:rev.indptr[y + 1]]:
                if not can[p]:
                    can[p] = True
                    nxt.append(p)
        frontier = nxt
    bad = ~can
    changed = True
    while changed:
        changed = False
        for y in nd:
            if bad[y]:
                continue
            row = null.indices[null.indptr[y]:null.indptr[y + 1]]
            if bad[row].any():
                bad[y] = True
                changed = True
    good = [y for y in nd if not bad[y]]
    if good:
        q = null[good][:, good].toarray()
        a = np.eye(len(good)) - q
        try:
            sol = np.linalg.solve(a, np.ones(len(good)))
        except np.linalg.LinAlgError as exc:
            raise ArithmeticError(f"singular hitting-time system on {op.space.id}") from exc
        out[good] = sol
    return out


def chain_hitting_times(size: int) -> np.ndarray:
    """Descending chain with floor y_0 defective: t(y_i) = i."""
    return np.arange(size, dtype=np.float64)


# --------------------------------------------------------------- aggregate STFF


class AggregateStff:
    """(mode, goal) -> feasibility solution, solved lazily and cached."""

    def __init__(self, base: TransitionOperator, goals: Mapping[str, Goal], horizon: int):
        self.base = base
        self.goals = dict(goals)
        self.horizon = horizon
        self._cells: dict[tuple[str, str], FeasibilitySolution] = {}
        self._dense: dict[str, np.ndarray] = {}

    def availability(self, goal: str) -> np.ndarray:
        if goal not in self._dense:
            self._dense[goal] = self.goals[goal].availability.dense(
                self.base.n_states, self.base.n_actions, self.horizon)
        return self._dense[goal]

    def cell(self, mode: str, goal: str) -> FeasibilitySolution:
        key = (mode, goal)
        if key not in self._cells:
            if goal not in self.goals:
                raise DomainError(f"unknown goal {goal!r}")
            prob = TgMdp(self.base, self.availability(goal), self.horizon, mode=mode, goal_id=goal)
            self._cells[key] = feasibility_iteration(prob)
        return self._cells[key]

    def solve_all(self, modes: Iterable[str]) -> None:
        for m in modes:
            for g in self.goals:
                self.cell(m, g)

    def constrained_events(self, mode: str, goal: str, x: int, t: int, h: float):
        """Termination events, or None when infeasible under the hitting-time bound."""
        sol = self.cell(mode, goal)
        if t > self.horizon or sol.kappa[x, t] <= 0:
            return None
        ev = sol.stff.events(x, t)
        if any(kind == "success" and tf - t > h for kind, _, tf, _ in ev):
            return None
        return ev


def build_aggregate_stff(base: TransitionOperator, F: ActionAvailabilityFn | Mapping[str, Goal],
                         horizon: int, modes: Iterable[str] | None = None) -> AggregateStff:
    """Solve one TG-MDP per (mode, goal); each goal restriction must be homogeneous."""
    if isinstance(F, ActionAvailabilityFn):
        seen: dict = {}
        for g, f in F.goals.items():
            for k, v in f.entries.items():
                if v > 0 and k in seen and seen[k] != g:
                    raise UnsupportedConfiguration(
                        f"goals {seen[k]!r} and {g!r} share (x,a,t)={k}; restriction is not homogeneous")
                if v > 0:
                    seen[k] = g
        goals = {g: Goal(g, f) for g, f in F.goals.items()}
    else:
        goals = dict(F)
    agg = AggregateStff(base, goals, horizon)
    agg.solve_all(modes if modes is not None else base.modes)
    return agg


# -------------------------------------------------------------------- ontology


class Ontology:
    """Factorized model: base operator, secondary spaces, goals, zeta, omega, hitting times."""

    def __init__(self, base: TransitionOperator, spaces: Sequence[TransitionOperator],
                 goals: Sequence[Goal], zeta: ModeFunction, horizon: int,
                 second_order: Sequence[SecondOrderRule] = (),
                 policies: Sequence[str] | None = None,
                 aggregate: AggregateStff | None = None):
        self.base = base
        self.spaces = list(spaces)
        self.space_ids = tuple(s.space.id for s in self.spaces)
        if len(set(self.space_ids)) != len(self.space_ids):
            raise DomainError("duplicate secondary space ids")
        if tuple(zeta.space_ids) != self.space_ids:
            raise DomainError("zeta space order must match secondary spaces")
        self._pos = {s: i for i, s in enumerate(self.space_ids)}
        for op in self.spaces:
            if not op.deterministic or not op.stationary:
                raise UnsupportedConfiguration(f"secondary space {op.space.id} must be deterministic and stationary")
            if op.actions.null_action != 0:
                raise DomainError(f"secondary space {op.space.id}: action 0 must be null")
        self.goals = {g.id: g for g in goals}
        for g in goals:
            for s, a in g.effects.items():
                if s not in self._pos:
                    raise DomainError(f"goal {g.id} affects unknown space {s!r}")
                if not 0 <= a < self.spaces[self._pos[s]].n_actions:
                    raise DomainError(f"goal {g.id}: action {a} invalid on {s}")
        for rule in second_order:
            if rule.space not in self._pos:
                raise UnsupportedConfiguration(f"second-order rule references {rule.space!r}; only secondary spaces allowed")
            for s in rule.effects:
                if s not in self._pos:
                    raise DomainError(f"second-order rule affects unknown space {s!r}")
        missing = [m for m in zeta.labels() if m not in base.modes]
        if missing:
            raise DomainError(f"base operator lacks modes {missing}")
        self.zeta = zeta
        self.horizon = horizon
        self.second_order = tuple(second_order)
        self.policies = tuple(policies) if policies is not None else tuple(self.goals)
        for p in self.policies:
            if p not in self.goals:
                raise DomainError(f"policy {p!r} has no goal")
        self.aggregate = aggregate if aggregate is not None else AggregateStff(base, self.goals, horizon)
        self.omegas = {op.space.id: PredictionOperator(op, horizon) for op in self.spaces}
        self.hitting = {op.space.id: hitting_times(op, op.space.defective) for op in self.spaces}
        self._succ = [op.successors() for op in self.spaces]

    # -- secondary helpers
    def space_index(self, space: str) -> int:
        if space not in self._pos:
            raise DomainError(f"unknown space {space!r}")
        return self._pos[space]

    def min_hitting(self, r: Sequence[int]) -> float:
        return min((self.hitting[s][r[i]] for i, s in enumerate(self.space_ids)), default=np.inf)

    def predict(self, r: Sequence[int], t_d: int) -> tuple:
        return tuple(self.omegas[s].index(r[i], t_d) for i, s in enumerate(self.space_ids))

    def apply(self, r: Sequence[int], effects: Mapping[str, int] | None) -> tuple:
        """One P_r step with the induced action vector (null where unspecified)."""
        effects = effects or {}
        return tuple(int(self._succ[i][r[i], effects.get(s, 0)]) for i, s in enumerate(self.space_ids))

    def apply_only(self, r: Sequence[int], effects: Mapping[str, int]) -> tuple:
        """Apply actions to listed spaces only; others are left unchanged."""
        out = list(r)
        for s, a in effects.items():
            i = self._pos[s]
            out[i] = int(self._succ[i][r[i], a])
        return tuple(out)

    def second_order_effects(self, r_before: Sequence[int], r_after: Sequence[int]) -> tuple:
        out = tuple(r_after)
        for rule in self.second_order:
            i = self._pos[rule.space]
            if r_before[i] not in rule.accepting and r_after[i] in rule.accepting:
                out = self.apply_only(out, rule.effects)
        return out

    def mode(self, r: Sequence[int]) -> str:
        return self.zeta(r)

    def availability(self, goal: str) -> np.ndarray:
        return self.aggregate.availability(goal)

    def with_policies(self, policies: Sequence[str]) -> "Ontology":
        """Same model with a different policy domain (shares solved cells)."""
        return Ontology(self.base, self.spaces, list(self.goals.values()), self.zeta, self.horizon,
                        self.second_order, policies, self.aggregate)

    def check_state(self, s: State) -> None:
        if len(s.r) != len(self.spaces):
            raise DomainError("state vector length does not match secondary spaces")
        for i, op in enumerate(self.spaces):
            if not 0 <= s.r[i] < op.n_states:
                raise DomainError(f"r[{self.space_ids[i]}] = {s.r[i]} out of range")
        if not 0 <= s.x < self.base.n_states:
            raise DomainError(f"x = {s.x} out of range")
        if s.t < 0:
            raise DomainError("t must be >= 0")


# ------------------------------------------------------------- goal operator


class Outcome(NamedTuple):
    state: State
    p: float
    goal: str | None
    x_f: int
    t_f: int


def policy_feasible(ont: Ontology, s: State, goal: str) -> bool:
    if s.t > ont.horizon:
        return False
    mode = ont.mode(s.r)
    return ont.aggregate.constrained_events(mode, goal, s.x, s.t, ont.min_hitting(s.r)) is not None


def goal_operator_step(ont: Ontology, s: State, goal: str) -> list[Outcome]:
    """Execute one goal-conditioned policy from full state ``s``.

    Successful (or failing) termination at (x_f, t_f) advances every
    secondary space by omega over t_f - t, then one step with the induced
    action vector, and x one step with the policy action at (x_f, t_f).
    A policy infeasible under the current hitting-time bound self-maps with
    the null goal and takes one null step.
    """
    if goal not in ont.policies:
        raise DomainError(f"policy {goal!r} not in the ontology's policy set")
    if s.t > ont.horizon:
        return [Outcome(s, 1.0, None, s.x, s.t)]
    mode = ont.mode(s.r)
    events = ont.aggregate.constrained_events(mode, goal, s.x, s.t, ont.min_hitting(s.r))
    acc: dict[tuple[State, str | None], list] = {}

    def add(state, p, g, xf, tf):
        key = (state, g)
        if key in acc:
            acc[key][0] += p
        else:
            acc[key] = [p, xf, tf]

    if events is None:
        r2 = ont.apply(s.r, None)
        r2 = ont.second_order_effects(s.r, r2)
        null = ont.base.actions.null_action
        a = null if null is not None else int(ont.aggregate.cell(mode, goal).policy[s.x, s.t])
        row = ont.base.matrix(a, s.t, mode)
        for x2, p in zip(row.indices[row.indptr[s.x]:row.indptr[s.x + 1]],
                         row.data[row.indptr[s.x]:row.indptr[s.x + 1]]):
            add(State(r2, int(x2), s.t + 1), float(p), None, s.x, s.t)
    else:
        pol = ont.aggregate.cell(mode, goal).policy
        eff = ont.goals[goal].effects
        for kind, xf, tf, p in events:
            r_f = ont.predict(s.r, tf - s.t)
            g = goal if kind == "success" else None
            r2 = ont.apply(r_f, eff if g is not None else None)
            r2 = ont.second_order_effects(r_f, r2)
            a = int(pol[xf, min(tf, ont.horizon)])
            m = ont.base.matrix(a, tf, ont.mode(r_f))
            lo, hi = m.indptr[xf], m.indptr[xf + 1]
            for x2, q in zip(m.indices[lo:hi], m.data[lo:hi]):
                add(State(r2, int(x2), tf + 1), p * float(q), g, xf, tf)
    return [Outcome(st, v[0], g, v[1], v[2]) for (st, g), v in acc.items()]


def product_step(ont: Ontology, s: State, a: int) -> list[tuple[State, float]]:
    """One primitive step of the explicit hierarchical operator from ``s`` with base action ``a``."""
    if s.t >= ont.horizon:
        return [(s, 1.0)]
    mode = ont.mode(s.r)
    row = ont.base.matrix(a, s.t, mode)
    lo, hi = row.indptr[s.x], row.indptr[s.x + 1]
    xs, ps = row.indices[lo:hi], row.data[lo:hi]
    alts: list[tuple[Mapping[str, int] | None, float]] = []
    rest = 1.0
    for g in ont.goals.values():
        p = ont.availability(g.id)[s.x, a, s.t]
        if p > 0:
            alts.append((g.effects, p))
            rest -= p
    if rest < -1e-12:
        raise UnsupportedConfiguration(f"goal probabilities exceed 1 at {(s.x, a, s.t)}")
    if rest > 1e-12:
        alts.append((None, rest))
    acc: dict[State, float] = {}
    for eff, pa in alts:
        r2 = ont.second_order_effects(s.r, ont.apply(s.r, eff))
        for x2, px in zip(xs, ps):
            st = State(r2, int(x2), s.t + 1)
            acc[st] = acc.get(st, 0.0) + pa * float(px)
    return list(acc.items())


# --------------------------------------------------------- explicit product


@dataclass
class ProductOperator:
    """Materialized hierarchical operator over flattened (r..., x) indices."""

    op: TransitionOperator
    dims: tuple[int, ...]
    space_ids: tuple[str, ...]

    def index(self, r: Sequence[int], x: int) -> int:
        return int(np.ravel_multi_index(tuple(r) + (x,), self.dims))

    def unravel(self, i: int) -> tuple[tuple, int]:
        parts = np.unravel_index(i, self.dims)
        return tuple(int(v) for v in parts[:-1]), int(parts[-1])

    @property
    def n_states(self) -> int:
        return int(np.prod(self.dims))

    def lift(self, f: np.ndarray) -> np.ndarray:
        """f(x,a,t) -> fbar(s,a,t) independent of r."""
        n_r = int(np.prod(self.dims[:-1]))
        return np.tile(f, (n_r, 1, 1))


def compose_product_operator(ont: Ontology, guard: int = ORACLE_GUARD) -> ProductOperator:
    """Sum over induced action vectors of P_r * F * P_x under zeta, as sparse matrices."""
    dims = tuple(op.n_states for op in ont.spaces) + (ont.base.n_states,)
    n = int(np.prod(dims))
    if n > guard:
        raise CapacityError(f"product space has {n} states > guard {guard}; use the factorized path")
    n_a, T = ont.base.n_actions, ont.horizon
    avail = {g: ont.availability(g) for g in ont.goals}
    stationary = all(np.all(f == f[:, :, :1]) for f in avail.values())
    times = [0] if stationary else list(range(T + 1))
    grids = np.indices(dims).reshape(len(dims), -1)
    r_cols, x_col = grids[:-1], grids[-1]
    modes = np.array([ont.mode(tuple(int(v) for v in r_cols[:, i])) for i in range(n)]) if ont.spaces \
        else np.array([ont.mode(())] * n)
    # r' per induced action vector, vectorized per space
    def r_next(effects):
        cols = []
        for i, sid in enumerate(ont.space_ids):
            a = (effects or {}).get(sid, 0)
            cols.append(ont._succ[i][r_cols[i], a])
        out = np.stack(cols) if cols else np.zeros((0, n), dtype=np.int64)
        if ont.second_order:
            out = out.copy()
            for j in range(n):
                before = tuple(int(v) for v in r_cols[:, j])
                after = tuple(int(v) for v in out[:, j])
                out[:, j] = ont.second_order_effects(before, after)
        return out
    alt_r = {None: r_next(None)}
    for g in ont.goals.values():
        alt_r[g.id] = r_next(g.effects)
    slices = []
    for t in times:
        mats = []
        for a in range(n_a):
            rows, cols, vals = [], [], []
            gsum = np.zeros(n)
            for gid in list(ont.goals) + [None]:
                if gid is None:
                    w = 1.0 - gsum
                    if np.any(w < -1e-12):
                        raise UnsupportedConfiguration("goal probabilities exceed 1")
                    w = np.clip(w, 0.0, None)
                else:
                    w = avail[gid][x_col, a, t]
                    gsum = gsum + w
                rn = alt_r[gid]
                for mode in np.unique(modes):
                    sel = np.flatnonzero((modes == mode) & (w > 0))
                    if sel.size == 0:
                        continue
                    px = ont.base.matrix(a, t, str(mode))
                    sub = px[x_col[sel]]
                    counts = np.diff(sub.indptr)
                    src = np.repeat(sel, counts)
                    xn = sub.indices
                    dst_parts = tuple(rn[:, src]) + (xn,)
                    dst = np.ravel_multi_index(dst_parts, dims)
                    rows.append(src)
                    cols.append(dst)
                    vals.append(np.repeat(w[sel], counts) * sub.data)
            m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
            m.sum_duplicates()
            mats.append(m)
        slices.append(mats)
    space = StateSpace("s", n)
    acts = ActionSet("s_actions", ont.base.actions.actions, ont.base.actions.null_action)
    if stationary:
        op = TransitionOperator(space, acts, {"product": slices[0]}, deterministic=None)
    else:
        op = TransitionOperator(space, acts, {"product": slices}, horizon=T, deterministic=None)
    return ProductOperator(op, dims, ont.space_ids)


def hierarchical_obe_oracle(product: ProductOperator, fbar: np.ndarray, horizon: int,
                            goal_id: str = "g") -> FeasibilitySolution:
    """Exact product-space OBE solution; used only as a test oracle."""
    if product.n_states > ORACLE_GUARD:
        raise CapacityError(f"product space {product.n_states} exceeds oracle guard")
    return feasibility_iteration(TgMdp(product.op, fbar, horizon, goal_id=goal_id))


def factorized_success(ont: Ontology, goal: str, r: Sequence[int], x: int, t: int,
                       constrained: bool = True) -> dict[tuple[tuple, int, int], float] | None:
    """omega_r(r_f|r,t_f-t) * eta_zeta(r)(x_f,t_f|x,t) over success events.

    Returns None when the constrained query is infeasible under r.
    """
    mode = ont.mode(r)
    sol = ont.aggregate.cell(mode, goal)
    if sol.kappa[x, t] <= 0:
        return {}
    if constrained and ont.aggregate.constrained_events(mode, goal, x, t, ont.min_hitting(r)) is None:
        return None
    out: dict = {}
    for xf, tf, p in sol.stff.success_events(x, t):
        key = (ont.predict(r, tf - t), xf, tf)
        out[key] = out.get(key, 0.0) + p
    return out


def oracle_success(product: ProductOperator, sol: FeasibilitySolution, r: Sequence[int], x: int, t: int) -> dict:
    out: dict = {}
    for sf, tf, p in sol.stff.success_events(product.index(r, x), t):
        rf, xf = product.unravel(sf)
        out[(rf, xf, tf)] = out.get((rf, xf, tf), 0.0) + p
    return out


# ------------------------------------------------------------------- BOG tasks


@dataclass(frozen=True)
class BogTask:
    """Boolean ordered goal task over ``bits``; bit 0 is the leftmost character."""

    bits: int
    accepting: frozenset = frozenset()
    precedence: frozenset = frozenset()
    goal_map: Mapping[int, str] = field(default_factory=dict)
    resets: frozenset = frozenset()
    deadlines: Mapping[int, int] = field(default_factory=dict)
    id: str = "sigma"

    def __post_init__(self):
        if self.bits < 1:
            raise DomainError("BOG task needs at least one bit")
        for i, j in self.precedence:
            if not (0 <= i < self.bits and 0 <= j < self.bits) or i == j:
                raise DomainError(f"bad precedence rule {(i, j)}")
        for s in self.accepting:
            if len(s) != self.bits or set(s) - {"0", "1"}:
                raise DomainError(f"bad accepting vector {s!r}")

    def label(self, s: int) -> str:
        return format(s, f"0{self.bits}b")

    def state(self, label: str) -> int:
        return int(label, 2)

    def bit(self, s: int, i: int) -> int:
        return (s >> (self.bits - 1 - i)) & 1

    def accepting_states(self) -> frozenset:
        return frozenset(self.state(a) for a in self.accepting)

    def flip_action(self, i: int) -> int:
        return 1 + i


def bog_successors(task: BogTask) -> np.ndarray:
    """succ[s, a]: a=0 identity; a=1+i sets bit i if no rule (i, j) has bit j set."""
    n = 1 << task.bits
    succ = np.zeros((n, task.bits + 1), dtype=np.int64)
    blockers = {i: [j for (a, j) in task.precedence if a == i] for i in range(task.bits)}
    for s in range(n):
        succ[s, 0] = s
        for i in range(task.bits):
            mask = 1 << (task.bits - 1 - i)
            if s & mask:
                succ[s, 1 + i] = s ^ mask if i in task.resets else s
            elif any(task.bit(s, j) for j in blockers[i]):
                succ[s, 1 + i] = s
            else:
                succ[s, 1 + i] = s | mask
    return succ


def build_bog_operator(task: BogTask) -> TransitionOperator:
    if task.bits > BOG_MAX_BITS:
        raise CapacityError(f"{task.bits} bits exceeds {BOG_MAX_BITS}")
    n = 1 << task.bits
    space = StateSpace(task.id, n, labels=tuple(task.label(s) for s in range(n)))
    acts = ActionSet(f"{task.id}_actions", ("null",) + tuple(f"flip{i}" for i in range(task.bits)), 0)
    return operator_from_successors(space, acts, {"normal": bog_successors(task)})


def bog_goal_effects(task: BogTask) -> dict[str, dict[str, int]]:
    """goal id -> effect on the task space."""
    return {g: {task.id: task.flip_action(i)} for i, g in task.goal_map.items()}


def vertical_compose(ont: Ontology, rules: Sequence[SecondOrderRule]) -> Ontology:
    """Add second-order induced actions evaluated on the post-step task state."""
    for rule in rules:
        if rule.space == "x" or rule.space not in ont.space_ids:
            raise UnsupportedConfiguration("second-order availability may reference only task spaces and time")
    return Ontology(ont.base, ont.spaces, list(ont.goals.values()), ont.zeta, ont.horizon,
                    tuple(ont.second_order) + tuple(rules), ont.policies, ont.aggregate)


# ------------------------------------------------------------------ sublimation


def sublimate(fbar_max: np.ndarray, layer: TransitionOperator, horizon: int, goal_id: str = "sub") -> TgMdp:
    """TG-MDP over the layer with f_sub(sigma, t) = max over (x, a) of fbar.

    ``fbar_max`` has shape (|Sigma|, T+1) and already holds that maximum;
    use :func:`sublimated_availability` to compute it from a full table.
    """
    n, n_a = layer.n_states, layer.n_actions
    if fbar_max.shape != (n, horizon + 1):
        raise DomainError(f"sublimated availability shape {fbar_max.shape} != {(n, horizon + 1)}")
    f = np.repeat(fbar_max[:, None, :], n_a, axis=1)
    return TgMdp(layer, f, horizon, goal_id=goal_id)


def sublimated_availability(product: ProductOperator, fbar: np.ndarray, layer: str) -> np.ndarray:
    """max over all non-layer components and base actions of fbar(s, a, t)."""
    k = product.space_ids.index(layer)
    T1 = fbar.shape[2]
    per = fbar.max(axis=1).reshape(product.dims + (T1,))
    axes = tuple(i for i in range(len(product.dims)) if i != k)
    return per.max(axis=axes)


def bog_sublimated_kappa(task: BogTask, horizon: int) -> np.ndarray:
    """kappa_sub(sigma, t) for reaching an accepting vector of the task."""
    op = build_bog_operator(task)
    f = np.zeros((op.n_states, horizon + 1))
    for s in task.accepting_states():
        f[s, :] = 1.0
    return feasibility_iteration(sublimate(f, op, horizon, task.id)).kappa

"""Valence-driven planning over sequences of goal-conditioned policies.

Plan search is breadth-first over policy sequences through the goal operator.
Plans are scored by valence: expected final empowerment minus initial
empowerment. The module also holds the finite-horizon valence Bellman
solvers used to verify path independence and the open-loop bound.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .core import CapacityError, DomainError, TransitionOperator
from .empowerment import (
    BA_ROW_GUARD,
    empowerment,
    empowerment_blahut_arimoto,
    reachable_flat,
)
from .hierarchy import (
    BogTask,
    Ontology,
    ProductOperator,
    State,
    UnsupportedConfiguration,
    bog_sublimated_kappa,
    goal_operator_step,
    policy_feasible,
)

VBE_GUARD = 10**5
HSM_GUARD = 10**6
VALENCE_DIGITS = 12


# ------------------------------------------------------------------- BFS


@dataclass
class PlanNode:
    state: State
    plan: tuple[str, ...]
    parent: int | None
    is_leaf: bool = False
    pruned: bool = False


@dataclass
class PlanTree:
    nodes: list[PlanNode]
    m: int
    expansions: int = 0

    @property
    def root(self) -> PlanNode:
        return self.nodes[0]

    @property
    def leaves(self) -> list[PlanNode]:
        return [nd for nd in self.nodes if nd.is_leaf]


@dataclass(frozen=True)
class SublimationEntry:
    """kappa_sub over one task space and the policies that act on it."""

    space: str
    kappa: np.ndarray
    goals: frozenset


def sublimation_table(ont: Ontology, tasks: Iterable[BogTask]) -> dict[str, SublimationEntry]:
    out = {}
    for task in tasks:
        ont.space_index(task.id)
        kappa = bog_sublimated_kappa(task, ont.horizon)
        out[task.id] = SublimationEntry(task.id, kappa, frozenset(task.goal_map.values()))
    return out


def sublimation_check(ont: Ontology, s: State, goal: str,
                      table: Mapping[str, SublimationEntry] | None) -> bool:
    """False when ``goal`` belongs to a task that is abstractly impossible from s."""
    if not table:
        return True
    t = min(s.t, ont.horizon)
    for entry in table.values():
        if goal in entry.goals and entry.kappa[s.r[ont.space_index(entry.space)], t] <= 0:
            return False
    return True


def _point(outcomes) -> State:
    if len(outcomes) != 1:
        raise UnsupportedConfiguration("plan search needs a deterministic goal operator")
    return outcomes[0].state


def is_idle(ont: Ontology, s: State, goal: str) -> bool:
    """True when the goal's induced actions equal the null actions on the current vector."""
    return ont.apply(s.r, ont.goals[goal].effects) == ont.apply(s.r, None)


def bfs_plan_search(ont: Ontology, start: State, m: int,
                    sublimated: Mapping[str, SublimationEntry] | None = None,
                    skip_idle: bool = False) -> PlanTree:
    """Level-synchronous BFS over policy sequences up to length m.

    ``skip_idle`` drops policies whose goal would change nothing (for example
    re-collecting an item whose bit is already set).
    """
    if m < 1:
        raise DomainError("plan length m must be >= 1")
    ont.check_state(start)
    tree = PlanTree([PlanNode(start, (), None)], m)
    level = [0]
    for depth in range(m):
        nxt = []
        for idx in level:
            node = tree.nodes[idx]
            children = 0
            for g in ont.policies:
                if not policy_feasible(ont, node.state, g):
                    continue
                if skip_idle and is_idle(ont, node.state, g):
                    continue
                if not sublimation_check(ont, node.state, g, sublimated):
                    node.pruned = True
                    continue
                child = PlanNode(_point(goal_operator_step(ont, node.state, g)), node.plan + (g,), idx,
                                 is_leaf=depth + 1 == m)
                tree.nodes.append(child)
                tree.expansions += 1
                children += 1
                nxt.append(len(tree.nodes) - 1)
            if children == 0:
                node.is_leaf = True
        level = [i for i in nxt if not tree.nodes[i].is_leaf]
    return tree


# ---------------------------------------------------------- plan operator


def plan_operator(ont: Ontology, start: State, plan: Sequence[str]) -> dict[State, float]:
    """Distribution over final full states after executing the policies in order."""
    dist = {start: 1.0}
    for g in plan:
        nxt: dict[State, float] = {}
        for s, p in dist.items():
            for o in goal_operator_step(ont, s, g):
                nxt[o.state] = nxt.get(o.state, 0.0) + p * o.p
        dist = nxt
    return dist


def expected_empowerment(ont: Ontology, dist: Mapping[State, float], n: int, variant: str) -> float:
    return float(sum(p * empowerment(ont, s, n, variant) for s, p in dist.items()))


def valence(ont_before: Ontology, ont_after: Ontology, start: State, plan: Sequence[str], n: int,
            variant: str = "task", allow_mixture: bool = False) -> float:
    """E over the plan's final states of empowerment under ``ont_after`` minus the initial one."""
    dist = plan_operator(ont_before, start, plan)
    if len(dist) > 1 and variant == "task" and not allow_mixture:
        raise UnsupportedConfiguration("non-point final distribution with task-space empowerment")
    return expected_empowerment(ont_after, dist, n, variant) - empowerment(ont_before, start, n, variant)


# ------------------------------------------------------------ selection


@dataclass
class PlanEntry:
    policies: tuple[str, ...]
    final_state: State
    final_empowerment: float
    valence: float


@dataclass
class ValenceReport:
    initial_empowerment: float
    per_plan: list[PlanEntry]
    best: PlanEntry
    space_ids: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)

    @property
    def no_improving_plan(self) -> bool:
        return self.best.valence <= 0

    def _state_dict(self, s: State) -> dict:
        d = {sid: int(v) for sid, v in zip(self.space_ids, s.r)}
        d["x"] = int(s.x)
        return d

    def _entry(self, e: PlanEntry) -> dict:
        return {"policies": list(e.policies), "final_state": self._state_dict(e.final_state),
                "final_time": int(e.final_state.t), "final_empowerment": e.final_empowerment,
                "valence": e.valence}

    def to_dict(self) -> dict:
        out = {"initial_empowerment": self.initial_empowerment,
               "plans": [self._entry(e) for e in self.per_plan],
               "best": self._entry(self.best),
               "no_improving_plan": self.no_improving_plan}
        out.update(self.extras)
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policies", "final_state", "final_time", "final_empowerment", "valence", "best"])
            for e in self.per_plan:
                w.writerow([" ".join(e.policies), json.dumps(self._state_dict(e.final_state), sort_keys=True),
                            e.final_state.t, f"{e.final_empowerment:.12g}", f"{e.valence:.12g}",
                            int(e is self.best)])


def _rank_key(ont: Ontology, e: PlanEntry):
    idx = tuple(ont.policies.index(g) if g in ont.policies else len(ont.policies) for g in e.policies)
    return (-round(e.valence, VALENCE_DIGITS), len(e.policies), idx)


def select_best_plan(tree: PlanTree | Sequence[Sequence[str]], ont: Ontology, n: int,
                     variant: str = "task", ont_after: Ontology | None = None,
                     start: State | None = None, emp_ont: Ontology | None = None) -> ValenceReport:
    """Evaluate every leaf (or every given plan) and pick the valence maximizer.

    ``emp_ont`` evaluates both empowerments when the empowerment policy
    domain differs from the planning one; ``ont_after`` evaluates only the
    final one.
    """
    before = emp_ont or ont
    after = ont_after or emp_ont or ont
    if isinstance(tree, PlanTree):
        start = tree.root.state
        leaves = [(nd.plan, {nd.state: 1.0}) for nd in tree.leaves]
    else:
        if start is None:
            raise DomainError("start state required when plans are given explicitly")
        leaves = [(tuple(p), plan_operator(ont, start, p)) for p in tree]
    if not leaves:
        raise DomainError("no plans to evaluate")
    e0 = empowerment(before, start, n, variant)
    entries = []
    cache: dict[State, float] = {}
    for plan, dist in leaves:
        ef = 0.0
        for s, p in dist.items():
            if s not in cache:
                cache[s] = empowerment(after, s, n, variant)
            ef += p * cache[s]
        final = max(dist.items(), key=lambda kv: kv[1])[0]
        entries.append(PlanEntry(tuple(plan), final, ef, ef - e0))
    best = min(entries, key=lambda e: _rank_key(ont, e))
    return ValenceReport(e0, entries, best, ont.space_ids)


# ------------------------------------------------------------- item value


def item_value(ont_with: Ontology, ont_without: Ontology, s_with: State, s_without: State,
               n: int, variant: str = "task") -> float:
    """Empowerment with the item minus without; states may differ in one component only."""
    if s_with.x != s_without.x or s_with.t != s_without.t:
        raise DomainError("item valuation: x and t must match")
    diff = [i for i, (a, b) in enumerate(zip(s_with.r, s_without.r)) if a != b]
    if len(s_with.r) != len(s_without.r) or len(diff) > 1:
        raise DomainError("item valuation: state vectors differ in more than the valued component")
    return empowerment(ont_with, s_with, n, variant) - empowerment(ont_without, s_without, n, variant)


# ------------------------------------------------------------- affordances


@dataclass(frozen=True)
class AffordanceSet:
    goal: str
    t: int
    members: frozenset

    def __contains__(self, item) -> bool:
        return item in self.members

    def __len__(self) -> int:
        return len(self.members)


def all_states(ont: Ontology, t: int, guard: int = HSM_GUARD) -> Iterable[State]:
    dims = [op.n_states for op in ont.spaces] + [ont.base.n_states]
    if int(np.prod(dims)) > guard:
        raise CapacityError("too many full states to enumerate; pass explicit states")
    for combo in itertools.product(*[range(d) for d in dims]):
        yield State(tuple(combo[:-1]), combo[-1], t)


def affordance_set(ont: Ontology, goal: str, t: int, states: Iterable[State] | None = None) -> AffordanceSet:
    """(state, policy) pairs whose constrained success mass for ``goal`` is positive."""
    if goal not in ont.goals:
        raise DomainError(f"unknown goal {goal!r}")
    pool = states if states is not None else all_states(ont, t)
    members = frozenset((s, goal) for s in pool if policy_feasible(ont, State(s.r, s.x, t), goal))
    return AffordanceSet(goal, t, members)


# ------------------------------------------------------------------- VBE


def _flat(op) -> TransitionOperator:
    return op.op if isinstance(op, ProductOperator) else op


def empowerment_table(op, n: int, horizon: int) -> np.ndarray:
    """E_n(s, t) for every state-time; branches stop at the horizon."""
    flat = _flat(op)
    nS = flat.n_states
    out = np.zeros((nS, horizon + 1))
    for t in range(horizon + 1):
        for s in range(nS):
            if flat.deterministic:
                out[s, t] = np.log2(len(reachable_flat(flat, s, n, t, horizon=horizon)))
            else:
                out[s, t] = _ba_timed(flat, s, n, t, horizon)
    return out


def _ba_timed(op: TransitionOperator, s: int, n: int, t: int, horizon: int) -> float:
    rows = op.n_actions ** n
    if rows > BA_ROW_GUARD:
        raise CapacityError(f"|A|^n = {rows} > {BA_ROW_GUARD}")
    ch = np.zeros((rows, op.n_states * (horizon + 1)))
    for k, seq in enumerate(itertools.product(range(op.n_actions), repeat=n)):
        v = np.zeros(op.n_states)
        v[s] = 1.0
        tt = t
        for a in seq:
            if tt >= horizon:
                break
            v = op.matrix(a, tt).T @ v
            tt += 1
        ch[k, tt * op.n_states:(tt + 1) * op.n_states] = v
    return empowerment_blahut_arimoto(ch)


@dataclass
class VbeSolution:
    nu: np.ndarray
    policy: np.ndarray
    final_operator: sp.csr_matrix
    emp: np.ndarray


def vbe_solve(product_op, n: int, horizon: int, emp: np.ndarray | None = None) -> VbeSolution:
    """Finite-horizon valence Bellman equation on an explicit operator.

    Stage gain is the one-step valence E[E_n(s', t+1)] - E_n(s, t). The
    returned final operator maps each s at t=0 to its distribution at T_f.
    """
    flat = _flat(product_op)
    nS, nA = flat.n_states, flat.n_actions
    if nS * (horizon + 1) > VBE_GUARD:
        raise CapacityError(f"{nS * (horizon + 1)} state-times > {VBE_GUARD}")
    E = emp if emp is not None else empowerment_table(flat, n, horizon)
    nu = np.zeros((nS, horizon + 1))
    pol = np.zeros((nS, horizon + 1), dtype=np.int64)
    Q = sp.identity(nS, format="csr")
    for t in range(horizon - 1, -1, -1):
        vals = np.empty((nS, nA))
        for a in range(nA):
            m = flat.matrix(a, t)
            vals[:, a] = m @ E[:, t + 1] - E[:, t] + m @ nu[:, t + 1]
        best = vals.max(axis=1)
        pol[:, t] = np.argmax(vals >= best[:, None] - 1e-12, axis=1)
        nu[:, t] = vals[np.arange(nS), pol[:, t]]
        p_pi = sp.csr_matrix((nS, nS))
        for a in np.unique(pol[:, t]):
            p_pi = p_pi + sp.diags((pol[:, t] == a).astype(float)) @ flat.matrix(int(a), t)
        Q = sp.csr_matrix(p_pi @ Q)
    return VbeSolution(nu, pol, Q, E)


def one_step_valence(op, E: np.ndarray, s: int, t: int, a: int) -> float:
    m = _flat(op).matrix(a, t)
    lo, hi = m.indptr[s], m.indptr[s + 1]
    return float(m.data[lo:hi] @ E[m.indices[lo:hi], t + 1]) - float(E[s, t])


@dataclass
class HsmVbeSolution:
    value: float
    meta_policy: dict
    final: dict


def hsm_vbe_solve(ont: Ontology, start: State, K_f: int, n: int, variant: str = "task",
                  policy_filter: str = "feasible", emp_ont: Ontology | None = None) -> HsmVbeSolution:
    """Closed-loop meta-policy over at most K_f policy applications.

    ``policy_filter`` "feasible" mirrors plan search (only feasible policies;
    none feasible terminates). "all" allows every policy through the goal
    operator. ``emp_ont`` evaluates empowerment under a different model, for
    example a deterministic twin when the goal operator is stochastic.
    """
    emp_model = emp_ont or ont
    if K_f < 0:
        raise DomainError("K_f must be >= 0")
    if policy_filter not in ("feasible", "all"):
        raise DomainError("policy_filter must be 'feasible' or 'all'")
    emp: dict[State, float] = {}
    memo: dict[tuple[State, int], tuple[float, str | None, dict]] = {}

    def E(s):
        if s not in emp:
            emp[s] = empowerment(emp_model, s, n, variant)
        return emp[s]

    def solve(s: State, k: int):
        key = (s, k)
        if key in memo:
            return memo[key]
        if len(memo) > HSM_GUARD:
            raise CapacityError("hsm-VBE state-time enumeration exceeded guard")
        best = (0.0, None, {s: 1.0})
        if k > 0:
            options = [g for g in ont.policies if policy_filter == "all" or policy_feasible(ont, s, g)]
            found = False
            for g in options:
                val, fin = 0.0, {}
                for o in goal_operator_step(ont, s, g):
                    v2, _, f2 = solve(o.state, k - 1)
                    val += o.p * (E(o.state) - E(s) + v2)
                    for sf, q in f2.items():
                        fin[sf] = fin.get(sf, 0.0) + o.p * q
                if not found or round(val, VALENCE_DIGITS) > round(best[0], VALENCE_DIGITS):
                    best = (val, g, fin)
                    found = True
        memo[key] = best
        return best

    val, _, fin = solve(start, K_f)
    return HsmVbeSolution(val, {k: v[1] for k, v in memo.items()}, fin)


def open_loop_best(ont: Ontology, start: State, K: int, n: int, variant: str = "task",
                   emp_ont: Ontology | None = None) -> tuple[float, tuple]:
    """Max valence over all policy sequences of length K (exhaustive)."""
    emp_model = emp_ont or ont
    e0 = empowerment(emp_model, start, n, variant)
    best, arg = -np.inf, ()
    for plan in itertools.product(ont.policies, repeat=K):
        v = expected_empowerment(emp_model, plan_operator(ont, start, plan), n, variant) - e0
        if v > best + 1e-12:
            best, arg = v, plan
    return best, arg

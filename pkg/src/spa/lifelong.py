"""Idealized lifelong learning with state transformations.

The agent knows the grid dynamics, the goal locations and every space's null
dynamics. It does not know what a goal does to its internal spaces until it
induces that goal once and observes the transformation. Features are the
attribute lists attached to goals; the learned bindings feature -> psi carry
over to new environments, which is how knowledge transfers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .core import ActionSet, DomainError, StateSpace, operator_from_successors
from .hierarchy import Goal, Ontology, State, goal_operator_step, policy_feasible
from .empowerment import empowerment
from .planning import VALENCE_DIGITS, bfs_plan_search

NULL_FEATURE: tuple = ()


# ------------------------------------------------------------ transformations


@dataclass(frozen=True)
class StateTransformation:
    """Deterministic rule psi that a goal applies to one secondary space."""

    space: str
    kind: str
    bit: int | None = None
    table: tuple | None = None
    goal: str | None = None

    def __post_init__(self):
        if self.kind not in ("bit_flip", "jump_to_top", "decrement_floor", "table"):
            raise DomainError(f"unknown transformation kind {self.kind!r}")
        if self.kind == "bit_flip" and (self.bit is None or self.bit < 0):
            raise DomainError("bit_flip needs a bit index")
        if self.kind == "table" and not self.table:
            raise DomainError("table transformation needs a table")

    @property
    def key(self) -> tuple:
        return (self.space, self.kind, self.bit, self.table)

    def successors(self, n_states: int) -> np.ndarray:
        idx = np.arange(n_states)
        if self.kind == "jump_to_top":
            return np.full(n_states, n_states - 1)
        if self.kind == "decrement_floor":
            return np.maximum(idx - 1, 0)
        if self.kind == "table":
            tab = np.asarray(self.table, dtype=np.int64)
            if tab.shape != (n_states,) or tab.min() < 0 or tab.max() >= n_states:
                raise DomainError(f"table for {self.space} must map {n_states} states into range")
            return tab
        bits = max(1, int(n_states - 1).bit_length())
        if (1 << bits) != n_states or self.bit >= bits:
            raise DomainError(f"bit_flip({self.bit}) needs a bit-vector space, got {n_states} states")
        return idx ^ (1 << (bits - 1 - self.bit))

    def holds(self, pre: int, post: int, n_states: int) -> bool:
        """psi(pre, post): True iff post is the image of pre."""
        return int(self.successors(n_states)[pre]) == int(post)


def bit_flip_holds(pre: str, post: str, i: int) -> bool:
    """Exactly bit i differs and every other bit agrees."""
    if len(pre) != len(post):
        return False
    return pre[i] != post[i] and all(a == b for k, (a, b) in enumerate(zip(pre, post)) if k != i)


def psi_from_doc(d: Mapping, goal: str | None = None) -> StateTransformation:
    table = tuple(d["table"]) if d.get("table") is not None else None
    return StateTransformation(d["space"], d["kind"], d.get("bit"), table, goal)


# ------------------------------------------------------------------ features


def feature_key(theta: Iterable[str]) -> tuple:
    return tuple(sorted(theta))


@dataclass
class FeatureSet:
    """Features per cell, the known set, and feature -> psi bindings."""

    features: dict[int, tuple] = field(default_factory=dict)
    known: set = field(default_factory=set)
    bindings: dict[tuple, StateTransformation] = field(default_factory=dict)

    def learn(self, theta: tuple, psi: StateTransformation) -> bool:
        """Record a binding; returns False when the feature was already known or is empty."""
        theta = feature_key(theta)
        if theta == NULL_FEATURE or theta in self.known:
            return False
        self.known.add(theta)
        self.bindings[theta] = psi
        return True

    def is_known(self, theta: tuple) -> bool:
        theta = feature_key(theta)
        return theta == NULL_FEATURE or theta in self.known

    def copy_knowledge(self) -> "FeatureSet":
        return FeatureSet({}, set(self.known), dict(self.bindings))


@dataclass(frozen=True)
class ValencePrior:
    """Discrete prior over anticipated valence of an unknown feature (bits)."""

    values: tuple = (0.5,)
    probs: tuple = (1.0,)

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise DomainError("prior values and probabilities must align")
        if abs(sum(self.probs) - 1.0) > 1e-12 or min(self.probs) < 0:
            raise DomainError("prior probabilities must form a distribution")
        if not all(np.isfinite(self.values)):
            raise DomainError("prior values must be finite")

    @classmethod
    def point(cls, c: float) -> "ValencePrior":
        return cls((float(c),), (1.0,))

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))


def observe_transformation(goal: str, ground_truth: Mapping[str, StateTransformation]) -> StateTransformation:
    """The deterministic observation function O(alpha) -> psi."""
    if goal is None:
        raise DomainError("the null goal has no transformation to observe")
    if goal not in ground_truth:
        raise DomainError(f"goal {goal!r} has no ground-truth transformation")
    return ground_truth[goal]


# --------------------------------------------------------------- environments


@dataclass
class Environment:
    """One world: grid, goals with features, availability and the agent's start."""

    name: str
    grid: dict
    goals: list[dict]
    availability: list[dict]
    start: dict
    target: str | None = None

    def feature(self, goal: str) -> tuple:
        for g in self.goals:
            if g["id"] == goal:
                return feature_key(g.get("feature", []))
        raise DomainError(f"unknown goal {goal!r}")


@dataclass
class World:
    """Everything shared across environments plus the ground truth."""

    doc: dict
    environments: list[Environment]
    truth: dict[tuple, StateTransformation]

    @property
    def horizon(self) -> int:
        return self.doc["horizon"]


def world_from_doc(doc: Mapping) -> World:
    envs = [Environment(e["name"], e["grid"], e["goals"], e["availability"], e["agent_start"], e.get("target"))
            for e in doc.get("environments", [])]
    if not envs:
        raise DomainError("lifelong scenario needs at least one environment")
    truth = {feature_key(k.split("+")): psi_from_doc(v) for k, v in doc.get("psi", {}).items()}
    return World(dict(doc), envs, truth)


def _psi_operator(null_op, psis: Sequence[StateTransformation]):
    """P^psi for one space: action 0 is the known null dynamics, then one action per psi."""
    n = null_op.n_states
    cols = [null_op.successors()[:, 0]] + [p.successors(n) for p in psis]
    succ = np.stack(cols, axis=1)
    acts = ActionSet(f"{null_op.space.id}_psi", ("null",) + tuple(f"psi{i}" for i in range(len(psis))), 0)
    space = StateSpace(null_op.space.id, n, null_op.space.labels, null_op.space.defective)
    return operator_from_successors(space, acts, {"normal": succ})


@dataclass
class Model:
    """An ontology built from a knowledge state for one environment."""

    ontology: Ontology
    start: State
    env: Environment
    built: Any


def build_model(world: World, env: Environment, bindings: Mapping[tuple, StateTransformation]) -> Model:
    """Ontology whose goal effects come only from the given feature bindings."""
    from .scenarios import Built, build_availability, build_base, build_secondaries, build_start, build_zeta, \
        secondary_specs

    nulls, tasks = build_secondaries(secondary_specs(world.doc))
    zeta = build_zeta(world.doc, nulls, tasks)
    base = build_base(env.grid, zeta)
    gp = env.grid["params"]
    built = Built(None, None, gp["width"], gp["height"], tasks)  # type: ignore[arg-type]
    avail = build_availability(env.goals, env.availability, built, world.horizon)
    per_space: dict[str, list[StateTransformation]] = {op.space.id: [] for op in nulls}
    for psi in bindings.values():
        if psi.space not in per_space:
            raise DomainError(f"transformation targets unknown space {psi.space!r}")
        if psi.key not in [p.key for p in per_space[psi.space]]:
            per_space[psi.space].append(psi)
    spaces = [_psi_operator(op, per_space[op.space.id]) for op in nulls]
    goals = []
    for g in env.goals:
        psi = bindings.get(feature_key(g.get("feature", [])))
        eff = {}
        if psi is not None:
            keys = [p.key for p in per_space[psi.space]]
            eff[psi.space] = 1 + keys.index(psi.key)
        goals.append(Goal(g["id"], avail[g["id"]], eff))
    ont = Ontology(base, spaces, goals, zeta, world.horizon)
    start = build_start(env.start, nulls, tasks, built)
    ont.check_state(start)
    built.ontology, built.start = ont, start
    return Model(ont, start, env, built)


def remap(world: World, env: Environment, features: FeatureSet) -> Model:
    """Rebuild feasibility on a new environment; bindings and null dynamics carry over."""
    return build_model(world, env, features.bindings)


# --------------------------------------------------------------- valence


def expected_valence_with_priors(ont: Ontology, start: State, plan: Sequence[str], n: int,
                                 env: Environment, features: FeatureSet, prior: ValencePrior,
                                 variant: str = "task", e0: float | None = None,
                                 emp_cache: dict | None = None) -> float:
    """Valence under current knowledge plus the prior for each unique unknown feature reached.

    Each unique policy contributes prior.mean times the probability that its
    first occurrence in the plan induces its goal.
    """
    if e0 is None:
        e0 = empowerment(ont, start, n, variant)
    dist = {start: 1.0}
    bonus = 0.0
    seen: set[str] = set()
    for g in plan:
        nxt: dict[State, float] = {}
        hit = 0.0
        for s, p in dist.items():
            for o in goal_operator_step(ont, s, g):
                nxt[o.state] = nxt.get(o.state, 0.0) + p * o.p
                if o.goal == g:
                    hit += p * o.p
        if g not in seen:
            seen.add(g)
            if not features.is_known(env.feature(g)):
                bonus += hit * prior.mean
        dist = nxt
    cache = emp_cache if emp_cache is not None else {}
    ef = 0.0
    for s, p in dist.items():
        if s not in cache:
            cache[s] = empowerment(ont, s, n, variant)
        ef += p * cache[s]
    return ef - e0 + bonus


def choose_plan(model: Model, state: State, features: FeatureSet, prior: ValencePrior, m: int, n: int,
                variant: str = "task") -> tuple[tuple, float] | None:
    """Best leaf of the plan tree by prior-augmented valence; None when no policy is feasible."""
    ont = model.ontology
    if not any(policy_feasible(ont, state, g) for g in ont.policies):
        return None
    tree = bfs_plan_search(ont, state, m)
    e0 = empowerment(ont, state, n, variant)
    cache: dict[State, float] = {}
    best, best_key = None, None
    for leaf in tree.leaves:
        if not leaf.plan:
            continue
        v = expected_valence_with_priors(ont, state, leaf.plan, n, model.env, features, prior, variant, e0, cache)
        key = (-round(v, VALENCE_DIGITS), len(leaf.plan), tuple(ont.policies.index(g) for g in leaf.plan))
        if best_key is None or key < best_key:
            best, best_key = (leaf.plan, v), key
    return best


# -------------------------------------------------------------------- loop


def _state_record(model: Model, s: State) -> dict:
    d: dict[str, Any] = {sid: int(v) for sid, v in zip(model.ontology.space_ids, s.r)}
    d["x"] = list(model.built.rc(s.x))
    return d


@dataclass
class LifelongRun:
    events: list[dict]
    features: FeatureSet
    final_state: State
    outcome: str

    @property
    def observations(self) -> list[dict]:
        return [e for e in self.events if e["event"] == "observation"]

    @property
    def plans(self) -> list[dict]:
        return [e for e in self.events if e["event"] == "plan_chosen"]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)


def lifelong_loop(world: World, env: Environment, features: FeatureSet, prior: ValencePrior, m: int, n: int,
                  max_steps: int, variant: str = "task") -> LifelongRun:
    """Plan, execute policy by policy, observe new transformations and re-plan.

    The simulated world always applies the ground-truth transformations;
    the planner only uses what the agent has observed. The run ends on
    reaching the environment's target, death, no feasible policy, or after
    ``max_steps`` executed policies.
    """
    truth = {g["id"]: world.truth[env.feature(g["id"])] for g in env.goals if env.feature(g["id"]) in world.truth}
    real = build_model(world, env, world.truth)
    state = real.start
    events: list[dict] = []
    steps = 0
    outcome = "max_steps"

    def log(kind, **kw):
        rec = {"event": kind, "environment": env.name, "t": int(state.t), "state": _state_record(real, state)}
        rec.update(kw)
        events.append(rec)

    while True:
        if real.ontology.zeta.is_defective(state.r):
            outcome = "death"
            log("terminal", reason="death")
            break
        if steps >= max_steps:
            log("terminal", reason="max_steps")
            break
        model = build_model(world, env, features.bindings)
        choice = choose_plan(model, state, features, prior, m, n, variant)
        if choice is None:
            outcome = "no_feasible_policy"
            log("terminal", reason="no_feasible_policy")
            break
        plan, v = choice
        log("plan_chosen", plan=list(plan), valence_estimate=v)
        replan = False
        for g in plan:
            if steps >= max_steps:
                break
            outs = goal_operator_step(real.ontology, state, g)
            if len(outs) != 1:
                raise DomainError("lifelong loop needs deterministic dynamics")
            o = outs[0]
            state = o.state
            steps += 1
            log("policy_executed", policy=g, goal_induced=o.goal is not None, x_f=list(real.built.rc(o.x_f)),
                t_f=int(o.t_f))
            if o.goal is None:
                replan = True
                break
            if env.target is not None and o.goal == env.target:
                outcome = "target_reached"
                log("terminal", reason="target_reached", target=env.target)
                return LifelongRun(events, features, state, outcome)
            theta = env.feature(g)
            if not features.is_known(theta):
                psi = observe_transformation(g, truth)
                features.learn(theta, psi)
                log("observation", policy=g, feature=list(theta),
                    psi={"space": psi.space, "kind": psi.kind, "bit": psi.bit})
                replan = True
                break
        if not replan and not plan:
            break
    return LifelongRun(events, features, state, outcome)


def surviving_plans_to(model: Model, target: str, m: int) -> list[tuple]:
    """Exhaustive search: plans of length <= m whose last policy induces ``target`` with every step alive."""
    ont = model.ontology
    out = []
    level = [(model.start, ())]
    for _ in range(m):
        nxt = []
        for s, plan in level:
            for g in ont.policies:
                if ont.zeta.is_defective(s.r) or not policy_feasible(ont, s, g):
                    continue
                (o,) = goal_operator_step(ont, s, g)
                if ont.zeta.is_defective(o.state.r):
                    continue
                if g == target and o.goal == target:
                    out.append(plan + (g,))
                    continue
                nxt.append((o.state, plan + (g,)))
        level = nxt
    return out


def run_lifelong_scenario(sc) -> dict:
    """Run every environment in order with shared knowledge and report transfer metrics.

    For each environment with a target, an ablation withholds the binding of
    every feature listed in ``params.ablate`` and counts surviving plans of
    length at most the environment's m that reach the target.
    """
    doc = sc.doc
    world = world_from_doc(doc)
    p = doc.get("params", {})
    prior = ValencePrior.point(p.get("prior", 0.5))
    n, variant = p.get("n", 1), p.get("emp", "task")
    features = FeatureSet()
    runs = []
    metrics: dict[str, Any] = {}
    for k, (env, env_doc) in enumerate(zip(world.environments, doc["environments"]), start=1):
        m = env_doc.get("m", p.get("m", 2))
        max_steps = env_doc.get("max_steps", p.get("max_steps", 20))
        run = lifelong_loop(world, env, features, prior, m, n, max_steps, variant)
        runs.append(run)
        metrics[f"env{k}.observations"] = len(run.observations)
        metrics[f"env{k}.learned"] = [e["policy"] for e in run.observations]
        metrics[f"env{k}.plans"] = len(run.plans)
        metrics[f"env{k}.replans_after_observation"] = sum(
            1 for a, b in zip(run.events, run.events[1:]) if a["event"] == "observation" and b["event"] == "plan_chosen")
        metrics[f"env{k}.outcome"] = run.outcome
        metrics[f"env{k}.executed"] = [e["policy"] for e in run.events if e["event"] == "policy_executed"]
        if run.plans:
            metrics[f"env{k}.first_plan"] = run.plans[0]["plan"]
            metrics[f"env{k}.first_plan_length"] = len(run.plans[0]["plan"])
        if env.target is not None:
            full = build_model(world, env, features.bindings)
            metrics[f"env{k}.surviving_plans"] = len(surviving_plans_to(full, env.target, m))
            withheld = {feature_key(f.split("+")) for f in p.get("ablate", [])}
            kept = {th: psi for th, psi in features.bindings.items() if th not in withheld}
            ablated = build_model(world, env, kept)
            metrics[f"env{k}.ablation_surviving_plans"] = len(surviving_plans_to(ablated, env.target, m))
    return {"runs": runs, "features": features, "world": world, "metrics": metrics,
            "log": "".join(r.to_jsonl() for r in runs)}

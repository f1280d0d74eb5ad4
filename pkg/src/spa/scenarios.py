"""Scenario documents, the builder that turns them into ontologies, and the
built-in worked examples.

A scenario is a JSON document validated against ``docs/scenario.schema.json``
(a copy ships inside the package). Cells are given as ``[row, col]``. Grid
modes other than "defective" use the base walls plus ``mode_walls[mode]``;
the defective mode always freezes movement.
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .core import (
    GRID_ACTIONS,
    ActionSet,
    AvailabilityFn,
    DomainError,
    StateSpace,
    grid_successors,
    identity_successors,
    make_chain_space,
    operator_from_successors,
)
from .empowerment import empowerment, empowerment_map, write_empmap_csv
from .hierarchy import (
    BogTask,
    Goal,
    ModeFunction,
    Ontology,
    SecondOrderRule,
    State,
    build_bog_operator,
    goal_operator_step,
    policy_feasible,
)
from .worlds import BUILTINS
from .planning import (
    affordance_set,
    bfs_plan_search,
    item_value,
    plan_operator,
    select_best_plan,
    sublimation_table,
)


class ScenarioError(DomainError):
    """Schema violation or unknown builtin."""


# ------------------------------------------------------------------ schema


def schema() -> dict:
    return json.loads(resources.files("spa").joinpath("scenario.schema.json").read_text())


def validate_document(doc: dict) -> None:
    v = jsonschema.Draft202012Validator(schema())
    errors = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = ["/" + "/".join(str(p) for p in e.absolute_path) + ": " + e.message for e in errors]
        raise ScenarioError("schema violation: " + "; ".join(msgs))


# ------------------------------------------------------------------ builder


@dataclass
class Built:
    ontology: Ontology
    start: State
    width: int
    height: int
    tasks: dict[str, BogTask] = field(default_factory=dict)

    def cell(self, rc) -> int:
        r, c = rc
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise ScenarioError(f"cell {rc} outside the grid")
        return r * self.width + c

    def rc(self, x: int) -> tuple[int, int]:
        return divmod(int(x), self.width)


def _grid_spec(doc: dict) -> dict:
    grids = [s for s in doc["spaces"] if s["kind"] == "grid"]
    if len(grids) != 1:
        raise ScenarioError("exactly one grid space is required")
    return grids[0]


def _secondary(spec: dict):
    kind, p = spec["kind"], spec.get("params", {})
    if kind == "chain":
        return make_chain_space(p["size"], p.get("top_jump", True), p.get("null_decrement", True),
                                space_id=spec["id"], defective=spec.get("defective", [0])), None
    if kind == "bits":
        task = BogTask(p["bits"], frozenset(p.get("accepting", [])),
                       frozenset(tuple(r) for r in p.get("precedence", [])),
                       {int(k): v for k, v in p.get("goal_map", {}).items()},
                       frozenset(p.get("resets", [])),
                       {int(k): v for k, v in p.get("deadlines", {}).items()}, spec["id"])
        op = build_bog_operator(task)
        if spec.get("defective"):
            raise ScenarioError("bits spaces cannot carry defective states")
        return op, task
    raise ScenarioError(f"unsupported secondary kind {kind!r}")


def _state_value(op, task, v) -> int:
    if isinstance(v, str):
        if task is not None:
            return task.state(v)
        if op.space.labels and v in op.space.labels:
            return op.space.labels.index(v)
        raise ScenarioError(f"unknown state label {v!r} for {op.space.id}")
    return int(v)


def _action_value(op, v) -> int:
    if isinstance(v, str):
        return op.actions.index(v)
    return int(v)


def secondary_specs(doc: dict) -> list[dict]:
    return [s for s in doc["spaces"] if s["kind"] != "grid"]


def build_secondaries(specs) -> tuple[list, dict[str, BogTask]]:
    ops, tasks = [], {}
    for spec in specs:
        op, task = _secondary(spec)
        ops.append(op)
        if task is not None:
            tasks[spec["id"]] = task
    return ops, tasks


def build_zeta(doc: dict, secondaries, tasks) -> ModeFunction:
    by_id = {op.space.id: op for op in secondaries}
    z = doc.get("zeta", {})
    defective = {op.space.id: sorted(op.space.defective) for op in secondaries if op.space.defective}
    for sid, states in z.get("defective", {}).items():
        defective[sid] = states
    tables = {sid: {_state_value(by_id[sid], tasks.get(sid), k): lab for k, lab in tab.items()}
              for sid, tab in z.get("tables", {}).items()}
    zeta = ModeFunction([op.space.id for op in secondaries], defective, tables or None)
    if "modes" in doc and sorted(doc["modes"]) != sorted(zeta.labels()):
        raise ScenarioError(f"declared modes {sorted(doc['modes'])} != zeta labels {sorted(zeta.labels())}")
    return zeta


def build_base(grid: dict, zeta: ModeFunction):
    """Grid operator with one successor table per mode label."""
    gp = grid["params"]
    width, height = gp["width"], gp["height"]
    walls = [tuple(w) for w in gp.get("walls", [])]
    n_cells = width * height
    space = StateSpace(grid["id"], n_cells, labels=tuple(f"({r},{c})" for r in range(height) for c in range(width)))
    acts = ActionSet(f"{grid['id']}_moves", GRID_ACTIONS, null_action=GRID_ACTIONS.index("stay"))
    mode_walls = {m: [tuple(w) for w in ws] for m, ws in gp.get("mode_walls", {}).items()}
    succ = {}
    for mode in zeta.labels():
        if mode == zeta.defective_mode:
            succ[mode] = identity_successors(n_cells, len(GRID_ACTIONS))
        else:
            succ[mode] = grid_successors(width, height, walls + mode_walls.get(mode, []))
    return operator_from_successors(space, acts, succ)


def build_availability(goal_docs, availability, built: "Built", horizon: int) -> dict[str, AvailabilityFn]:
    entries: dict[str, dict] = {gl["id"]: {} for gl in goal_docs}
    for av in availability:
        if av["goal"] not in entries:
            raise ScenarioError(f"availability for undeclared goal {av['goal']!r}")
        cells = [built.cell(c) for c in av["x"]]
        a_ids = None if av.get("a") is None else [GRID_ACTIONS.index(a) for a in av["a"]]
        lo, hi = av.get("t_window", [0, horizon])
        fn = AvailabilityFn.at_states(av["goal"], cells, len(GRID_ACTIONS), horizon, (lo, hi), av.get("p", 1.0), a_ids)
        entries[av["goal"]].update(fn.entries)
    return {gid: AvailabilityFn(gid, e) for gid, e in entries.items()}


def build_start(start: dict, secondaries, tasks, built: "Built") -> State:
    r = []
    for op in secondaries:
        sid = op.space.id
        default = 0 if sid in tasks else op.n_states - 1
        r.append(_state_value(op, tasks.get(sid), start.get("r", {}).get(sid, default)))
    return State(tuple(r), built.cell(start["x"]), start.get("t", 0))


def build(doc: dict) -> Built:
    """Construct the ontology and start state described by a scenario document."""
    validate_document(doc)
    horizon = doc["horizon"]
    grid = _grid_spec(doc)
    secondaries, tasks = build_secondaries(secondary_specs(doc))
    by_id = {op.space.id: op for op in secondaries}
    zeta = build_zeta(doc, secondaries, tasks)
    base = build_base(grid, zeta)
    built = Built(None, None, grid["params"]["width"], grid["params"]["height"], tasks)  # type: ignore[arg-type]
    avail = build_availability(doc["goals"], doc.get("availability", []), built, horizon)
    goals = []
    for gl in doc["goals"]:
        eff = {sid: _action_value(by_id[sid], a) for sid, a in gl.get("effects", {}).items()}
        for sid, task in tasks.items():
            for bit, gid in task.goal_map.items():
                if gid == gl["id"]:
                    eff[sid] = task.flip_action(bit)
        goals.append(Goal(gl["id"], avail[gl["id"]], eff))
    rules = []
    for rl in doc.get("second_order", []):
        sp_op = by_id.get(rl["space"])
        if sp_op is None:
            raise ScenarioError(f"second-order rule on unknown space {rl['space']!r}")
        acc = frozenset(_state_value(sp_op, tasks.get(rl["space"]), v) for v in rl["accepting"])
        eff = {sid: _action_value(by_id[sid], a) for sid, a in rl["effects"].items()}
        rules.append(SecondOrderRule(rl["space"], acc, eff))
    params = doc.get("params", {})
    ont = Ontology(base, secondaries, goals, zeta, horizon, rules, params.get("policies"))
    start = build_start(doc["agent_start"], secondaries, tasks, built)
    ont.check_state(start)
    built.ontology, built.start = ont, start
    return built


# ------------------------------------------------------------------ scenario


@dataclass
class Scenario:
    name: str
    doc: dict
    source: str

    @property
    def params(self) -> dict:
        return self.doc.get("params", {})

    @property
    def pipeline(self) -> str:
        return self.doc.get("pipeline", "plan")

    def with_overrides(self, **kw) -> "Scenario":
        """Copy with parameter overrides (m, n, horizon, emp); None values are ignored."""
        doc = copy.deepcopy(self.doc)
        p = doc.setdefault("params", {})
        for k in ("m", "n", "emp"):
            if kw.get(k) is not None:
                p[k] = kw[k]
        if kw.get("horizon") is not None:
            doc["horizon"] = kw["horizon"]
        validate_document(doc)
        return Scenario(self.name, doc, self.source)


def builtin_names() -> list[str]:
    return sorted(BUILTINS)


def builtin_document(name: str) -> dict:
    if name not in BUILTINS:
        raise ScenarioError(f"unknown builtin {name!r}; choose from {', '.join(builtin_names())}")
    return copy.deepcopy(BUILTINS[name])


def load_scenario(ref: str | Path) -> Scenario:
    """Load a builtin by name or a JSON file by path, validating either way."""
    if isinstance(ref, str) and ref in BUILTINS:
        doc = builtin_document(ref)
        src = f"builtin:{ref}"
    else:
        p = Path(ref)
        if not p.exists():
            raise ScenarioError(f"unknown builtin or missing file {str(ref)!r}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{p}: invalid JSON ({exc})") from exc
        src = str(p)
    validate_document(doc)
    return Scenario(doc["name"], doc, src)


# ------------------------------------------------------------------ running


def _state_json(built: Built, s: State) -> dict:
    ont = built.ontology
    d: dict[str, Any] = {}
    for sid, v in zip(ont.space_ids, s.r):
        d[sid] = built.tasks[sid].label(v) if sid in built.tasks else int(v)
    d["x"] = list(built.rc(s.x))
    d["t"] = int(s.t)
    return d


def compare_golden(metrics: dict, expected: dict) -> list[dict]:
    """Rows of {metric, expected, actual, tol, ok, tag}."""
    rows = []
    for key, spec in expected.items():
        actual = metrics.get(key)
        want, tol = spec["value"], spec.get("tol", 0.0)
        if isinstance(want, (int, float)) and not isinstance(want, bool):
            ok = isinstance(actual, (int, float)) and abs(float(actual) - float(want)) <= tol
        else:
            ok = actual == want
        rows.append(dict(metric=key, expected=want, actual=actual, tol=tol, ok=bool(ok), tag=spec.get("tag", "")))
    return rows


@dataclass
class PlanRun:
    built: Built
    report: Any
    tree: Any = None
    table: Any = None


def run_plan(built: Built, params: dict) -> tuple[PlanRun, dict]:
    """BFS (or explicit plans) and valence selection."""
    ont, start = built.ontology, built.start
    n, variant = params.get("n", 3), params.get("emp", "task")
    table = sublimation_table(ont, built.tasks.values()) if params.get("sublimate") else None
    emp_ont = ont.with_policies(params["emp_policies"]) if params.get("emp_policies") else None
    metrics: dict[str, Any] = {}
    tree = None
    if params.get("plans"):
        report = select_best_plan([tuple(p) for p in params["plans"]], ont, n, variant, start=start,
                                  emp_ont=emp_ont)
    else:
        tree = bfs_plan_search(ont, start, params.get("m", 2), table, params.get("skip_idle", False))
        report = select_best_plan(tree, ont, n, variant, emp_ont=emp_ont)
        metrics["expansions"] = tree.expansions
        metrics["leaves"] = len(tree.leaves)
    metrics["best"] = list(report.best.policies)
    metrics["best_valence"] = report.best.valence
    metrics["initial_empowerment"] = report.initial_empowerment
    for e in report.per_plan:
        metrics["valence[" + ",".join(e.policies) + "]"] = e.valence
    return PlanRun(built, report, tree, table), metrics


def report_json(run: PlanRun) -> dict:
    report, built = run.report, run.built
    out = report.to_dict()
    out["best"]["final_state"] = _state_json(built, report.best.final_state)
    for d, e in zip(out["plans"], report.per_plan):
        d["final_state"] = _state_json(built, e.final_state)
    return _jsonable(out)


def run_scenario(sc: Scenario) -> dict:
    """Dispatch on the pipeline and compare with golden values where present."""
    pipe = sc.pipeline
    if pipe == "lifelong":
        from .lifelong import run_lifelong_scenario
        result = run_lifelong_scenario(sc)
        metrics = result["metrics"]
    elif pipe == "empmap":
        result = run_empmap(sc)
        metrics = result["metrics"]
    else:
        run, metrics = run_plan(build(sc.doc), sc.params)
        name = sc.doc.get("analysis")
        if name is not None:
            if name not in ANALYSES:
                raise ScenarioError(f"unknown analysis {name!r}")
            metrics.update(ANALYSES[name](run, sc))
        result = {"report": report_json(run)}
    golden = compare_golden(metrics, sc.doc.get("expected", {}))
    result.update(scenario=sc.name, pipeline=pipe, metrics=_jsonable(metrics), golden=golden,
                  status="ok" if all(r["ok"] for r in golden) else "golden_mismatch")
    return result


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# ------------------------------------------------------------ empowerment maps


def run_empmap(sc: Scenario, ns=None, pool=None) -> dict:
    """Flat grid empowerment per horizon, plus the tagged-cell values.

    ``pool`` is an optional executor with a ``map`` method; horizons are
    independent and are computed in its workers.
    """
    built = build(sc.doc)
    base = built.ontology.base
    flat = base.restrict(built.ontology.mode(built.start.r))
    ns = list(ns or sc.params.get("ns", [1, 3, 5]))
    for n in ns:
        if n < 1:
            raise DomainError(f"empowerment horizon must be >= 1, got {n}")
    mapper = pool.map if pool is not None else map
    maps = dict(zip(ns, mapper(empowerment_map, [flat] * len(ns), ns)))
    metrics: dict[str, Any] = {}
    for tag, rc in sc.doc.get("tagged_cells", {}).items():
        for n in ns:
            metrics[f"E{n}[{tag}]"] = float(maps[n][built.cell(rc)])
    return {"maps": maps, "width": built.width, "height": built.height, "metrics": metrics}


def write_empmaps(result: dict, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for n, vals in result["maps"].items():
        p = out_dir / f"empmap_n{n}.csv"
        write_empmap_csv(vals, result["width"], result["height"], p)
        paths.append(p)
    return paths


# ---------------------------------------------------------- scenario analyses


def _marginal_counts(run: PlanRun, sc: Scenario) -> dict:
    """Reachable-cell counts behind marginal x empowerment at the start and after each plan."""
    built = run.built
    ont, n = built.ontology, sc.params.get("n", 3)
    out = {"count[start]": round(2 ** empowerment(ont, built.start, n, "marginal:x"))}
    for plan in sc.params.get("plans", []):
        (s, _), = plan_operator(ont, built.start, plan).items()
        out["count[" + ",".join(plan) + "]"] = round(2 ** empowerment(ont, s, n, "marginal:x"))
    return out


def _component(succ: np.ndarray, start: int) -> list[int]:
    """Cells reachable from ``start`` under a successor table."""
    seen, todo = {int(start)}, [int(start)]
    while todo:
        x = todo.pop()
        for y in succ[x]:
            if int(y) not in seen:
                seen.add(int(y))
                todo.append(int(y))
    return sorted(seen)


def _key_analysis(run: PlanRun, sc: Scenario) -> dict:
    """Task-space empowerment with and without the key, item value, and eat affordances.

    Affordances are counted over the agent's internal state, with and without
    the key, at every cell on the start cell's side of the closed door.
    """
    built = run.built
    ont, n = built.ontology, sc.params.get("n", 3)
    plan = sc.params["plans"][0]
    (s_key, _), = plan_operator(ont, built.start, plan).items()
    if sc.params.get("emp_policies"):
        ont = ont.with_policies(sc.params["emp_policies"])
    k = ont.space_index("phi")
    r0 = list(s_key.r)
    r0[k] = 0
    s_nokey = State(tuple(r0), s_key.x, s_key.t)
    after = {"key_state_count": round(2 ** empowerment(ont, s_key, n, "task"))}
    after["empowerment_pre_key"] = empowerment(ont, built.start, n, "task")
    after["empowerment_post_key"] = empowerment(ont, s_key, n, "task")
    after["item_value[phi]"] = item_value(ont, ont, s_key, s_nokey, n, "task")
    side = _component(ont.base.successors(0, ont.mode(built.start.r)), built.start.x)
    pool = [State(r, x, s_key.t) for r in (s_key.r, s_nokey.r) for x in side]
    af = affordance_set(ont, "eat", s_key.t, pool)
    after["eat_afforded_pre_key"] = sum(1 for (s, _) in af.members if s.r[k] == 0)
    after["eat_afforded_post_key"] = sum(1 for (s, _) in af.members if s.r[k] == 1)
    return after


def _sublimation_analysis(run: PlanRun, sc: Scenario) -> dict:
    """Expansions attributed to each task's policies."""
    out = {}
    for sid, task in run.built.tasks.items():
        goals = set(task.goal_map.values())
        out[f"expansions[{sid}]"] = sum(1 for nd in run.tree.nodes[1:] if nd.plan[-1] in goals)
    return out


def task_order(built: Built, plan) -> list[str]:
    """Task id of each policy in the plan (None for policies outside every task)."""
    owner = {g: sid for sid, t in built.tasks.items() for g in t.goal_map.values()}
    return [owner.get(g) for g in plan]


def is_interleaved(built: Built, plan) -> bool:
    """True when the task labels of the plan's task policies change more than once."""
    labels = [t for t in task_order(built, plan) if t is not None]
    switches = sum(1 for a, b in zip(labels, labels[1:]) if a != b)
    return switches > 1


def plan_survives(ont: Ontology, start: State, plan) -> tuple[bool, State]:
    """Every policy feasible under the hitting-time bound and no defective state along the way."""
    s = start
    for g in plan:
        if ont.zeta.is_defective(s.r) or not policy_feasible(ont, s, g):
            return False, s
        outs = goal_operator_step(ont, s, g)
        if len(outs) != 1:
            raise DomainError("survival check needs a deterministic goal operator")
        s = outs[0].state
    return not ont.zeta.is_defective(s.r), s


def sequential_plans(built: Built) -> list[tuple[str, ...]]:
    """Every plan that finishes one task's accepting order before starting the other's."""
    orders = {}
    for sid, task in built.tasks.items():
        acc = next(iter(task.accepting_states()))
        seqs = []
        for perm in itertools.permutations(range(task.bits)):
            s = 0
            ok = True
            for i in perm:
                mask = 1 << (task.bits - 1 - i)
                blocked = any(task.bit(s, j) for (a, j) in task.precedence if a == i)
                if blocked:
                    ok = False
                    break
                s |= mask
            if ok and s == acc:
                seqs.append(tuple(task.goal_map[i] for i in perm))
        orders[sid] = seqs
    ids = list(built.tasks)
    plans = []
    for first, second in itertools.permutations(ids, 2):
        for a in orders[first]:
            for b in orders[second]:
                plans.append(a + b)
    return plans


def _interleave_analysis(run: PlanRun, sc: Scenario) -> dict:
    """Is the chosen plan interleaved, alive and complete; are all task-sequential plans dead."""
    built = run.built
    ont = built.ontology
    best = run.report.best.policies
    alive, final = plan_survives(ont, built.start, best)
    done = all(final.r[ont.space_index(sid)] in t.accepting_states() for sid, t in built.tasks.items())
    seq = sequential_plans(built)
    return {"best_interleaved": is_interleaved(built, best), "best_alive": alive,
            "best_completes_all": done, "sequential_plans": len(seq),
            "sequential_all_dead": all(not plan_survives(ont, built.start, p)[0] for p in seq)}


ANALYSES = {
    "marginal_counts": _marginal_counts,
    "key": _key_analysis,
    "sublimation": _sublimation_analysis,
    "interleave": _interleave_analysis,
}


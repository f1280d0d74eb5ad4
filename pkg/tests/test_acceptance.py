"""Acceptance suite: one test per criterion, summarized at the end of the run."""

import itertools
import math
import time

import numpy as np
import pytest

from helpers import (
    dense_kappa,
    random_bog_ontology,
    random_ontology,
    random_start,
    random_stochastic_operator,
    random_tgmdp,
)
from spa.baseline import scaling_benchmark
from spa.core import (
    ActionSet,
    AvailabilityFn,
    StateSpace,
    TgMdp,
    TransitionOperator,
    make_chain_space,
    validate_operator,
)
from spa.empowerment import channel_from_operator, empowerment_blahut_arimoto, empowerment_deterministic
from spa.feasibility import compose_stffs, feasibility_iteration, forward_rollout_failure, kappa_from_eta
from spa.hierarchy import (
    Goal,
    Ontology,
    PredictionOperator,
    bog_sublimated_kappa,
    chain_hitting_times,
    compose_product_operator,
    factorized_success,
    hierarchical_obe_oracle,
    hitting_times,
    oracle_success,
)
from spa.planning import (
    bfs_plan_search,
    empowerment_table,
    hsm_vbe_solve,
    one_step_valence,
    open_loop_best,
    select_best_plan,
    sublimation_table,
    vbe_solve,
)
from spa.scenarios import load_scenario, run_scenario


def _run(name):
    t0 = time.perf_counter()
    result = run_scenario(load_scenario(name))
    return result, time.perf_counter() - t0


@pytest.mark.criterion(1, "hikers: exact marginal counts, valences within 0.01, best plan, < 1 s")
def test_criterion_01_hikers():
    r, secs = _run("hikers")
    m = r["metrics"]
    assert (m["count[start]"], m["count[fire1,g2]"], m["count[fire2,g4]"]) == (13, 5, 25)
    assert m["initial_empowerment"] == math.log2(13)
    assert abs(m["valence[fire1,g2]"] - (-1.37)) <= 0.01
    assert abs(m["valence[fire2,g4]"] - 0.94) <= 0.01
    assert m["best"] == ["fire2", "g4"]
    assert secs < 1.0


@pytest.mark.criterion(2, "mountain key: 0 bits pre-key, 3 bits post-key, item value 3, eat afforded post-key only, < 1 s")
def test_criterion_02_mountain_key():
    r, secs = _run("mountain_key")
    m = r["metrics"]
    assert m["empowerment_pre_key"] == 0.0
    assert m["empowerment_post_key"] == 3.0
    assert m["key_state_count"] == 8
    assert m["item_value[phi]"] == 3.0
    assert m["eat_afforded_pre_key"] == 0 and m["eat_afforded_post_key"] > 0
    assert secs < 1.0


@pytest.mark.criterion(3, "kappa-eta identity and termination normalization on 100 random TG-MDPs within 1e-9, < 10 s")
def test_criterion_03_kappa_eta():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_id = worst_norm = worst_oracle = worst_roll = 0.0
    for _ in range(100):
        prob = random_tgmdp(rng, max_states=12, max_horizon=15)
        sol = feasibility_iteration(prob)
        worst_id = max(worst_id, np.abs(kappa_from_eta(sol.stff) - sol.kappa).max())
        worst_norm = max(worst_norm, np.abs(sol.stff.total_mass() - 1.0).max())
        worst_oracle = max(worst_oracle, np.abs(dense_kappa(prob) - sol.kappa).max())
        roll = forward_rollout_failure(prob, sol.policy, sol.kappa)
        worst_roll = max(worst_roll, max(abs(a - b).max() if (a - b).nnz else 0.0
                                         for a, b in zip(roll, sol.stff.failure)))
    secs = time.perf_counter() - t0
    assert worst_id <= 1e-9
    assert worst_norm <= 1e-9
    assert worst_oracle <= 1e-9
    assert worst_roll <= 1e-9
    assert secs < 10.0


@pytest.mark.criterion(4, "factorized success events equal the product oracle on 20 instances, < 60 s")
def test_criterion_04_decomposition_oracle():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    checked = skipped = 0
    worst = {0.0: 0.0, 0.2: 0.0}
    for inst in range(20):
        slip = 0.0 if inst % 2 == 0 else 0.2
        ont = random_ontology(rng, slip, max_side=4, max_chains=2, max_chain=5, max_T=20)
        prod = compose_product_operator(ont)
        fbar = prod.lift(ont.availability("g0"))
        sol = hierarchical_obe_oracle(prod, fbar, ont.horizon, "g0")
        for r in itertools.product(*[range(op.n_states) for op in ont.spaces]):
            for x in range(ont.base.n_states):
                for t in range(0, ont.horizon + 1, 3):
                    fs = factorized_success(ont, "g0", r, x, t)
                    if fs is None:
                        skipped += 1
                        continue
                    os_ = oracle_success(prod, sol, r, x, t)
                    err = max((abs(fs.get(k, 0.0) - os_.get(k, 0.0)) for k in set(fs) | set(os_)), default=0.0)
                    worst[slip] = max(worst[slip], err)
                    checked += 1
    secs = time.perf_counter() - t0
    assert checked > 1000 and skipped > 0
    assert worst[0.0] == 0.0
    assert worst[0.2] <= 1e-9
    assert secs < 60.0


def _accepting_fbar(prod, task, n_actions, horizon):
    acc = np.array([prod.unravel(s)[0][1] in task.accepting_states() for s in range(prod.n_states)], dtype=float)
    return np.broadcast_to(acc[:, None, None], (prod.n_states, n_actions, horizon + 1)).copy()


@pytest.mark.criterion(5, "sublimation bound, task 1 never expanded, D,E,F order, pruning keeps successful leaves, < 30 s")
def test_criterion_05_sublimation():
    t0 = time.perf_counter()
    r, _ = _run("sublimation_two_tasks")
    assert r["metrics"]["expansions[task1]"] == 0
    assert r["metrics"]["best"] == ["D", "E", "F"]
    rng = np.random.default_rng(5)
    worst = -np.inf
    pruned_instances = 0
    for _ in range(20):
        ont, task, start = random_bog_ontology(rng)
        prod = compose_product_operator(ont)
        T = ont.horizon
        kbar = hierarchical_obe_oracle(prod, _accepting_fbar(prod, task, ont.base.n_actions, T), T).kappa
        ksub = bog_sublimated_kappa(task, T)
        sigma = np.array([prod.unravel(s)[0][1] for s in range(prod.n_states)])
        worst = max(worst, (kbar - ksub[sigma]).max())
        full = bfs_plan_search(ont, start, 3)
        pruned = bfs_plan_search(ont, start, 3, sublimation_table(ont, [task]))
        ok = task.accepting_states()
        assert ({nd.plan for nd in full.leaves if nd.state.r[1] in ok}
                == {nd.plan for nd in pruned.leaves if nd.state.r[1] in ok})
        pruned_instances += any(nd.pruned for nd in pruned.nodes)
    assert worst <= 1e-9
    assert pruned_instances > 0
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(6, "diffusion empowerment equals Blahut-Arimoto within 1e-6, uniform rows give 0, < 30 s")
def test_criterion_06_empowerment_cross_oracle():
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    worst, cases = 0.0, 0
    for _ in range(150):
        n = int(rng.integers(1, 17))
        op = random_stochastic_operator(rng, n, int(rng.integers(1, 5)), deterministic=True)
        for x in rng.choice(n, size=min(n, 3), replace=False):
            for h in (1, 2, 3):
                det = empowerment_deterministic(op, int(x), h)
                ba = empowerment_blahut_arimoto(channel_from_operator(op, int(x), h))
                worst = max(worst, abs(det - ba))
                cases += 1
    for k in range(1, 30):
        row = rng.random(int(rng.integers(1, 20)))
        assert abs(empowerment_blahut_arimoto(np.tile(row / row.sum(), (k, 1)))) <= 1e-12
    assert cases > 400
    assert worst <= 1e-6
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(7, "VBE path independence within 1e-9, hsm equals best BFS valence, upper bound under stochastic F, < 120 s")
def test_criterion_07_vbe():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for inst in range(10):
        ont = random_ontology(rng, 0.0 if inst % 2 == 0 else 0.2, max_side=3, max_chains=1, max_chain=4, max_T=8)
        prod = compose_product_operator(ont)
        T = ont.horizon
        assert prod.n_states * (T + 1) <= 10**4
        sol = vbe_solve(prod, 2, T)
        worst = max(worst, np.abs(sol.nu[:, 0] - (sol.final_operator @ sol.emp[:, T] - sol.emp[:, 0])).max())
    assert worst <= 1e-9
    for _ in range(10):
        ont = random_ontology(rng, 0.0, single_goal=False, max_side=3, max_chains=2, max_chain=5, max_T=15)
        s = random_start(rng, ont)
        h = hsm_vbe_solve(ont, s, 2, 2)
        best = select_best_plan(bfs_plan_search(ont, s, 2), ont, 2).best.valence
        assert h.value == best
    for _ in range(6):
        det = random_ontology(rng, 0.0, single_goal=False, max_side=3, max_chains=2, max_chain=5, max_T=12, n_goals=2)
        soft = _soften(det, 0.6)
        s = random_start(rng, soft)
        h = hsm_vbe_solve(soft, s, 3, 2, policy_filter="all", emp_ont=det)
        open_loop, _ = open_loop_best(soft, s, 3, 2, emp_ont=det)
        assert h.value >= open_loop - 1e-12
    assert time.perf_counter() - t0 < 120.0


def _soften(ont, p):
    goals = [Goal(g.id, AvailabilityFn(g.id, {k: p for k in g.availability.entries}), g.effects)
             for g in ont.goals.values()]
    return Ontology(ont.base, ont.spaces, goals, ont.zeta, ont.horizon)


@pytest.mark.criterion(8, "interleaved plan completes both tasks alive, every sequential plan dies, < 120 s")
def test_criterion_08_interleave():
    r, secs = _run("interleave_bog")
    m = r["metrics"]
    assert m["best_interleaved"] and m["best_alive"] and m["best_completes_all"]
    assert m["sequential_all_dead"]
    assert secs < 120.0


@pytest.mark.criterion(9, "transfer: 3 observations with re-plans, then 0 observations and a 6-policy plan, ablation has no plan, < 60 s")
def test_criterion_09_lifelong():
    r, secs = _run("stoffel_transfer")
    m = r["metrics"]
    assert m["env1.observations"] == 3
    assert m["env1.replans_after_observation"] == 3
    assert m["env2.observations"] == 0
    assert m["env2.first_plan_length"] == 6 and m["env2.first_plan"][-1] == "hammie"
    assert m["env2.outcome"] == "target_reached"
    assert m["env2.ablation_surviving_plans"] == 0
    assert secs < 60.0


def _growth(rows, method):
    """exp of the least-squares slope of log(median seconds) on the space count."""
    counts = sorted({r["num_secondary"] for r in rows if r["method"] == method})
    med = [np.median([r["seconds"] for r in rows if r["method"] == method and r["num_secondary"] == k])
           for k in counts]
    slope = np.polyfit(counts, np.log(med), 1)[0]
    return float(np.exp(slope)), med


@pytest.mark.criterion(10, "scaling: IHDR fitted growth >= 5x per space, SPA <= 3x, SPA finishes 6 spaces past the IHDR guard, < 10 min")
def test_criterion_10_scaling():
    t0 = time.perf_counter()
    rows = scaling_benchmark(range(1, 5), trials=3, seed=0)
    assert all(r["status"] == "ok" for r in rows)
    ihdr, ihdr_med = _growth(rows, "ihdr")
    spa, spa_med = _growth(rows, "spa")
    print(f"ihdr medians {ihdr_med} fitted factor {ihdr:.2f}; spa medians {spa_med} fitted factor {spa:.2f}")
    big = {r["method"]: r for r in scaling_benchmark([6], trials=1, seed=0)}
    assert ihdr >= 5.0
    assert spa <= 3.0
    assert big["ihdr"]["status"].startswith("exceeded")
    assert big["spa"]["status"] == "ok"
    assert time.perf_counter() - t0 < 600.0


def _chain_null_op(rng, n):
    space = StateSpace("y", n)
    acts = ActionSet("y_actions", ("null", "other"), 0)
    mats = []
    for _ in range(2):
        m = rng.random((n, n)) * (rng.random((n, n)) < 0.4)
        m[np.arange(n), rng.integers(n, size=n)] += 0.1
        mats.append(m / m.sum(axis=1, keepdims=True))
    return TransitionOperator(space, acts, {"normal": mats})


@pytest.mark.criterion(11, "property suites over 1,000 randomized cases each, < 60 s")
def test_criterion_11_properties():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    cases = 1000
    for _ in range(cases):
        op = random_stochastic_operator(rng, int(rng.integers(1, 20)), int(rng.integers(1, 5)),
                                        deterministic=bool(rng.integers(2)))
        assert validate_operator(op) == []
    for _ in range(cases):
        op = _chain_null_op(rng, int(rng.integers(2, 10)))
        omega = PredictionOperator(op, 30)
        assert np.array_equal(omega.matrix(0).toarray(), np.eye(op.n_states))
        td = int(rng.integers(0, 30))
        assert np.abs(np.asarray(omega.matrix(td).sum(axis=1)).ravel() - 1.0).max() <= 1e-9
    for _ in range(cases):
        size = int(rng.integers(2, 60))
        chain = make_chain_space(size)
        assert np.array_equal(hitting_times(chain, [0]), chain_hitting_times(size))
        omega = PredictionOperator(chain, 100)
        y, td = int(rng.integers(size)), int(rng.integers(0, 100))
        assert omega.index(y, td) == max(y - td, 0)
    for _ in range(cases):
        n, k = int(rng.integers(1, 17)), int(rng.integers(1, 4))
        op = random_stochastic_operator(rng, n, k, deterministic=True)
        bigger = TransitionOperator(op.space, ActionSet("a", op.actions.actions + ("extra",), 0),
                                    {"normal": [op.matrix(a) for a in range(k)]
                                     + [np.eye(n)[rng.integers(n, size=n)]]})
        x, h = int(rng.integers(n)), int(rng.integers(1, 4))
        assert empowerment_deterministic(bigger, x, h) >= empowerment_deterministic(op, x, h)
    for _ in range(cases):
        n, T = int(rng.integers(2, 7)), int(rng.integers(0, 7))
        op = random_stochastic_operator(rng, n, 2)
        f1 = (rng.random((n, 2, T + 1)) < 0.3) * rng.random((n, 2, T + 1))
        f2 = (rng.random((n, 2, T + 1)) < 0.3) * rng.random((n, 2, T + 1))
        a = feasibility_iteration(TgMdp(op, f1, T)).stff
        b = feasibility_iteration(TgMdp(op, f2, T)).stff
        c = compose_stffs(a, b)
        assert np.abs(c.total_mass() - 1.0).max() <= 1e-9
        assert np.all(kappa_from_eta(c) <= kappa_from_eta(a) + 1e-12)
        for t in range(T + 1):
            for mat in (c.success[t], c.failure[t]):
                assert np.all(mat.data >= 0)
                assert np.all(mat.indices // n >= t)
    for _ in range(cases):
        n, T = int(rng.integers(2, 10)), int(rng.integers(1, 8))
        op = random_stochastic_operator(rng, n, int(rng.integers(1, 4)), deterministic=True)
        E = empowerment_table(op, int(rng.integers(1, 3)), T)
        s = s0 = int(rng.integers(n))
        total = 0.0
        for t in range(T):
            a = int(rng.integers(op.n_actions))
            total += one_step_valence(op, E, s, t, a)
            s = int(op.successors()[s, a])
        assert abs(total - (E[s, T] - E[s0, 0])) <= 1e-9
    assert time.perf_counter() - t0 < 60.0

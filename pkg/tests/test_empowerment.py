import math

import numpy as np
import pytest

from helpers import grid_operator, random_stochastic_operator
from spa.core import GRID_ACTIONS, AvailabilityFn, CapacityError, DomainError, make_chain_space, make_gridworld
from spa.empowerment import (
    channel_from_operator,
    empowerment,
    empowerment_blahut_arimoto,
    empowerment_deterministic,
    empowerment_factorized,
    empowerment_map,
    empowerment_product,
    reachable_flat,
    write_empmap_csv,
)
from spa.hierarchy import Goal, ModeFunction, Ontology, State

STAY = GRID_ACTIONS.index("stay")


def test_open_grid_map():
    op = make_gridworld(3, 3)
    e1 = empowerment_map(op, 1)
    assert e1[4] == math.log2(5) and e1[0] == math.log2(3) and e1[1] == math.log2(4)
    e2 = empowerment_map(op, 2)
    assert e2[4] == math.log2(9)


def test_reachable_flat_stops_at_horizon():
    op = make_gridworld(5, 1)
    assert reachable_flat(op, 2, 3, t=0, horizon=1) == {(1, 1), (2, 1), (3, 1)}
    assert empowerment_deterministic(op, 2, 3, t=0, horizon=1) == math.log2(3)


def test_blahut_arimoto_known_channels():
    assert empowerment_blahut_arimoto(np.eye(4)) == pytest.approx(2.0, abs=1e-6)
    eps = 0.1
    bsc = np.array([[1 - eps, eps], [eps, 1 - eps]])
    h = -eps * math.log2(eps) - (1 - eps) * math.log2(1 - eps)
    assert empowerment_blahut_arimoto(bsc) == pytest.approx(1 - h, abs=1e-6)
    # Z channel capacity log2(1 + (1-p) p^(p/(1-p))) with p = 1/2
    z = np.array([[1.0, 0.0], [0.5, 0.5]])
    assert empowerment_blahut_arimoto(z) == pytest.approx(math.log2(1.25), abs=1e-6)


def test_blahut_arimoto_guards():
    with pytest.raises(DomainError):
        empowerment_blahut_arimoto(np.ones(3))
    with pytest.raises(DomainError):
        empowerment_blahut_arimoto(np.array([[0.5, 0.4]]))
    with pytest.raises(CapacityError):
        empowerment_blahut_arimoto(np.full((10_001, 1), 1.0))
    op = make_gridworld(2, 2)
    with pytest.raises(CapacityError):
        channel_from_operator(op, 0, 6)


def test_horizon_must_be_positive():
    with pytest.raises(DomainError):
        empowerment_map(make_gridworld(2, 2), 0)


def test_stochastic_falls_back_to_blahut_arimoto():
    rng = np.random.default_rng(0)
    op = random_stochastic_operator(rng, 5, 3)
    assert not op.deterministic
    direct = empowerment_blahut_arimoto(channel_from_operator(op, 1, 2))
    assert empowerment_deterministic(op, 1, 2) == direct
    with pytest.raises(DomainError):
        empowerment_map(op, 1)


def test_slip_reduces_capacity():
    det = grid_operator(3, 3).restrict("normal")
    slip = grid_operator(3, 3, slip=0.3).restrict("normal")
    assert empowerment_deterministic(slip, 4, 1) < empowerment_deterministic(det, 4, 1)


def _two_goal_corridor(T=20):
    base = grid_operator(5, 1)
    chain = make_chain_space(8, space_id="y")
    gs = [Goal("left", AvailabilityFn.at_states("left", [0], len(GRID_ACTIONS), T, actions=[STAY]), {"y": 1}),
          Goal("right", AvailabilityFn.at_states("right", [4], len(GRID_ACTIONS), T, actions=[STAY]), {})]
    return Ontology(base, [chain], gs, ModeFunction(["y"], {"y": [0]}), T)


def test_factorized_counts_policy_outcomes():
    ont = _two_goal_corridor()
    s = State((7,), 2, 0)
    # left ends at (y=7, x=0, t=3); right ends at (y=4, x=4, t=3)
    assert empowerment_factorized(ont, s, 1) == 1.0
    assert empowerment(ont, s, 1, "task") == 1.0
    assert empowerment(ont, s, 2, "task") == math.log2(4)


def test_marginal_and_product_variants():
    ont = _two_goal_corridor()
    s = State((7,), 2, 0)
    # primitive steps: three cells, one chain value
    assert empowerment(ont, s, 1, "marginal:x") == math.log2(3)
    assert empowerment(ont, s, 1, "marginal:y") == 0.0
    assert empowerment(ont, s, 1, "full") == empowerment_product(ont, s, 1) == math.log2(3)
    with pytest.raises(DomainError):
        empowerment(ont, s, 1, "bogus")


def test_empmap_csv(tmp_path):
    p = tmp_path / "m.csv"
    write_empmap_csv(np.arange(6, dtype=float), 3, 2, p)
    assert p.read_text().splitlines() == ["0.000000,1.000000,2.000000", "3.000000,4.000000,5.000000"]

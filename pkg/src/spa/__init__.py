"""Factorized goal-conditioned planning with empowerment as the value signal.

Submodules: ``core`` (spaces, operators, availability), ``feasibility``
(finite-horizon goal feasibility), ``hierarchy`` (factorized ontology and
goal operator), ``empowerment``, ``planning`` (plan search and valence),
``lifelong``, ``baseline`` (discounted value iteration and benchmarks),
``scenarios`` and ``cli``.
"""

from .core import (
    ActionAvailabilityFn,
    ActionSet,
    AvailabilityFn,
    CapacityError,
    DomainError,
    StateSpace,
    TgMdp,
    TransitionOperator,
    make_chain_space,
    make_gridworld,
)
from .empowerment import empowerment, empowerment_blahut_arimoto, empowerment_map
from .feasibility import FeasibilitySolution, Stff, feasibility_iteration
from .hierarchy import BogTask, Goal, ModeFunction, Ontology, SecondOrderRule, State, goal_operator_step
from .planning import bfs_plan_search, item_value, select_best_plan, valence
from .scenarios import load_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ActionAvailabilityFn", "ActionSet", "AvailabilityFn", "BogTask", "CapacityError", "DomainError",
    "FeasibilitySolution", "Goal", "ModeFunction", "Ontology", "SecondOrderRule", "State", "StateSpace",
    "Stff", "TgMdp", "TransitionOperator", "bfs_plan_search", "empowerment", "empowerment_blahut_arimoto",
    "empowerment_map", "feasibility_iteration", "goal_operator_step", "item_value", "load_scenario",
    "make_chain_space", "make_gridworld", "run_scenario", "select_best_plan", "valence",
]

"""Built-in scenario documents.

Cells are ``[row, col]``. Each document carries its expected metrics with
tolerances; ``spa solve --builtin NAME`` exits 2 when one of them drifts.
"""

from __future__ import annotations

import math

STAY = ["stay"]


def _av(goal, row, col, actions=STAY, **extra):
    d = {"goal": goal, "x": [[row, col]], "a": actions}
    d.update(extra)
    return d


def _exact(value, tag):
    return {"value": value, "tol": 0.0, "tag": tag}


def _near(value, tol, tag):
    return {"value": value, "tol": tol, "tag": tag}


HIKERS = {
    "name": "hikers",
    "description": (
        "Two hikers on a 15x15 open field share a warmth chain of 8 states that cools by one per step. "
        "Plan fire1,g2 warms up west of the start and ends at the far west edge; plan fire2,g4 warms up "
        "east of the start and ends next to a cabin that warms again. Empowerment is the number of grid "
        "cells reachable in 3 policies, so the east plan keeps more options open."
    ),
    "horizon": 30,
    "analysis": "marginal_counts",
    "spaces": [
        {"id": "x", "kind": "grid", "params": {"width": 15, "height": 15}},
        {"id": "z", "kind": "chain", "params": {"size": 8}, "defective": [0]},
    ],
    "goals": [
        {"id": "fire1", "effects": {"z": "active"}},
        {"id": "g2"},
        {"id": "fire2", "effects": {"z": "active"}},
        {"id": "g4"},
        {"id": "cabin", "effects": {"z": "active"}},
    ],
    "availability": [_av("fire1", 7, 6), _av("g2", 7, 1), _av("fire2", 7, 8), _av("g4", 4, 8),
                     _av("cabin", 4, 10)],
    "agent_start": {"r": {"z": 2}, "x": [7, 7]},
    "params": {"n": 3, "emp": "marginal:x", "plans": [["fire1", "g2"], ["fire2", "g4"]]},
    "expected": {
        "count[start]": _exact(13, "reachable cells from the start"),
        "count[fire1,g2]": _exact(5, "reachable cells after the west plan"),
        "count[fire2,g4]": _exact(25, "reachable cells after the east plan"),
        "valence[fire1,g2]": _near(math.log2(5 / 13), 0.01, "west plan valence"),
        "valence[fire2,g4]": _near(math.log2(25 / 13), 0.01, "east plan valence"),
        "best": _exact(["fire2", "g4"], "valence maximizer"),
    },
}

MOUNTAIN_KEY = {
    "name": "mountain_key",
    "description": (
        "A 7x5 valley split by a mountain ridge in column 3 with one door at (2,3) that is closed while the "
        "agent holds no key (object state phi0). The lake (2,1) and the dwarf with the key (4,1) are on the "
        "start side; the tree (2,5) is behind the door. Drinking is triggered by stepping right off the lake. "
        "Task-space empowerment over {drink, eat} with n=3 counts distinct outcomes: one without the key "
        "(only drinking is possible) and eight with it."
    ),
    "horizon": 40,
    "analysis": "key",
    "spaces": [
        {"id": "x", "kind": "grid", "params": {"width": 7, "height": 5,
                                                "walls": [[0, 3], [1, 3], [3, 3], [4, 3]],
                                                "mode_walls": {"phi0": [[2, 3]]}}},
        {"id": "w", "kind": "chain", "params": {"size": 15}, "defective": [0]},
        {"id": "y", "kind": "chain", "params": {"size": 15}, "defective": [0]},
        {"id": "phi", "kind": "bits", "params": {"bits": 1, "accepting": ["1"], "goal_map": {"0": "key"}}},
    ],
    "modes": ["defective", "phi0", "phi1"],
    "zeta": {"tables": {"phi": {"0": "phi0", "1": "phi1"}}},
    "goals": [{"id": "drink", "effects": {"w": "active"}}, {"id": "eat", "effects": {"y": "active"}},
              {"id": "key"}],
    "availability": [_av("drink", 2, 1, ["right"]), _av("eat", 2, 5), _av("key", 4, 1)],
    "agent_start": {"r": {"w": 14, "y": 14, "phi": "0"}, "x": [2, 1]},
    "params": {"n": 3, "emp": "task", "emp_policies": ["drink", "eat"], "plans": [["key", "drink"]]},
    "expected": {
        "empowerment_pre_key": _near(0.0, 1e-12, "no reachable variety before the key"),
        "empowerment_post_key": _near(3.0, 1e-12, "eight outcomes with the key"),
        "key_state_count": _exact(8, "distinct state-times after 3 policies"),
        "item_value[phi]": _near(3.0, 1e-12, "value of holding the key"),
        "eat_afforded_pre_key": _exact(0, "eat unreachable without the key"),
        "eat_afforded_post_key": _exact(15, "eat afforded from every start-side cell"),
    },
}


def _line(goal, col, **extra):
    return _av(goal, 0, col, **extra)


SUBLIMATION = {
    "name": "sublimation_two_tasks",
    "description": (
        "An 18x1 corridor with two three-bit ordered tasks. Task 1 (A, B, C at columns 15-17) has a cyclic "
        "precedence that makes completion impossible, so sublimation prunes all of its policies. Task 2 "
        "(D, E, F at columns 5, 7, 9) needs D before E and F; completing it refills the energy chain."
    ),
    "horizon": 40,
    "analysis": "sublimation",
    "spaces": [
        {"id": "x", "kind": "grid", "params": {"width": 18, "height": 1}},
        {"id": "y", "kind": "chain", "params": {"size": 20}, "defective": [0]},
        {"id": "task1", "kind": "bits", "params": {"bits": 3, "accepting": ["111"],
                                                    "precedence": [[0, 1], [1, 2], [2, 0]],
                                                    "goal_map": {"0": "A", "1": "B", "2": "C"}}},
        {"id": "task2", "kind": "bits", "params": {"bits": 3, "accepting": ["111"],
                                                    "precedence": [[0, 1], [0, 2]],
                                                    "goal_map": {"0": "D", "1": "E", "2": "F"}}},
    ],
    "goals": [{"id": g} for g in "ABCDEF"],
    "availability": [_line("A", 15), _line("B", 16), _line("C", 17), _line("D", 5), _line("E", 7),
                     _line("F", 9)],
    "second_order": [{"space": "task2", "accepting": ["111"], "effects": {"y": "active"}}],
    "agent_start": {"r": {"y": 10, "task1": "000", "task2": "000"}, "x": [0, 3]},
    "params": {"m": 3, "n": 1, "emp": "task", "sublimate": True},
    "expected": {
        "expansions[task1]": _exact(0, "impossible task never expanded"),
        "best": _exact(["D", "E", "F"], "task 2 order"),
    },
}

INTERLEAVE = {
    "name": "interleave_bog",
    "description": (
        "A 31x1 corridor with two ordered tasks and 55-state hunger and thirst chains. Coconut needs knife "
        "and ladder first; tea needs water and kettle before the fire, which is only lit until t=50. "
        "Items sit at water 5, knife 10, kettle 15, ladder 20, fire 25, coconut 30. Finishing either task "
        "sequentially wastes so much walking that the agent starves or dehydrates; interleaving on a "
        "single pass survives."
    ),
    "horizon": 80,
    "analysis": "interleave",
    "spaces": [
        {"id": "x", "kind": "grid", "params": {"width": 31, "height": 1}},
        {"id": "hunger", "kind": "chain", "params": {"size": 55}, "defective": [0]},
        {"id": "thirst", "kind": "chain", "params": {"size": 55}, "defective": [0]},
        {"id": "coconut_task", "kind": "bits", "params": {
            "bits": 3, "accepting": ["111"], "precedence": [[0, 2], [1, 2]],
            "goal_map": {"0": "knife", "1": "ladder", "2": "coconut"}}},
        {"id": "tea_task", "kind": "bits", "params": {
            "bits": 3, "accepting": ["111"], "precedence": [[0, 2], [1, 2]],
            "goal_map": {"0": "water", "1": "kettle", "2": "fire"}}},
    ],
    "goals": [{"id": g} for g in ["knife", "ladder", "coconut", "water", "kettle", "fire"]],
    "availability": [_line("water", 5), _line("knife", 10), _line("kettle", 15), _line("ladder", 20),
                     _line("fire", 25, t_window=[0, 50]), _line("coconut", 30)],
    "second_order": [{"space": "coconut_task", "accepting": ["111"], "effects": {"hunger": "active"}},
                     {"space": "tea_task", "accepting": ["111"], "effects": {"thirst": "active"}}],
    "agent_start": {"r": {"hunger": 54, "thirst": 54, "coconut_task": "000", "tea_task": "000"}, "x": [0, 0]},
    "params": {"m": 6, "n": 3, "emp": "task", "sublimate": True, "skip_idle": True},
    "expected": {
        "best": _exact(["water", "knife", "kettle", "ladder", "fire", "coconut"], "single interleaved pass"),
        "best_interleaved": _exact(True, "plan switches tasks more than once"),
        "best_alive": _exact(True, "no defective state on the way"),
        "best_completes_all": _exact(True, "both tasks accepting"),
        "sequential_all_dead": _exact(True, "every task-sequential plan dies"),
    },
}


def _room_walls():
    ring = [[0, c] for c in range(5)] + [[4, c] for c in range(5)]
    ring += [[r, 0] for r in range(1, 4)] + [[r, 4] for r in range(1, 4)]
    return ring + [[5, 7], [5, 9]]


EMPOWERMENT_MAP = {
    "name": "empowerment_map",
    "description": (
        "A 13x7 grid with a sealed 3x3 room in the top-left corner and a short slot at (5,8) between two "
        "wall cells. Cell A in the room centre reaches 5 cells in one step but only the 9 room cells at "
        "any horizon; cell B in the slot reaches only 3 cells in one step but many more at horizon 5."
    ),
    "pipeline": "empmap",
    "horizon": 10,
    "spaces": [{"id": "x", "kind": "grid", "params": {"width": 13, "height": 7, "walls": _room_walls()}}],
    "goals": [],
    "agent_start": {"x": [2, 2]},
    "params": {"ns": [1, 3, 5]},
    "tagged_cells": {"A": [2, 2], "B": [5, 8]},
    "expected": {
        "E1[A]": _near(math.log2(5), 1e-12, "room centre, one step"),
        "E5[A]": _near(math.log2(9), 1e-12, "room is sealed"),
        "E1[B]": _near(math.log2(3), 1e-12, "slot, one step"),
        "E5[B]": _near(math.log2(38), 1e-12, "slot opens up at horizon 5"),
    },
}


def _corridor_goals():
    return [{"id": "key", "feature": ["dwarf"]}, {"id": "lake1", "feature": ["lake"]},
            {"id": "tree1", "feature": ["tree"]}, {"id": "lake2", "feature": ["lake"]},
            {"id": "tree2", "feature": ["tree"]}, {"id": "hammie", "feature": ["hammie"]}]


LIFELONG = {
    "name": "stoffel_transfer",
    "description": (
        "Two environments sharing water and food chains of 15 states and a one-bit key state. The agent "
        "starts knowing only null dynamics. In the mountain valley it learns what lakes, dwarves and trees "
        "do. In the 26-cell corridor every feature except Hammie is known: a door at column 2 opens only "
        "with the key, and reaching Hammie at column 25 needs the key, two drinks and two meals in order. "
        "The unknown-feature prior is 3 bits so that Hammie outweighs the options lost on the long walk."
    ),
    "pipeline": "lifelong",
    "horizon": 60,
    "spaces": [
        {"id": "w", "kind": "chain", "params": {"size": 15}, "defective": [0]},
        {"id": "y", "kind": "chain", "params": {"size": 15}, "defective": [0]},
        {"id": "phi", "kind": "bits", "params": {"bits": 1}},
    ],
    "modes": ["defective", "phi0", "phi1"],
    "zeta": {"tables": {"phi": {"0": "phi0", "1": "phi1"}}},
    "psi": {
        "lake": {"space": "w", "kind": "jump_to_top"},
        "tree": {"space": "y", "kind": "jump_to_top"},
        "dwarf": {"space": "phi", "kind": "bit_flip", "bit": 0},
    },
    "params": {"n": 1, "emp": "task", "prior": 3.0, "ablate": ["dwarf"]},
    "environments": [
        {
            "name": "mountain",
            "description": "Mountain valley with the dwarf one cell below the lake and the tree behind the door.",
            "m": 2,
            "max_steps": 8,
            "grid": {"id": "x", "kind": "grid", "params": {
                "width": 7, "height": 5, "walls": [[0, 3], [1, 3], [3, 3], [4, 3]],
                "mode_walls": {"phi0": [[2, 3]]}}},
            "goals": [{"id": "drink", "feature": ["lake"]}, {"id": "eat", "feature": ["tree"]},
                      {"id": "key", "feature": ["dwarf"]}],
            "availability": [_av("drink", 2, 1, ["right"]), _av("eat", 2, 5), _av("key", 3, 1)],
            "agent_start": {"r": {"w": 14, "y": 14, "phi": "0"}, "x": [2, 1]},
        },
        {
            "name": "corridor",
            "description": "Corridor with the dwarf at column 0, the door at 2 and Hammie at 25.",
            "m": 6,
            "max_steps": 6,
            "target": "hammie",
            "grid": {"id": "x", "kind": "grid", "params": {"width": 26, "height": 1,
                                                            "mode_walls": {"phi0": [[0, 2]]}}},
            "goals": _corridor_goals(),
            "availability": [_line("key", 0), _line("lake1", 4), _line("tree1", 8), _line("lake2", 15),
                             _line("tree2", 19), _line("hammie", 25)],
            "agent_start": {"r": {"w": 14, "y": 14, "phi": "0"}, "x": [0, 1]},
        },
    ],
    "expected": {
        "env1.observations": _exact(3, "lake, dwarf and tree observed"),
        "env1.replans_after_observation": _exact(3, "each observation triggers a re-plan"),
        "env2.observations": _exact(0, "nothing new to learn"),
        "env2.first_plan": _exact(["key", "lake1", "tree1", "lake2", "tree2", "hammie"], "six chained policies"),
        "env2.outcome": _exact("target_reached", "Hammie reached"),
        "env2.ablation_surviving_plans": _exact(0, "no route without the key binding"),
    },
}

BUILTINS = {d["name"]: d for d in (HIKERS, MOUNTAIN_KEY, SUBLIMATION, INTERLEAVE, EMPOWERMENT_MAP, LIFELONG)}

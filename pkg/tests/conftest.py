"""Shared fixtures: bundled task access and a seeded program generator."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from armloop.dsl.ast import (
    API_SIGNATURES,
    CallStmt,
    FpRef,
    ParallelStmt,
    PoseLit,
    Program,
    SubgoalBlock,
    renumber,
)
from armloop.scene import load_task_spec

TASKS_DIR = Path(__file__).resolve().parents[1] / "src" / "armloop" / "tasks"

TASK_NAMES = [
    "beat_block_hammer",
    "handover_block",
    "pick_diverse_bottles",
    "pick_dual_bottles_easy",
    "place_container_plate",
    "place_dual_shoes",
    "place_empty_cup",
    "place_shoe",
    "stack_blocks_three",
    "stack_blocks_two",
]


def task_path(name: str) -> Path:
    return TASKS_DIR / f"{name}.task.json"


def program_path(task: str, kind: str) -> Path:
    return TASKS_DIR / task / f"{kind}.prog"


@pytest.fixture(scope="session")
def place_shoe_spec():
    return load_task_spec(task_path("place_shoe"))


@pytest.fixture()
def tasks_dir():
    return TASKS_DIR


# --- random program generator -------------------------------------------------

_ACTORS = ("shoe", "block", "mug", "hammer", "bottle", "plate")
_WORDS = (
    "grasp", "lift", "place", "align", "settle", "push", "hold",
    "swap", "raise", "lower", "slide", "park",
)


def _random_value(rng: random.Random, kind, name: str):
    if kind == "num":
        choice = rng.random()
        if choice < 0.3:
            return float(rng.choice((0.0, 0.1, 0.02, 1.0)))
        return round(rng.uniform(-0.5, 0.5), rng.randint(1, 4))
    if kind == "arm":
        return rng.choice(("left", "right"))
    if kind == "ident":
        return rng.choice(_ACTORS)
    if kind == "string":
        base = "_".join(rng.sample(_WORDS, rng.randint(1, 2)))
        if rng.random() < 0.1:
            base += ' with "quotes" and \\slash'
        return base + str(rng.randint(0, 99))
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "int_or_auto":
        return rng.choice(("auto", rng.randint(0, 3)))
    if kind == "int_or_none":
        return rng.choice(("none", rng.randint(0, 3)))
    if kind == "target":
        if rng.random() < 0.6:
            return FpRef(rng.choice(_ACTORS), rng.randint(0, 3))
        return PoseLit(tuple(round(rng.uniform(-1, 1), 3) for _ in range(7)))
    if isinstance(kind, tuple) and kind[0] == "enum":
        return rng.choice(kind[1])
    raise AssertionError(kind)


def random_call(rng: random.Random, name: str | None = None, arm: str | None = None) -> CallStmt:
    name = name or rng.choice(list(API_SIGNATURES))
    args = {}
    for param in API_SIGNATURES[name]:
        if param.required or rng.random() < 0.5:
            value = _random_value(rng, param.kind, param.name)
        else:
            value = param.default
        if arm is not None and param.name == "arm":
            value = arm
        args[param.name] = value
    return CallStmt(name, args)


def random_program(rng: random.Random, max_subgoals: int = 3, max_stmts: int = 5) -> Program:
    subgoals = []
    for si in range(rng.randint(1, max_subgoals)):
        stmts = []
        for _ in range(rng.randint(1, max_stmts)):
            if rng.random() < 0.15:
                left = [random_call(rng, arm="left") for _ in range(rng.randint(1, 2))]
                right = [random_call(rng, arm="right") for _ in range(rng.randint(1, 2))]
                stmts.append(ParallelStmt(left, right))
            else:
                stmts.append(random_call(rng))
        description = " ".join(rng.sample(_WORDS, rng.randint(1, 3)))
        if rng.random() < 0.1:
            description += ' "tight" \\ case'
        subgoals.append(SubgoalBlock(si + 1, description, stmts))
    return renumber(Program(rng.choice(_ACTORS) + "_task", subgoals))

"""World model: actors, dual-arm state, task specs, and goal predicates.

A task file (JSON, schema documented in the README) fully describes the
initial tabletop: actors with box extents, grasp/placement point sets and
approach axes, a noise model, ordered subgoal templates, and a goal
predicate tree. Scenes built from a spec are mutated only by a simulator
instance; everything else treats them as read-only.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    TaskParseError,
    TaskSchemaError,
    UnknownActorError,
    UnknownPointError,
)
from .geometry import Pose, angle_between, unit_norm_ok

ARM_TAGS = ("left", "right")

POINT_CATEGORIES = ("contact", "functional", "utility")
AXIS_CATEGORIES = ("grasp", "place", "util")

# Reach limits used when a task file does not override them. They are what
# makes "unreachable" a real failure mode on the desk.
DEFAULT_WORKSPACES = {
    "left": {"x": (-0.55, 0.05), "y": (-0.15, 0.45), "z": (0.0, 0.5)},
    "right": {"x": (-0.05, 0.55), "y": (-0.15, 0.45), "z": (0.0, 0.5)},
}

DEFAULT_HOMES = {
    "left": [-0.25, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0],
    "right": [0.25, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0],
}

DEFAULT_PLACE_TOLERANCE = 0.02


@dataclass(eq=False)
class LocalPoint:
    id: int
    pose: Pose


@dataclass(eq=False)
class Actor:
    """Axis-aligned box proxy with object-local interaction primitives."""

    name: str
    pose: Pose
    extent: np.ndarray
    static: bool = False
    contact_points: list[LocalPoint] = field(default_factory=list)
    functional_points: list[LocalPoint] = field(default_factory=list)
    utility_points: list[LocalPoint] = field(default_factory=list)
    grasp_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    place_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    util_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    held_by: str | None = None

    def points(self, category: str) -> list[LocalPoint]:
        if category == "contact":
            return self.contact_points
        if category == "functional":
            return self.functional_points
        if category == "utility":
            return self.utility_points
        raise ValueError(f"unknown point category {category!r}")

    def point(self, category: str, point_id: int) -> LocalPoint:
        for pt in self.points(category):
            if pt.id == point_id:
                return pt
        raise UnknownPointError(self.name, category, point_id)

    def axis(self, category: str) -> np.ndarray:
        if category == "grasp":
            return self.grasp_axis
        if category == "place":
            return self.place_axis
        if category == "util":
            return self.util_axis
        raise ValueError(f"unknown axis category {category!r}")

    def world_axis(self, category: str) -> np.ndarray:
        return self.pose.rotate(self.axis(category))

    def world_aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """Box proxy in world frame; orientation is deliberately ignored."""
        return self.pose.p - self.extent, self.pose.p + self.extent

    def top_z(self) -> float:
        return float(self.pose.p[2] + self.extent[2])

    def bottom_z(self) -> float:
        return float(self.pose.p[2] - self.extent[2])


@dataclass(eq=False)
class ArmState:
    tag: str
    tcp: Pose
    home: Pose
    gripper: float = 1.0
    workspace: dict = field(default_factory=dict)

    def in_workspace(self, p: np.ndarray) -> bool:
        for axis_name, coord in zip("xyz", p):
            lo, hi = self.workspace[axis_name]
            if coord < lo or coord > hi:
                return False
        return True


# --- goal predicates ------------------------------------------------------


@dataclass(frozen=True)
class PointRef:
    actor: str
    category: str  # contact | functional | utility
    id: int


@dataclass(frozen=True)
class AxisRef:
    actor: str
    category: str  # grasp | place | util


@dataclass(frozen=True)
class All:
    children: tuple


@dataclass(frozen=True)
class Any_:
    children: tuple


@dataclass(frozen=True)
class Near:
    a: PointRef
    b: PointRef
    tol: float


@dataclass(frozen=True)
class Aligned:
    a: AxisRef
    b: AxisRef
    tol: float


@dataclass(frozen=True)
class Held:
    actor: str
    arm: str


@dataclass(frozen=True)
class Free:
    actor: str


@dataclass(frozen=True)
class Above:
    a: str
    b: str
    min_dz: float


Predicate = All | Any_ | Near | Aligned | Held | Free | Above


@dataclass(eq=False)
class NoiseSpec:
    pos_sigma: float = 0.0
    rot_sigma: float = 0.0
    slip_base: float = 0.0


@dataclass(eq=False)
class SubgoalTemplate:
    """Template text plus an optional per-subgoal checkpoint predicate.

    ``text`` is the display form (annotation stripped); ``checkpoint`` is the
    condition the oracle verifier evaluates after the subgoal's last
    snapshot. None means "no dedicated check" (the final subgoal defaults to
    the task goal at load time).
    """

    text: str
    checkpoint: Predicate | None = None


@dataclass(eq=False)
class TaskSpec:
    name: str
    instruction: str
    actors: list[Actor]
    subgoals: list[SubgoalTemplate]
    goal: Predicate
    noise: NoiseSpec
    workspaces: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_WORKSPACES))
    homes: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_HOMES))
    place_tolerance: float = DEFAULT_PLACE_TOLERANCE

    @property
    def subgoal_templates(self) -> list[str]:
        return [sg.text for sg in self.subgoals]

    def actor_map(self) -> dict[str, Actor]:
        return {a.name: a for a in self.actors}


@dataclass(eq=False)
class Scene:
    """Mutable world state: actors (poses evolve) plus both arms."""

    actors: dict[str, Actor]
    arms: dict[str, ArmState]

    @classmethod
    def from_spec(cls, spec: TaskSpec) -> "Scene":
        actors = {a.name: copy.deepcopy(a) for a in spec.actors}
        arms = {}
        for tag in ARM_TAGS:
            home = Pose.from_list(spec.homes[tag])
            arms[tag] = ArmState(
                tag=tag,
                tcp=home.copy(),
                home=home,
                gripper=1.0,
                workspace={k: tuple(v) for k, v in spec.workspaces[tag].items()},
            )
        return cls(actors=actors, arms=arms)

    def actor(self, name: str) -> Actor:
        try:
            return self.actors[name]
        except KeyError:
            raise UnknownActorError(name) from None


# --- core operations ------------------------------------------------------


def resolve_point(scene: Scene, ref: PointRef) -> Pose:
    """World pose of an object-local point (actor pose o local pose)."""
    actor = scene.actor(ref.actor)
    return actor.pose.compose(actor.point(ref.category, ref.id).pose)


def resolve_axis(scene: Scene, ref: AxisRef) -> np.ndarray:
    return scene.actor(ref.actor).world_axis(ref.category)


def eval_predicate(pred: Predicate, scene: Scene) -> bool:
    if isinstance(pred, All):
        return all(eval_predicate(c, scene) for c in pred.children)
    if isinstance(pred, Any_):
        return any(eval_predicate(c, scene) for c in pred.children)
    if isinstance(pred, Near):
        pa = resolve_point(scene, pred.a).p
        pb = resolve_point(scene, pred.b).p
        return float(np.linalg.norm(pa - pb)) <= pred.tol
    if isinstance(pred, Aligned):
        ua = resolve_axis(scene, pred.a)
        ub = resolve_axis(scene, pred.b)
        return angle_between(ua, ub) <= pred.tol
    if isinstance(pred, Held):
        return scene.actor(pred.actor).held_by == pred.arm
    if isinstance(pred, Free):
        return scene.actor(pred.actor).held_by is None
    if isinstance(pred, Above):
        za = scene.actor(pred.a).pose.p[2]
        zb = scene.actor(pred.b).pose.p[2]
        return float(za - zb) >= pred.min_dz
    raise TypeError(f"not a predicate: {pred!r}")


def select_arm(scene: Scene, actor: str) -> str:
    """Left arm iff the actor sits in the left half-plane (world x < 0)."""
    return "left" if float(scene.actor(actor).pose.p[0]) < 0.0 else "right"


# --- task file loading ----------------------------------------------------


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise TaskSchemaError(f"{where}.{key}", "missing required field")
    return obj[key]


def _load_pose(values, where: str) -> Pose:
    try:
        return Pose.from_list(values)
    except (TypeError, ValueError) as exc:
        raise TaskSchemaError(where, str(exc)) from None


def _load_vec3(values, where: str) -> np.ndarray:
    try:
        v = np.asarray([float(x) for x in values], dtype=float)
    except (TypeError, ValueError):
        raise TaskSchemaError(where, "expected 3 numbers") from None
    if v.shape != (3,):
        raise TaskSchemaError(where, "expected 3 numbers")
    return v


def _load_axis(values, where: str) -> np.ndarray:
    v = _load_vec3(values, where)
    if not unit_norm_ok(v):
        raise TaskSchemaError(where, f"axis must be unit-norm, |v|={np.linalg.norm(v)}")
    return v


def _load_points(raw, where: str) -> list[LocalPoint]:
    pts = []
    seen = set()
    for i, entry in enumerate(raw or []):
        pid = int(_require(entry, "id", f"{where}[{i}]"))
        if pid in seen:
            raise TaskSchemaError(f"{where}[{i}].id", f"duplicate point id {pid}")
        seen.add(pid)
        pts.append(LocalPoint(pid, _load_pose(_require(entry, "pose", f"{where}[{i}]"), f"{where}[{i}].pose")))
    return pts


def _load_actor(raw: dict, idx: int) -> Actor:
    where = f"actors[{idx}]"
    name = _require(raw, "name", where)
    actor = Actor(
        name=name,
        pose=_load_pose(_require(raw, "pose", where), f"{where}.pose"),
        extent=_load_vec3(_require(raw, "extent", where), f"{where}.extent"),
        static=bool(raw.get("static", False)),
        contact_points=_load_points(raw.get("contact_points"), f"{where}.contact_points"),
        functional_points=_load_points(raw.get("functional_points"), f"{where}.functional_points"),
        utility_points=_load_points(raw.get("utility_points"), f"{where}.utility_points"),
    )
    for key in ("grasp_axis", "place_axis", "util_axis"):
        if key in raw:
            setattr(actor, key, _load_axis(raw[key], f"{where}.{key}"))
    if not actor.static:
        if not actor.contact_points:
            raise TaskSchemaError(f"{where}.contact_points", f"non-static actor {name!r} needs at least one contact point")
        if not actor.functional_points:
            raise TaskSchemaError(f"{where}.functional_points", f"non-static actor {name!r} needs at least one functional point")
    return actor


def _parse_point_ref(raw, where: str) -> PointRef:
    if isinstance(raw, str):
        # Compact "actor.category.id" form, also used by annotations.
        parts = raw.split(".")
        if len(parts) != 3 or parts[1] not in POINT_CATEGORIES:
            raise TaskSchemaError(where, f"bad point ref {raw!r}")
        return PointRef(parts[0], parts[1], int(parts[2]))
    cat = _require(raw, "category", where)
    if cat not in POINT_CATEGORIES:
        raise TaskSchemaError(f"{where}.category", f"bad category {cat!r}")
    return PointRef(_require(raw, "actor", where), cat, int(_require(raw, "id", where)))


def _parse_axis_ref(raw, where: str) -> AxisRef:
    if isinstance(raw, str):
        parts = raw.split(".")
        if len(parts) != 2 or parts[1] not in AXIS_CATEGORIES:
            raise TaskSchemaError(where, f"bad axis ref {raw!r}")
        return AxisRef(parts[0], parts[1])
    cat = _require(raw, "category", where)
    if cat not in AXIS_CATEGORIES:
        raise TaskSchemaError(f"{where}.category", f"bad category {cat!r}")
    return AxisRef(_require(raw, "actor", where), cat)


def parse_predicate(raw: dict, where: str = "goal") -> Predicate:
    op = _require(raw, "op", where).lower()
    if op in ("all", "any"):
        children = tuple(
            parse_predicate(c, f"{where}.children[{i}]")
            for i, c in enumerate(_require(raw, "children", where))
        )
        return All(children) if op == "all" else Any_(children)
    if op == "near":
        tol = float(_require(raw, "tol", where))
        if tol <= 0:
            raise TaskSchemaError(f"{where}.tol", "tolerance must be positive")
        return Near(_parse_point_ref(_require(raw, "a", where), f"{where}.a"),
                    _parse_point_ref(_require(raw, "b", where), f"{where}.b"), tol)
    if op == "aligned":
        tol = float(_require(raw, "tol", where))
        if tol <= 0:
            raise TaskSchemaError(f"{where}.tol", "tolerance must be positive")
        return Aligned(_parse_axis_ref(_require(raw, "a", where), f"{where}.a"),
                       _parse_axis_ref(_require(raw, "b", where), f"{where}.b"), tol)
    if op == "held":
        arm = _require(raw, "arm", where)
        if arm not in ARM_TAGS:
            raise TaskSchemaError(f"{where}.arm", f"bad arm {arm!r}")
        return Held(_require(raw, "actor", where), arm)
    if op == "free":
        return Free(_require(raw, "actor", where))
    if op == "above":
        dz = float(_require(raw, "min_dz", where))
        if dz <= 0:
            raise TaskSchemaError(f"{where}.min_dz", "min_dz must be positive")
        return Above(_require(raw, "a", where), _require(raw, "b", where), dz)
    raise TaskSchemaError(f"{where}.op", f"unknown predicate op {op!r}")


def predicate_to_json(pred: Predicate) -> dict:
    if isinstance(pred, All):
        return {"op": "all", "children": [predicate_to_json(c) for c in pred.children]}
    if isinstance(pred, Any_):
        return {"op": "any", "children": [predicate_to_json(c) for c in pred.children]}
    if isinstance(pred, Near):
        return {"op": "near", "a": f"{pred.a.actor}.{pred.a.category}.{pred.a.id}",
                "b": f"{pred.b.actor}.{pred.b.category}.{pred.b.id}", "tol": pred.tol}
    if isinstance(pred, Aligned):
        return {"op": "aligned", "a": f"{pred.a.actor}.{pred.a.category}",
                "b": f"{pred.b.actor}.{pred.b.category}", "tol": pred.tol}
    if isinstance(pred, Held):
        return {"op": "held", "actor": pred.actor, "arm": pred.arm}
    if isinstance(pred, Free):
        return {"op": "free", "actor": pred.actor}
    if isinstance(pred, Above):
        return {"op": "above", "a": pred.a, "b": pred.b, "min_dz": pred.min_dz}
    raise TypeError(f"not a predicate: {pred!r}")


# Subgoal annotation, e.g. "grasp the shoe [HELD(shoe)]". HELD without an
# arm expands to "held by either arm".
_ANNOTATION_RE = re.compile(r"\s*\[(HELD|FREE|NEAR|ABOVE)\(([^\]]*)\)\]\s*$")


def _parse_annotation(kind: str, args_text: str, where: str) -> Predicate:
    args = [a.strip() for a in args_text.split(",")] if args_text.strip() else []
    if kind == "HELD":
        if len(args) == 1:
            return Any_(tuple(Held(args[0], arm) for arm in ARM_TAGS))
        if len(args) == 2 and args[1] in ARM_TAGS:
            return Held(args[0], args[1])
        raise TaskSchemaError(where, f"bad HELD annotation args {args_text!r}")
    if kind == "FREE":
        if len(args) != 1:
            raise TaskSchemaError(where, f"bad FREE annotation args {args_text!r}")
        return Free(args[0])
    if kind == "NEAR":
        if len(args) != 3:
            raise TaskSchemaError(where, f"bad NEAR annotation args {args_text!r}")
        return Near(_parse_point_ref(args[0], where), _parse_point_ref(args[1], where), float(args[2]))
    if kind == "ABOVE":
        if len(args) != 3:
            raise TaskSchemaError(where, f"bad ABOVE annotation args {args_text!r}")
        return Above(args[0], args[1], float(args[2]))
    raise TaskSchemaError(where, f"unknown annotation {kind!r}")


def _load_subgoal(raw, idx: int) -> SubgoalTemplate:
    where = f"subgoals[{idx}]"
    if isinstance(raw, str):
        m = _ANNOTATION_RE.search(raw)
        if m:
            checkpoint = _parse_annotation(m.group(1), m.group(2), where)
            return SubgoalTemplate(raw[: m.start()].rstrip(), checkpoint)
        return SubgoalTemplate(raw)
    text = _require(raw, "text", where)
    checkpoint = None
    if raw.get("checkpoint") is not None:
        checkpoint = parse_predicate(raw["checkpoint"], f"{where}.checkpoint")
    return SubgoalTemplate(text, checkpoint)


def _predicate_actor_refs(pred: Predicate):
    if isinstance(pred, (All, Any_)):
        for c in pred.children:
            yield from _predicate_actor_refs(c)
    elif isinstance(pred, Near):
        yield pred.a.actor
        yield pred.b.actor
    elif isinstance(pred, Aligned):
        yield pred.a.actor
        yield pred.b.actor
    elif isinstance(pred, (Held, Free)):
        yield pred.actor
    elif isinstance(pred, Above):
        yield pred.a
        yield pred.b


def _check_predicate_refs(pred: Predicate, actors: dict[str, Actor], where: str):
    for name in _predicate_actor_refs(pred):
        if name not in actors:
            raise TaskSchemaError(where, f"references unknown actor {name!r}")
    # Point/axis existence is part of the same well-formedness check.
    if isinstance(pred, (All, Any_)):
        for i, c in enumerate(pred.children):
            _check_predicate_refs(c, actors, f"{where}.children[{i}]")
    elif isinstance(pred, Near):
        for ref in (pred.a, pred.b):
            actors[ref.actor].point(ref.category, ref.id)


def load_task_spec(path) -> TaskSpec:
    """Load and fully validate a task file; raises on any schema violation."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TaskParseError(f"{path}: {exc}") from None
    if not text.strip():
        raise TaskParseError(f"{path}: file is empty")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TaskParseError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise TaskParseError(f"{path}: top level must be an object")

    name = _require(raw, "name", "task")
    instruction = _require(raw, "instruction", "task")
    actors = [_load_actor(a, i) for i, a in enumerate(_require(raw, "actors", "task"))]
    names = [a.name for a in actors]
    if len(set(names)) != len(names):
        raise TaskSchemaError("actors", "duplicate actor names")
    actor_map = {a.name: a for a in actors}

    raw_subgoals = _require(raw, "subgoals", "task")
    if not raw_subgoals:
        raise TaskSchemaError("subgoals", "at least one subgoal template required")
    subgoals = [_load_subgoal(s, i) for i, s in enumerate(raw_subgoals)]

    goal = parse_predicate(_require(raw, "goal", "task"), "goal")
    _check_predicate_refs(goal, actor_map, "goal")

    raw_noise = raw.get("noise", {})
    noise = NoiseSpec(
        pos_sigma=float(raw_noise.get("pos_sigma", 0.0)),
        rot_sigma=float(raw_noise.get("rot_sigma", 0.0)),
        slip_base=float(raw_noise.get("slip_base", 0.0)),
    )
    for fld in ("pos_sigma", "rot_sigma", "slip_base"):
        if getattr(noise, fld) < 0:
            raise TaskSchemaError(f"noise.{fld}", "must be non-negative")

    spec = TaskSpec(
        name=name,
        instruction=instruction,
        actors=actors,
        subgoals=subgoals,
        goal=goal,
        noise=noise,
        place_tolerance=float(raw.get("place_tolerance", DEFAULT_PLACE_TOLERANCE)),
    )
    if "workspaces" in raw:
        for tag, box in raw["workspaces"].items():
            if tag not in ARM_TAGS:
                raise TaskSchemaError(f"workspaces.{tag}", "arm must be left or right")
            for axis_name in "xyz":
                lo, hi = box[axis_name]
                spec.workspaces[tag][axis_name] = (float(lo), float(hi))
    if "arm_home" in raw:
        for tag, vals in raw["arm_home"].items():
            if tag not in ARM_TAGS:
                raise TaskSchemaError(f"arm_home.{tag}", "arm must be left or right")
            spec.homes[tag] = [float(v) for v in vals]

    # Checkpoints: explicit entries override; the final subgoal defaults to
    # the task goal.
    for i, sg in enumerate(spec.subgoals):
        if sg.checkpoint is None and i == len(spec.subgoals) - 1:
            sg.checkpoint = goal
        if sg.checkpoint is not None:
            _check_predicate_refs(sg.checkpoint, actor_map, f"subgoals[{i}].checkpoint")
    return spec

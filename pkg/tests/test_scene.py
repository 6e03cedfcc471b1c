import copy
import itertools
import json
import random

import numpy as np
import pytest

from armloop.errors import TaskParseError, TaskSchemaError, UnknownActorError, UnknownPointError
from armloop.geometry import Pose, quat_from_axis_angle
from armloop.scene import (
    All,
    Any_,
    Aligned,
    AxisRef,
    Free,
    Held,
    Near,
    PointRef,
    Scene,
    eval_predicate,
    load_task_spec,
    resolve_point,
    select_arm,
)

from conftest import task_path


def test_load_place_shoe_roundtrip(place_shoe_spec):
    spec = place_shoe_spec
    assert spec.name == "place_shoe"
    assert {a.name for a in spec.actors} == {"shoe", "target_block"}
    assert len(spec.subgoals) == 2
    shoe = spec.actor_map()["shoe"]
    assert not shoe.static
    assert shoe.contact_points[0].id == 0
    assert np.allclose(shoe.pose.p, [-0.2, 0.1, 0.02])
    assert np.allclose(shoe.extent, [0.05, 0.02, 0.02])
    assert np.allclose(shoe.grasp_axis, [0, 0, -1])
    raw = json.loads(task_path("place_shoe").read_text())
    assert raw["actors"][0]["pose"] == shoe.pose.as_list()
    assert spec.noise.slip_base == raw["noise"]["slip_base"]


def test_unknown_goal_actor_is_schema_error(tmp_path):
    raw = json.loads(task_path("place_shoe").read_text())
    raw["goal"] = {"op": "free", "actor": "mug"}
    path = tmp_path / "bad.task.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(TaskSchemaError) as err:
        load_task_spec(path)
    assert "mug" in str(err.value)


def test_empty_file_is_parse_error(tmp_path):
    path = tmp_path / "empty.task.json"
    path.write_text("")
    with pytest.raises(TaskParseError):
        load_task_spec(path)


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "broken.task.json"
    path.write_text('{"name": "x",,}')
    with pytest.raises(TaskParseError) as err:
        load_task_spec(path)
    assert "line" in str(err.value)


def test_non_static_actor_needs_points(tmp_path):
    raw = json.loads(task_path("place_shoe").read_text())
    raw["actors"][0]["contact_points"] = []
    path = tmp_path / "nopoints.task.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(TaskSchemaError) as err:
        load_task_spec(path)
    assert "contact" in str(err.value)


def test_axis_must_be_unit(tmp_path):
    raw = json.loads(task_path("place_shoe").read_text())
    raw["actors"][0]["grasp_axis"] = [0, 0, -2]
    path = tmp_path / "axis.task.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(TaskSchemaError):
        load_task_spec(path)


# --- resolve_point ------------------------------------------------------------


def test_resolve_point_identity(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    scene.actor("shoe").pose = Pose(np.zeros(3))
    scene.actor("shoe").functional_points[0].pose = Pose(np.array([0, 0, 0.05]))
    world = resolve_point(scene, PointRef("shoe", "functional", 0))
    assert np.allclose(world.p, [0, 0, 0.05])


def test_resolve_point_translation(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    scene.actor("shoe").pose = Pose(np.array([0.1, 0.0, 0.0]))
    scene.actor("shoe").functional_points[0].pose = Pose(np.array([0, 0, 0.05]))
    world = resolve_point(scene, PointRef("shoe", "functional", 0))
    assert np.allclose(world.p, [0.1, 0.0, 0.05])


def test_resolve_point_rotation(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    q = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    scene.actor("shoe").pose = Pose(np.zeros(3), q)
    scene.actor("shoe").functional_points[0].pose = Pose(np.array([0.05, 0.0, 0.0]))
    world = resolve_point(scene, PointRef("shoe", "functional", 0))
    assert np.allclose(world.p, [0.0, 0.05, 0.0], atol=1e-12)


def test_resolve_point_errors(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    with pytest.raises(UnknownActorError):
        resolve_point(scene, PointRef("mug", "functional", 0))
    with pytest.raises(UnknownPointError):
        resolve_point(scene, PointRef("shoe", "functional", 9))


# --- predicates ---------------------------------------------------------------


def test_near_coincident_points(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    shoe = scene.actor("shoe")
    block = scene.actor("target_block")
    fp_world = block.pose.compose(block.functional_points[0].pose)
    shoe.pose = fp_world.compose(shoe.functional_points[0].pose.inverse())
    pred = Near(PointRef("shoe", "functional", 0), PointRef("target_block", "functional", 0), 0.02)
    assert eval_predicate(pred, scene)


def test_aligned_at_90deg_false(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    scene.actor("shoe").grasp_axis = np.array([0.0, 0.0, 1.0])
    scene.actor("target_block").grasp_axis = np.array([1.0, 0.0, 0.0])
    pred = Aligned(AxisRef("shoe", "grasp"), AxisRef("target_block", "grasp"), 0.1)
    assert not eval_predicate(pred, scene)


def test_nested_all_any_matches_truth_table(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    # Three independent leaves toggled via held_by; oracle enumerates all 8
    # assignments with plain python logic.
    leaf_preds = [Held("shoe", "left"), Free("shoe"), Held("target_block", "right")]
    pred = All((Any_((leaf_preds[0], leaf_preds[1])), leaf_preds[2]))

    for bits in itertools.product([False, True], repeat=2):
        shoe_held_left, block_held_right = bits
        scene.actor("shoe").held_by = "left" if shoe_held_left else None
        scene.actor("target_block").held_by = "right" if block_held_right else None
        leaves = [
            scene.actor("shoe").held_by == "left",
            scene.actor("shoe").held_by is None,
            scene.actor("target_block").held_by == "right",
        ]
        expected = (leaves[0] or leaves[1]) and leaves[2]
        assert eval_predicate(pred, scene) == expected


def test_predicate_purity(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    pred = place_shoe_spec.goal
    first = eval_predicate(pred, copy.deepcopy(scene))
    second = eval_predicate(pred, copy.deepcopy(scene))
    assert first == second


# --- select_arm ---------------------------------------------------------------


def test_select_arm_examples(place_shoe_spec):
    scene = Scene.from_spec(place_shoe_spec)
    shoe = scene.actor("shoe")
    shoe.pose = Pose(np.array([-0.2, 0.1, 0.02]))
    assert select_arm(scene, "shoe") == "left"
    shoe.pose = Pose(np.array([0.2, 0.1, 0.02]))
    assert select_arm(scene, "shoe") == "right"
    shoe.pose = Pose(np.array([0.0, 0.1, 0.02]))
    assert select_arm(scene, "shoe") == "right"


def test_select_arm_ignores_y_and_z(place_shoe_spec):
    rng = random.Random(5)
    scene = Scene.from_spec(place_shoe_spec)
    for _ in range(25):
        x = rng.uniform(-0.5, 0.5)
        expected = "left" if x < 0 else "right"
        for _ in range(4):
            scene.actor("shoe").pose = Pose(
                np.array([x, rng.uniform(-1, 1), rng.uniform(0, 1)])
            )
            assert select_arm(scene, "shoe") == expected


def test_checkpoint_annotation_stripped(place_shoe_spec):
    assert place_shoe_spec.subgoal_templates[0] == "pick up the shoe"
    checkpoint = place_shoe_spec.subgoals[0].checkpoint
    assert isinstance(checkpoint, Any_)
    assert {c.arm for c in checkpoint.children} == {"left", "right"}


def test_final_subgoal_defaults_to_goal(place_shoe_spec):
    assert place_shoe_spec.subgoals[-1].checkpoint is place_shoe_spec.goal

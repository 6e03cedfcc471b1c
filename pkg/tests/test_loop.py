import json
import random

import pytest

from armloop.agents import AgentConfig, Diagnosis, SubgoalVerdict
from armloop.dsl import parse
from armloop.errors import NothingToFuseError
from armloop.loop import (
    CampaignConfig,
    CandidateSpec,
    LoopConfig,
    RepairSignal,
    fuse,
    load_campaign_config,
    run_campaign,
    run_loop,
)
from armloop.metrics import asr, cr_iter, top5_asr
from armloop.sim.model import SymbolicEvent, TrialLog, load_trials

from conftest import TASKS_DIR, program_path, task_path


def _program():
    return parse(
        "program t\n"
        'subgoal "grab"\n'
        "  grasp_actor(shoe, left)\n"
        "  move_by_displacement(left, z=0.07)\n"
        'subgoal "put"\n'
        "  place_actor(shoe, left, fp(target_block, 0))\n"
        "  back_to_origin(left)\n"
    )


def _event(stmt_id, subgoal, outcome="success", category="none", message=""):
    return SymbolicEvent(
        stmt_id=stmt_id, subgoal_index=subgoal, op_name="x", args={},
        outcome=outcome, error_category=category, message=message, t=stmt_id,
    )


def _verdict(subgoal, stmt, cause, rationale="looked off"):
    return SubgoalVerdict(
        subgoal_index=subgoal, passed=False, deviation_stmt=stmt,
        cause=cause, rationale=rationale,
    )


def test_fuse_agreement_single_entry():
    log = TrialLog(0, 0, events=[
        _event(1, 1), _event(2, 1), _event(3, 2, "failure", "grasp_slip", "slipped"),
    ], goal_met=False)
    diagnosis = Diagnosis(
        verdicts=[SubgoalVerdict(1, True), _verdict(2, 3, "execution_failure")],
        overall_success=False,
    )
    signal = fuse(log, diagnosis, _program())
    assert signal.faulty_stmt_ids == [3]
    fault = signal.faults[0]
    assert fault.source == "both"
    assert fault.cause == "execution_failure"
    assert fault.symbolic_error_category == "grasp_slip"
    assert signal.last_error == "slipped"


def test_fuse_silent_failure_perceptual_only():
    log = TrialLog(0, 0, events=[_event(i, (i > 2) + 1) for i in range(1, 5)], goal_met=False)
    diagnosis = Diagnosis(
        verdicts=[SubgoalVerdict(1, True), _verdict(2, 5, "perception_mismatch")],
        overall_success=False,
    )
    program = _program()
    program.subgoals[1].statements[0].id = 5  # align ids with the diagnosis
    signal = fuse(log, diagnosis, program)
    assert [f.source for f in signal.faults] == ["perceptual"]
    assert signal.faults[0].stmt_id == 5
    assert "goal predicate not satisfied" in signal.last_error


def test_fuse_disagreement_symbolic_ranked_first():
    log = TrialLog(0, 0, events=[
        _event(1, 1), _event(2, 1), _event(3, 2, "failure", "unreachable", "cannot reach"),
    ], goal_met=False)
    diagnosis = Diagnosis(
        verdicts=[SubgoalVerdict(1, True), _verdict(2, 4, "logic_error")],
        overall_success=False,
    )
    signal = fuse(log, diagnosis, _program())
    assert signal.faulty_stmt_ids == [3, 4]
    assert [f.source for f in signal.faults] == ["symbolic", "perceptual"]
    assert signal.faults[0].cause == "geometric_infeasibility"
    assert signal.faults[1].cause == "logic_error"


def test_fuse_earlier_subgoal_ranks_first():
    log = TrialLog(0, 0, events=[
        _event(1, 1), _event(2, 1), _event(3, 2, "failure", "not_held", "not holding"),
    ], goal_met=False)
    diagnosis = Diagnosis(
        verdicts=[_verdict(1, 2, "logic_error"), _verdict(2, 3, "logic_error")],
        overall_success=False,
    )
    signal = fuse(log, diagnosis, _program())
    assert signal.faulty_stmt_ids == [2, 3]
    assert [f.subgoal_index for f in signal.faults] == [1, 2]


def test_fuse_symbolic_only_with_empty_diagnosis():
    log = TrialLog(0, 0, events=[
        _event(1, 1, "failure", "collision", "bumped"),
    ], goal_met=False)
    signal = fuse(log, Diagnosis.empty(), _program())
    assert signal.faulty_stmt_ids == [1]
    assert signal.faults[0].source == "symbolic"
    assert signal.observation_feedback == "No perceptual diagnosis available."


def test_fuse_empty_diagnosis_silent_log_yields_no_faults():
    log = TrialLog(0, 0, events=[_event(1, 1), _event(2, 2)], goal_met=False)
    signal = fuse(log, Diagnosis.empty(), _program())
    assert signal.faults == []
    assert "- [subgoal " not in signal.render_feedback()


def test_fuse_rejects_success():
    log = TrialLog(0, 0, events=[_event(1, 1)], goal_met=True)
    diagnosis = Diagnosis(verdicts=[SubgoalVerdict(1, True)], overall_success=True)
    with pytest.raises(NothingToFuseError):
        fuse(log, diagnosis, _program())


def test_fuse_edit_class_mapping_total():
    from armloop.agents.diagnosis import CAUSES
    from armloop.loop import EDIT_CLASS_FROM_CAUSE

    assert set(EDIT_CLASS_FROM_CAUSE) == set(CAUSES)
    assert EDIT_CLASS_FROM_CAUSE["api_misuse"] == "api_substitution"
    assert EDIT_CLASS_FROM_CAUSE["geometric_infeasibility"] == "parameter_retune"
    assert EDIT_CLASS_FROM_CAUSE["execution_failure"] == "parameter_retune"
    assert EDIT_CLASS_FROM_CAUSE["logic_error"] == "logic_rewrite"
    assert EDIT_CLASS_FROM_CAUSE["perception_mismatch"] == "logic_rewrite"


def test_repair_signal_json_roundtrip():
    log = TrialLog(0, 0, events=[
        _event(1, 1), _event(2, 1), _event(3, 2, "failure", "grasp_slip", "slipped"),
    ], goal_met=False)
    diagnosis = Diagnosis(
        verdicts=[SubgoalVerdict(1, True), _verdict(2, 3, "execution_failure")],
        overall_success=False,
    )
    signal = fuse(log, diagnosis, _program())
    assert RepairSignal.from_json(signal.to_json()) == signal


# --- loop ---------------------------------------------------------------------


def _loop_cfg(playbook, mode="hybrid", max_iterations=5, n_trials=10):
    return LoopConfig(
        synthesis=AgentConfig(backend="mock", playbook=[str(p) for p in playbook]),
        verifier=AgentConfig(backend="mock"),
        n_trials=n_trials,
        max_iterations=1 if mode == "one_shot" else max_iterations,
        perception=(mode == "hybrid"),
    )


def test_loop_buggy_then_fixed_converges_in_two(place_shoe_spec):
    cfg = _loop_cfg([program_path("place_shoe", "loud"), program_path("place_shoe", "correct")])
    result = run_loop(place_shoe_spec, cfg)
    assert result.converged
    assert result.cr_iter == 2
    assert result.iterations[0].success_count == 0
    assert result.iterations[1].success_count == 10


def test_loop_one_shot_success(place_shoe_spec):
    cfg = _loop_cfg([program_path("place_shoe", "correct")])
    result = run_loop(place_shoe_spec, cfg)
    assert result.converged
    assert result.cr_iter == 1


def test_loop_permanently_broken_hits_cap(place_shoe_spec):
    cfg = _loop_cfg([program_path("place_shoe", "loud")] * 5)
    result = run_loop(place_shoe_spec, cfg)
    assert not result.converged
    assert result.cr_iter == 5
    assert len(result.iterations) == 5


def test_loop_fresh_seeds_per_iteration(place_shoe_spec):
    cfg = _loop_cfg([program_path("place_shoe", "loud"), program_path("place_shoe", "correct")])
    cfg.base_seed = 1000
    result = run_loop(place_shoe_spec, cfg)
    first = [log.seed for log in result.iterations[0].logs]
    second = [log.seed for log in result.iterations[1].logs]
    assert first == list(range(1000, 1010))
    assert second == list(range(1010, 1020))


def test_loop_silent_failure_needs_perception(place_shoe_spec):
    playbook = [program_path("place_shoe", "silent"), program_path("place_shoe", "correct")]
    hybrid = run_loop(place_shoe_spec, _loop_cfg(playbook, mode="hybrid"))
    assert hybrid.converged and hybrid.cr_iter == 2
    symbolic = run_loop(place_shoe_spec, _loop_cfg(playbook, mode="symbolic"))
    assert not symbolic.converged
    assert symbolic.cr_iter == 5


def test_loop_persists_all_artifacts(tmp_path, place_shoe_spec):
    cfg = _loop_cfg([program_path("place_shoe", "loud"), program_path("place_shoe", "correct")])
    result = run_loop(place_shoe_spec, cfg, out_dir=tmp_path)
    assert result.converged
    iter1 = tmp_path / "iter_1"
    for name in ("program.prog", "instrumented.prog", "trials.jsonl", "scores.json",
                 "diagnosis.json", "repair_signal.json"):
        assert (iter1 / name).exists(), name
    # Converged final iteration has no diagnosis to persist.
    iter2 = tmp_path / "iter_2"
    assert (iter2 / "trials.jsonl").exists()
    assert not (iter2 / "diagnosis.json").exists()


def test_fuse_replayable_from_artifacts(tmp_path, place_shoe_spec):
    cfg = _loop_cfg([program_path("place_shoe", "silent"), program_path("place_shoe", "correct")])
    run_loop(place_shoe_spec, cfg, out_dir=tmp_path)
    iter1 = tmp_path / "iter_1"
    stored = RepairSignal.from_json(json.loads((iter1 / "repair_signal.json").read_text()))
    diagnosis = Diagnosis.from_json(json.loads((iter1 / "diagnosis.json").read_text()))
    logs = load_trials(iter1 / "trials.jsonl")
    scores = json.loads((iter1 / "scores.json").read_text())
    program = parse((iter1 / "instrumented.prog").read_text())
    replayed = fuse(logs[scores["selected_index"]], diagnosis, program)
    assert replayed == stored


# --- campaign -------------------------------------------------------------------


def _campaign_cfg(task, mode="hybrid"):
    loop_cfg = _loop_cfg([], mode=mode)
    candidates = [
        CandidateSpec(0, 0, [str(program_path(task, "loud")), str(program_path(task, "correct"))]),
        CandidateSpec(1, 100, [str(program_path(task, "silent")), str(program_path(task, "correct"))]),
        CandidateSpec(2, 200, [str(program_path(task, "correct"))]),
    ]
    return CampaignConfig(loop=loop_cfg, candidates=candidates)


def test_invalid_playbook_program_is_agent_failure(tmp_path, place_shoe_spec):
    from armloop.errors import AgentFailureError

    bad = tmp_path / "bad.prog"
    bad.write_text('program t\nsubgoal "s"\n  grasp_actor(ghost, left)\n')
    cfg = _loop_cfg([bad])
    with pytest.raises(AgentFailureError):
        run_loop(place_shoe_spec, cfg)
    # In a campaign the failure stays quarantined to its candidate.
    campaign_cfg = CampaignConfig(
        loop=_loop_cfg([]),
        candidates=[
            CandidateSpec(0, 0, [str(bad)]),
            CandidateSpec(1, 100, [str(program_path("place_shoe", "correct"))]),
        ],
    )
    campaign = run_campaign(place_shoe_spec, campaign_cfg)
    assert campaign.candidates[0].error is not None
    assert campaign.candidates[1].result.converged
    assert campaign.had_agent_failure
    assert asr(campaign) == 1.0  # errored candidate has no trials to count


def test_campaign_asr_arithmetic(place_shoe_spec):
    campaign = run_campaign(place_shoe_spec, _campaign_cfg("place_shoe", mode="one_shot"))
    # one-shot: only the correct-first candidate succeeds.
    assert asr(campaign) == pytest.approx(10 / 30)


def test_campaign_single_candidate_equals_run_loop(place_shoe_spec):
    loop_cfg = _loop_cfg([program_path("place_shoe", "correct")])
    campaign = run_campaign(place_shoe_spec, CampaignConfig(loop=loop_cfg))
    assert len(campaign.candidates) == 1
    assert asr(campaign) == 1.0
    assert cr_iter(campaign) == 1.0


def test_campaign_permutation_invariant(place_shoe_spec):
    cfg = _campaign_cfg("place_shoe")
    forward = run_campaign(place_shoe_spec, cfg)
    shuffled_cfg = _campaign_cfg("place_shoe")
    rng = random.Random(9)
    rng.shuffle(shuffled_cfg.candidates)
    backward = run_campaign(place_shoe_spec, shuffled_cfg)
    assert asr(forward) == asr(backward)
    assert top5_asr(forward) == top5_asr(backward)
    assert cr_iter(forward) == cr_iter(backward)


def test_campaign_config_loading(tmp_path, place_shoe_spec):
    cfg = load_campaign_config(
        TASKS_DIR / "configs" / "hybrid.json", task_path("place_shoe"), place_shoe_spec
    )
    assert cfg.loop.perception
    assert len(cfg.candidates) == 3
    assert cfg.candidates[0].playbook[0].endswith("place_shoe/loud.prog")
    assert cfg.expert_program.endswith("place_shoe/correct.prog")
    one_shot = load_campaign_config(
        TASKS_DIR / "configs" / "one_shot.json", task_path("place_shoe"), place_shoe_spec
    )
    assert one_shot.loop.max_iterations == 1
    symbolic = load_campaign_config(
        TASKS_DIR / "configs" / "symbolic.json", task_path("place_shoe"), place_shoe_spec
    )
    assert not symbolic.loop.perception


def test_playbook_file_indirection(tmp_path, place_shoe_spec):
    pb_file = tmp_path / "cand.playbook"
    pb_file.write_text(json.dumps([str(program_path("place_shoe", "correct"))]))
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({
        "mode": "hybrid",
        "synthesis": {"backend": "mock"},
        "verifier": {"backend": "mock"},
        "candidates": [{"playbook": "cand.playbook"}],
    }))
    cfg = load_campaign_config(cfg_file, task_path("place_shoe"), place_shoe_spec)
    assert cfg.candidates[0].playbook == [str(program_path("place_shoe", "correct"))]

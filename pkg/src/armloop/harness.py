"""Batch scoring and selection of the most diagnostic trial.

Raw failure severity and trace divergence are min-max normalized over the
batch, combined with configurable weights, and the argmax trial (ties to the
lowest index) is handed to perceptual verification. Snapshot grouping turns
the selected trial's snapshots into an ordered observation set keyed by
subgoal, with boundary snapshots on pseudo-subgoals 0 and N+1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dsl.ast import Program
from .errors import NoSnapshotsError
from .instrument import FINAL_STEP, INITIAL_STEP
from .sim.model import TrialLog

_PAD = "<end>"


@dataclass
class TrialScore:
    trial_index: int
    severity: float  # min-max normalized over the batch
    divergence: float  # min-max normalized over the batch
    psi: float
    selected: bool = False


@dataclass
class SelectionResult:
    index: int
    scores: list[TrialScore]
    all_success: bool = False


@dataclass
class ObservationSet:
    """Snapshots of one trial grouped by subgoal, order preserved.

    Keys 0 and n_subgoals+1 hold the initial and final boundary snapshots.
    """

    groups: dict[int, list] = field(default_factory=dict)
    n_subgoals: int = 0

    def all_snapshots(self):
        for key in sorted(self.groups):
            yield from self.groups[key]


def failure_severity(log: TrialLog, program: Program) -> float:
    """0 for a clean success; a goal miss with a silent log scores 0.5;
    otherwise earlier-subgoal failures score higher, up to 1.0."""
    failure = log.failure_event
    if failure is None:
        return 0.0 if log.goal_met else 0.5
    n = len(program.subgoals)
    return 1.0 - (failure.subgoal_index - 1) / n


def _signature(log: TrialLog) -> list[str]:
    return [ev.signature() for ev in log.events]


def majority_signature(batch: list[TrialLog]) -> list[str]:
    """Per-position mode over the batch's event signatures. Shorter traces
    are padded with a sentinel; a real signature beats the sentinel on count
    ties, remaining ties go to the lexicographically smallest."""
    signatures = [_signature(log) for log in batch]
    longest = max((len(s) for s in signatures), default=0)
    majority = []
    for pos in range(longest):
        counts: dict[str, int] = {}
        for sig in signatures:
            token = sig[pos] if pos < len(sig) else _PAD
            counts[token] = counts.get(token, 0) + 1
        winner = min(
            counts.items(),
            key=lambda kv: (-kv[1], kv[0] == _PAD, kv[0]),
        )[0]
        if winner != _PAD:
            majority.append(winner)
    return majority


def levenshtein(a: list[str], b: list[str]) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, xa in enumerate(a, start=1):
        cur = [i]
        for j, xb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (xa != xb)))
        prev = cur
    return prev[-1]


def trace_divergence(log: TrialLog, batch: list[TrialLog]) -> float:
    """Normalized edit distance between this trial's event signature
    sequence and the batch majority sequence, in [0, 1]."""
    majority = majority_signature(batch)
    mine = _signature(log)
    denom = max(len(mine), len(majority))
    if denom == 0:
        return 0.0
    return levenshtein(mine, majority) / denom


def _minmax(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi - lo <= 0.0:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def select_trial(
    batch: list[TrialLog],
    program: Program,
    weights: tuple[float, float] = (1.0, 1.0),
) -> SelectionResult:
    """Argmax of psi = w_s*severity + w_d*divergence over the batch, both
    signals min-max normalized first. Ties break to the lowest trial index;
    an all-successful batch selects index 0 and is flagged."""
    if not batch:
        raise ValueError("empty batch")
    w_s, w_d = weights
    raw_severity = [failure_severity(log, program) for log in batch]
    raw_divergence = [trace_divergence(log, batch) for log in batch]
    severity = _minmax(raw_severity)
    divergence = _minmax(raw_divergence)
    scores = [
        TrialScore(
            trial_index=log.trial_index,
            severity=severity[i],
            divergence=divergence[i],
            psi=w_s * severity[i] + w_d * divergence[i],
        )
        for i, log in enumerate(batch)
    ]
    order = sorted(range(len(batch)), key=lambda i: (-scores[i].psi, batch[i].trial_index))
    best = order[0]
    scores[best].selected = True
    all_success = all(log.goal_met and log.failure_event is None for log in batch)
    return SelectionResult(index=best, scores=scores, all_success=all_success)


def collect_observations(log: TrialLog, program: Program) -> ObservationSet:
    """Partition the trial's snapshots by originating subgoal; boundary
    snapshots attach to pseudo-subgoals 0 and N+1."""
    if not log.snapshots:
        raise NoSnapshotsError("trial has no snapshots; was the program instrumented?")
    n = len(program.subgoals)
    groups: dict[int, list] = {i: [] for i in range(0, n + 2)}
    for snap in log.snapshots:
        if snap.step_name == INITIAL_STEP:
            groups[0].append(snap)
        elif snap.step_name == FINAL_STEP:
            groups[n + 1].append(snap)
        else:
            groups[snap.subgoal_index].append(snap)
    return ObservationSet(groups=groups, n_subgoals=n)


def scores_report(selection: SelectionResult, batch: list[TrialLog]) -> str:
    """scores.json payload: per-trial index, seed, both signals, psi, and
    the selection flag."""
    rows = []
    for score, log in zip(selection.scores, batch):
        rows.append(
            {
                "index": score.trial_index,
                "seed": log.seed,
                "severity": score.severity,
                "divergence": score.divergence,
                "psi": score.psi,
                "selected": score.selected,
            }
        )
    payload = {
        "selected_index": selection.index,
        "all_success": selection.all_success,
        "trials": rows,
    }
    return json.dumps(payload, indent=2) + "\n"

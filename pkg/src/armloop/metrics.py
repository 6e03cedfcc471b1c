"""Campaign metrics (ASR, Top5-ASR, CR-Iter) and code-structure metrics.

AST similarity is 1 - TED(a, b) / max(nodes(a), nodes(b)) with unit-cost
ordered tree edit distance (Zhang-Shasha) over labeled trees. Labels keep
node kind, call names, argument names, and symbolic values, but collapse
numeric literals to a class so parameter retunes score as structural
near-identity. Everything here is a pure function of campaign artifacts and
can be recomputed offline from a run directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dsl.ast import CallStmt, FpRef, ParallelStmt, PoseLit, Program
from .dsl.parser import count_tokens, parse
from .errors import EmptyCampaignError
from .loop import CampaignResult
from .sim.model import load_trials

_SIMILARITY_NOTE = (
    "embedding- and token-overlap similarity metrics need pretrained models "
    "and are not computed offline"
)


# --- labeled trees -----------------------------------------------------------


@dataclass
class LabeledTree:
    label: tuple
    children: list = field(default_factory=list)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


def _value_label(name: str, value) -> tuple:
    if isinstance(value, bool):
        return ("arg", name, "bool", "true" if value else "false")
    if isinstance(value, (int, float)):
        return ("arg", name, "num")
    if isinstance(value, FpRef):
        return ("arg", name, "fp", value.actor)
    if isinstance(value, PoseLit):
        return ("arg", name, "pose")
    if name == "step_name":
        return ("arg", name, "str")
    return ("arg", name, "sym", str(value))


def _stmt_tree(stmt) -> LabeledTree:
    if isinstance(stmt, ParallelStmt):
        return LabeledTree(
            ("parallel",),
            [_stmt_tree(s) for s in stmt.left] + [_stmt_tree(s) for s in stmt.right],
        )
    assert isinstance(stmt, CallStmt)
    return LabeledTree(
        ("call", stmt.name),
        [LabeledTree(_value_label(name, value)) for name, value in stmt.args.items()],
    )


def program_tree(program: Program) -> LabeledTree:
    subgoal_nodes = []
    for sg in program.subgoals:
        children = [LabeledTree(("description", sg.description))]
        children += [_stmt_tree(s) for s in sg.statements]
        subgoal_nodes.append(LabeledTree(("subgoal",), children))
    return LabeledTree(("program",), subgoal_nodes)


# --- Zhang-Shasha ordered tree edit distance ---------------------------------


def _postorder(root: LabeledTree):
    """Postorder nodes and the leftmost-leaf-descendant index per node."""
    nodes: list[LabeledTree] = []
    lmds: list[int] = []

    def visit(node: LabeledTree) -> int:
        first_leaf = None
        for child in node.children:
            leaf = visit(child)
            if first_leaf is None:
                first_leaf = leaf
        nodes.append(node)
        index = len(nodes) - 1
        lmd = first_leaf if first_leaf is not None else index
        lmds.append(lmd)
        return lmd

    visit(root)
    return nodes, lmds


def _keyroots(lmds: list[int]) -> list[int]:
    seen = {}
    for i, lmd in enumerate(lmds):
        seen[lmd] = i  # the last (highest) node per leftmost leaf
    return sorted(seen.values())


def tree_edit_distance(a: LabeledTree, b: LabeledTree) -> int:
    """Unit-cost ordered TED (insert=delete=1, relabel=1 if labels differ)."""
    an, al = _postorder(a)
    bn, bl = _postorder(b)
    td = [[0] * len(bn) for _ in range(len(an))]

    def relabel(x: LabeledTree, y: LabeledTree) -> int:
        return 0 if x.label == y.label else 1

    for i in _keyroots(al):
        for j in _keyroots(bl):
            m = i - al[i] + 2
            n = j - bl[j] + 2
            fd = [[0] * n for _ in range(m)]
            ioff = al[i] - 1
            joff = bl[j] - 1
            for x in range(1, m):
                fd[x][0] = fd[x - 1][0] + 1
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + 1
            for x in range(1, m):
                for y in range(1, n):
                    if al[i] == al[x + ioff] and bl[j] == bl[y + joff]:
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[x - 1][y - 1] + relabel(an[x + ioff], bn[y + joff]),
                        )
                        td[x + ioff][y + joff] = fd[x][y]
                    else:
                        p = al[x + ioff] - 1 - ioff
                        q = bl[y + joff] - 1 - joff
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[p][q] + td[x + ioff][y + joff],
                        )
    return td[-1][-1]


def ast_similarity(a: Program, b: Program) -> float:
    ta = program_tree(a)
    tb = program_tree(b)
    denom = max(ta.size(), tb.size())
    if denom == 0:
        return 1.0
    sim = 1.0 - tree_edit_distance(ta, tb) / denom
    return min(1.0, max(0.0, sim))


# --- campaign metrics ---------------------------------------------------------


def _scored(campaign: CampaignResult) -> list:
    scored = [c for c in campaign.candidates if c.result is not None and c.n_trials > 0]
    if not scored:
        raise EmptyCampaignError("campaign has no candidates with executed trials")
    return scored


def asr(campaign: CampaignResult) -> float:
    """Goal-met trials over all trials in the candidates' final iterations."""
    scored = _scored(campaign)
    return sum(c.success_count for c in scored) / sum(c.n_trials for c in scored)


def top5_asr(campaign: CampaignResult) -> float:
    """Mean success rate of the five best candidates (all when fewer),
    ties broken by candidate id."""
    scored = _scored(campaign)
    ranked = sorted(scored, key=lambda c: (-c.success_rate, c.candidate_id))[:5]
    return sum(c.success_rate for c in ranked) / len(ranked)


def cr_iter(campaign: CampaignResult) -> float:
    """Mean iterations to exceed the success threshold; non-converged
    candidates contribute the iteration cap."""
    scored = _scored(campaign)
    return sum(c.cr_iter for c in scored) / len(scored)


# --- metrics.json -------------------------------------------------------------


def _candidate_entries(campaign: CampaignResult) -> list[dict]:
    from .dsl.printer import to_text

    entries = []
    for c in campaign.candidates:
        entry = {
            "candidate_id": c.candidate_id,
            "error": c.error,
            "success_count": c.success_count,
            "n_trials": c.n_trials,
            "cr_iter": c.cr_iter,
            "converged": bool(c.result.converged) if c.result else False,
            "final_program_text": to_text(c.result.final_program) if c.result else None,
        }
        entries.append(entry)
    return entries


def metrics_payload(task: str, entries: list[dict], threshold: float,
                    max_iterations: int, expert_text: str | None) -> dict:
    from .dsl.ast import count_nodes

    scored = [e for e in entries if e["error"] is None and e["n_trials"] > 0]
    if not scored:
        raise EmptyCampaignError("campaign has no candidates with executed trials")

    total_success = sum(e["success_count"] for e in scored)
    total_trials = sum(e["n_trials"] for e in scored)
    rates = sorted(
        ((e["success_count"] / e["n_trials"], e["candidate_id"]) for e in scored),
        key=lambda rc: (-rc[0], rc[1]),
    )
    top = rates[:5]
    expert_program = parse(expert_text) if expert_text else None

    per_candidate = []
    token_lens = []
    node_counts = []
    similarities = []
    for e in entries:
        row = {
            "candidate_id": e["candidate_id"],
            "success_count": e["success_count"],
            "n_trials": e["n_trials"],
            "success_rate": (e["success_count"] / e["n_trials"]) if e["n_trials"] else 0.0,
            "cr_iter": e["cr_iter"],
            "converged": e["converged"],
            "error": e["error"],
            "token_len": None,
            "node_count": None,
            "ast_similarity_vs_expert": None,
        }
        if e["final_program_text"]:
            program = parse(e["final_program_text"])
            row["token_len"] = count_tokens(e["final_program_text"])
            row["node_count"] = count_nodes(program)
            token_lens.append(row["token_len"])
            node_counts.append(row["node_count"])
            if expert_program is not None:
                row["ast_similarity_vs_expert"] = ast_similarity(program, expert_program)
                similarities.append(row["ast_similarity_vs_expert"])
        per_candidate.append(row)

    return {
        "task": task,
        "asr": total_success / total_trials,
        "top5_asr": sum(r for r, _ in top) / len(top),
        "cr_iter": sum(e["cr_iter"] for e in scored) / len(scored),
        "success_threshold": threshold,
        "max_iterations": max_iterations,
        "per_candidate": per_candidate,
        "ast_similarity_vs_expert": (
            sum(similarities) / len(similarities) if similarities else None
        ),
        "token_len": sum(token_lens) / len(token_lens) if token_lens else None,
        "node_count": sum(node_counts) / len(node_counts) if node_counts else None,
        "codebleu_similarity": None,
        "codebert_similarity": None,
        "unixcoder_similarity": None,
        "similarity_note": _SIMILARITY_NOTE,
    }


def metrics_from_campaign(campaign: CampaignResult, expert_text: str | None = None) -> dict:
    return metrics_payload(
        campaign.task,
        _candidate_entries(campaign),
        campaign.success_threshold,
        campaign.max_iterations,
        expert_text,
    )


def metrics_from_artifacts(run_dir) -> dict:
    """Recompute metrics.json from a persisted run directory. Matches the
    payload written at run time byte for byte."""
    run_dir = Path(run_dir)
    campaign_path = run_dir / "campaign.json"
    if not campaign_path.exists():
        raise EmptyCampaignError(f"no campaign.json under {run_dir}")
    meta = json.loads(campaign_path.read_text(encoding="utf-8"))
    threshold = float(meta["success_threshold"])
    cap = int(meta["max_iterations"])

    entries = []
    for cand in meta["candidates"]:
        cid = cand["candidate_id"]
        cand_dir = run_dir / f"cand_{cid}"
        entry = {
            "candidate_id": cid,
            "error": cand.get("error"),
            "success_count": 0,
            "n_trials": 0,
            "cr_iter": 0,
            "converged": False,
            "final_program_text": None,
        }
        iter_dirs = sorted(
            (d for d in cand_dir.glob("iter_*") if d.is_dir()),
            key=lambda d: int(d.name.split("_")[1]),
        )
        if entry["error"] is None and iter_dirs:
            converged_at = None
            for it_dir in iter_dirs:
                k = int(it_dir.name.split("_")[1])
                logs = load_trials(it_dir / "trials.jsonl")
                successes = sum(1 for log in logs if log.goal_met)
                if converged_at is None and logs and successes / len(logs) > threshold:
                    converged_at = k
                entry["success_count"] = successes
                entry["n_trials"] = len(logs)
            entry["converged"] = converged_at is not None
            entry["cr_iter"] = converged_at if converged_at is not None else cap
            entry["final_program_text"] = (iter_dirs[-1] / "program.prog").read_text(encoding="utf-8")
        entries.append(entry)

    expert_path = meta.get("expert_program")
    expert_text = Path(expert_path).read_text(encoding="utf-8") if expert_path else None
    return metrics_payload(meta["task"], entries, threshold, cap, expert_text)


def dumps_metrics(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"

"""Response synthesis from a consensus graph.

Consensus decoding concatenates nodes whose weighted degree clears a
threshold and hands the draft to an edit/abstain step. Guided
self-verification uses high-branching consensus nodes to localize candidate
errors, prunes losers via pairwise verification, and synthesizes a final
answer from the masked survivors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from . import prompts
from .corpus import ResponseSet, detokenize, tokenize_words
from .judge import ABSTAIN, Abstain
from .refine import CONSENSUS, ConsensusGraph

BOXED_RE = re.compile(r"\\boxed\{([^{}]*)\}")


def extract_boxed(text: str) -> str | None:
    """Content of the last \\boxed{...} in the text, if any."""
    matches = BOXED_RE.findall(text)
    return matches[-1] if matches else None


@dataclass
class SynthesisResult:
    outcome: str | Abstain
    method: str  # consensus | guided
    threshold: float
    trace: dict[str, Any] = field(default_factory=dict)
    judge_calls: int = 0

    @property
    def abstained(self) -> bool:
        return self.outcome is ABSTAIN

    def to_json(self) -> dict[str, Any]:
        return {
            "outcome": "abstain" if self.abstained else self.outcome,
            "method": self.method,
            "threshold": self.threshold,
            "trace": self.trace,
            "judge_calls": self.judge_calls,
        }


def consensus_decode(
    g: ConsensusGraph,
    tau: float,
    editor,
    task_label: str = "response",
) -> SynthesisResult:
    """Select nodes with weighted degree >= tau in topological order, then edit.

    Consensus nodes always qualify (degree 1.0); the edit step may abstain.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    selected: list[int] = []
    parts: list[str] = []
    for nid in g.topological_order():
        if g.is_sentinel(nid):
            continue
        if g.weighted_degree(nid) >= tau:
            selected.append(nid)
            parts.append(g.nodes[nid].text)
    draft = detokenize([t for part in parts for t in tokenize_words(part)])
    outcome = editor.edit_and_finalize(draft, task_label)
    return SynthesisResult(
        outcome=outcome,
        method="consensus",
        threshold=tau,
        trace={"selected_nodes": selected, "draft": draft},
        judge_calls=1,
    )


def _partial_through(g: ConsensusGraph, response_index: int, branch: int) -> str:
    """Response prefix up to (and including) the given disagreement node."""
    tokens: list[str] = []
    for nid in g.response_path(response_index):
        tokens.extend(tokenize_words(g.node_text_for(nid, response_index)))
        if nid == branch:
            break
    return detokenize(tokens)


def _mask_candidate(
    g: ConsensusGraph,
    response_index: int,
    uncertain_nodes: set[int],
    error_nodes: set[int],
) -> str:
    parts: list[str] = []
    for nid in g.response_path(response_index):
        text = g.node_text_for(nid, response_index)
        if not text:
            continue
        if nid in error_nodes:
            parts.append(f"{prompts.START_POSSIBLE_ERROR}{text}{prompts.END_POSSIBLE_ERROR}")
        elif nid in uncertain_nodes:
            parts.append(f"{prompts.START_UNCERTAIN}{text}{prompts.END_UNCERTAIN}")
        else:
            parts.append(text)
    return " ".join(parts)


def guided_self_verify(
    g: ConsensusGraph,
    rs: ResponseSet,
    kappa: float,
    judge,
    problem: str,
) -> SynthesisResult:
    """Prune candidates via pairwise verification at high-branching nodes.

    A consensus node is marked when its distinct disagreement successors
    divided by m reach kappa. Branch pairs are compared strongest-first;
    verdicts collect per node and pruning applies after the node's pairs are
    done. If everything is pruned, synthesis falls back to all m responses.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must be in [0, 1]")
    if rs is not None and rs.m != g.m:
        raise ValueError("response set size does not match the graph")
    m = g.m
    candidates = set(range(m))
    verify_calls = 0
    marked: list[int] = []
    verify_log: list[dict[str, Any]] = []
    pruned: dict[int, int] = {}  # candidate -> node where it was dropped
    uncertain_nodes: set[int] = set()
    error_branches: set[int] = set()

    for u in g.topological_order():
        node = g.nodes[u]
        if node.kind != CONSENSUS:
            continue
        branches = g.disagreement_successors(u)
        if len(branches) / m < kappa or len(branches) < 2:
            continue
        marked.append(u)
        uncertain_nodes.update(branches)
        # Strongest branches first: descending support, then node id.
        ordered = sorted(branches, key=lambda b: (-len(g.nodes[b].supports), b))
        zero_scored: set[int] = set()
        for ai in range(len(ordered)):
            for bi in range(ai + 1, len(ordered)):
                va, vb = ordered[ai], ordered[bi]
                ca = sorted(g.nodes[va].supports & candidates)
                cb = sorted(g.nodes[vb].supports & candidates)
                if not ca or not cb:
                    continue
                partial_a = _partial_through(g, ca[0], va)
                partial_b = _partial_through(g, cb[0], vb)
                score_a, score_b = judge.verify_pair(problem, partial_a, partial_b)
                verify_calls += 1
                verify_log.append(
                    {"node": u, "branch_a": va, "branch_b": vb, "scores": [score_a, score_b]}
                )
                if score_a == 0:
                    zero_scored.add(va)
                if score_b == 0:
                    zero_scored.add(vb)
        # Apply the node's prunes only after all its pairs were judged.
        for vb in zero_scored:
            error_branches.add(vb)
            for cand in g.nodes[vb].supports & candidates:
                pruned[cand] = u
        candidates -= set(pruned)

    all_pruned = not candidates
    survivors = sorted(candidates) if candidates else list(range(m))
    masked = [_mask_candidate(g, i, uncertain_nodes, error_branches) for i in survivors]
    final_text = judge.synthesize_final(problem, masked)
    boxed = extract_boxed(final_text)
    return SynthesisResult(
        outcome=boxed if boxed is not None else final_text,
        method="guided",
        threshold=kappa,
        trace={
            "marked_nodes": marked,
            "verify": verify_log,
            "pruned": {str(k): v for k, v in sorted(pruned.items())},
            "survivors": survivors,
            "all_pruned": all_pruned,
            "raw_synthesis": final_text,
        },
        judge_calls=verify_calls + 1,
    )

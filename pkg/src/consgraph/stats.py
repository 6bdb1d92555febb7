"""Descriptive graph statistics and the segment-wise lexical-overlap profile."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, asdict
from itertools import combinations
from typing import Any

from .corpus import STOPWORDS, ResponseSet, is_punct_token, tokenize_words
from .errors import TooShort
from .refine import DISAGREEMENT, ConsensusGraph

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


@dataclass
class GraphStats:
    prompt_id: str
    n_nodes: int
    pct_consensus: float
    pct_disagreement: float
    mean_words_consensus: float
    mean_words_disagreement: float
    mean_branches_after_consensus: float
    pct_stopword_only_consensus: float
    pct_stopword_only_disagreement: float
    degenerate: bool

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def _word_count(text: str) -> int:
    return sum(1 for t in tokenize_words(text) if not is_punct_token(t))


def _stopword_only(text: str) -> bool:
    words = [t.lower() for t in tokenize_words(text)]
    return bool(words) and all(is_punct_token(w) or w in STOPWORDS for w in words)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def graph_stats(g: ConsensusGraph) -> GraphStats:
    """Node-level statistics, sentinels excluded."""
    consensus = [g.nodes[n] for n in g.interior_consensus_ids()]
    disagreement = [n for n in g.nodes.values() if n.kind == DISAGREEMENT]
    total = len(consensus) + len(disagreement)

    branches = []
    for node in consensus:
        branches.append(len(g.disagreement_successors(node.node_id)))

    def pct(part: int, whole: int) -> float:
        return 100.0 * part / whole if whole else 0.0

    return GraphStats(
        prompt_id=g.prompt_id,
        n_nodes=total,
        pct_consensus=pct(len(consensus), total),
        pct_disagreement=pct(len(disagreement), total),
        mean_words_consensus=_mean([float(_word_count(n.text)) for n in consensus]),
        mean_words_disagreement=_mean([float(_word_count(n.text)) for n in disagreement]),
        mean_branches_after_consensus=_mean([float(b) for b in branches]),
        pct_stopword_only_consensus=pct(
            sum(1 for n in consensus if _stopword_only(n.text)), len(consensus)
        ),
        pct_stopword_only_disagreement=pct(
            sum(1 for n in disagreement if _stopword_only(n.text)), len(disagreement)
        ),
        degenerate=not consensus,
    )


def stats_table(rows: list[GraphStats]) -> str:
    """Aligned-column text table over per-graph statistics."""
    headers = [
        "prompt_id",
        "#Nodes",
        "%C",
        "%D",
        "Words C",
        "Words D",
        "Branches C",
        "%StopC",
        "%StopD",
        "Degenerate",
    ]
    body = [
        [
            r.prompt_id,
            str(r.n_nodes),
            f"{r.pct_consensus:.1f}",
            f"{r.pct_disagreement:.1f}",
            f"{r.mean_words_consensus:.2f}",
            f"{r.mean_words_disagreement:.2f}",
            f"{r.mean_branches_after_consensus:.2f}",
            f"{r.pct_stopword_only_consensus:.1f}",
            f"{r.pct_stopword_only_disagreement:.1f}",
            "yes" if r.degenerate else "no",
        ]
        for r in rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for row in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"


def _segments(tokens: list[str], n_quantiles: int) -> list[list[str]]:
    """Contiguous near-equal split; remainder tokens go to the earliest segments."""
    n = len(tokens)
    base, rem = divmod(n, n_quantiles)
    out = []
    pos = 0
    for q in range(n_quantiles):
        size = base + (1 if q < rem else 0)
        out.append(tokens[pos : pos + size])
        pos += size
    return out


def _jaccard_words(a: list[str], b: list[str]) -> float:
    sa = {t.lower() for t in a}
    sb = {t.lower() for t in b}
    if not sa and not sb:
        return 1.0
    union = sa | sb
    return len(sa & sb) / len(union) if union else 1.0


def _shuffle_sentences(text: str, rng: random.Random) -> str:
    sentences = [s for s in _SENTENCE_SPLIT.split(text) if s.strip()]
    rng.shuffle(sentences)
    return " ".join(sentences)


def lexical_overlap_profile(
    rs: ResponseSet,
    n_quantiles: int = 10,
    shuffle_baseline: bool = False,
    seed: int = 0,
) -> list[float]:
    """Mean pairwise Jaccard similarity of word sets per ordered segment.

    With shuffle_baseline, each response is first shuffled at sentence level
    (deterministic for a fixed seed) before splitting into quantiles.
    """
    if n_quantiles < 1:
        raise ValueError("n_quantiles must be >= 1")
    if shuffle_baseline:
        rng = random.Random(seed)
        token_seqs = [
            tokenize_words(_shuffle_sentences(resp, rng)) for resp in rs.responses
        ]
    else:
        token_seqs = rs.token_seqs
    for idx, seq in enumerate(token_seqs):
        if len(seq) < n_quantiles:
            raise TooShort(
                f"response {idx} has {len(seq)} tokens, fewer than {n_quantiles} quantiles"
            )
    per_response = [_segments(seq, n_quantiles) for seq in token_seqs]
    profile = []
    for q in range(n_quantiles):
        sims = [
            _jaccard_words(per_response[i][q], per_response[j][q])
            for i, j in combinations(range(rs.m), 2)
        ]
        profile.append(_mean(sims) if sims else 1.0)
    return profile

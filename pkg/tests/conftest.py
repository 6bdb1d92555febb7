import random
from pathlib import Path

import pytest

from consgraph.align import LexicalDag
from consgraph.corpus import ResponseSet, load_response_sets
from consgraph.judge import Judge, OfflineProvider
from consgraph.refine import ConsensusGraph

DATA_DIR = Path(__file__).parent / "data"

VOCAB = ["alpha", "beta", "gamma", "delta", "echo", "foxtrot", "golf", "hotel"]
PUNCT = [".", ","]


@pytest.fixture
def bio_response_set() -> ResponseSet:
    return next(load_response_sets(DATA_DIR / "biographies.jsonl"))


@pytest.fixture
def offline_judge() -> Judge:
    return Judge(OfflineProvider())


def random_response_set(rng: random.Random, max_m: int = 6, max_tokens: int = 40) -> ResponseSet:
    """Correlated random responses: mutations of a shared base sequence."""
    base_len = rng.randint(4, max_tokens)
    base = [rng.choice(VOCAB) for _ in range(base_len)]
    m = rng.randint(1, max_m)
    responses = []
    for _ in range(m):
        tokens = []
        for tok in base:
            r = rng.random()
            if r < 0.1:
                continue  # drop
            if r < 0.2:
                tokens.append(rng.choice(VOCAB))  # substitute
            else:
                tokens.append(tok)
            if rng.random() < 0.08:
                tokens.append(rng.choice(VOCAB + PUNCT))  # insert
        if not tokens:
            tokens = [rng.choice(VOCAB)]
        text = tokens[0]
        for tok in tokens[1:]:
            text += tok if tok in PUNCT else " " + tok
        responses.append(text)
    return ResponseSet(prompt_id=f"rand-{rng.randint(0, 10**9)}", prompt="", responses=responses)


def check_dag_invariants(dag: LexicalDag) -> None:
    """Acyclicity, flow conservation, and per-response path reconstruction."""
    dag.topological_order()  # raises on cycles
    for nid, node in dag.nodes.items():
        if nid == dag.END:
            continue
        out_support = sum(len(dag.edges[(nid, w)]) for w in dag.succ[nid])
        assert out_support == len(node.supports), f"flow violated at node {nid}"


def check_graph_invariants(g: ConsensusGraph) -> None:
    g.topological_order()
    for nid, node in g.nodes.items():
        if nid == g.end:
            continue
        out_support = sum(len(g.edges[(nid, w)]) for w in g.succ[nid])
        assert out_support == len(node.supports), f"flow violated at node {nid}"
    # Consensus nodes carry full support; response paths alternate kinds.
    for nid in g.interior_consensus_ids():
        assert len(g.nodes[nid].supports) == g.m
    for i in range(g.m):
        path = g.response_path(i)
        kinds = [g.nodes[n].kind for n in path]
        for a, b in zip(kinds, kinds[1:]):
            if a == "disagreement":
                assert b == "consensus", "two adjacent disagreement nodes on one path"

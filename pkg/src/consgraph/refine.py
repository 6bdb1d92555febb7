"""Refine a lexical DAG into a consensus/disagreement graph.

Full-agreement chains collapse into consensus nodes, the per-response paths
between consecutive anchors become regions, and a judge clusters each
region's phrasings into semantic equivalence classes that turn into
disagreement nodes.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any

from .align import LexicalDag, ScoringParams, build_lexical_dag
from .corpus import ResponseSet, detokenize, tokenize_words
from .errors import RegionJudgeError

CONSENSUS = "consensus"
DISAGREEMENT = "disagreement"
FRAGMENT = "fragment"


@dataclass
class MergedNode:
    node_id: int
    kind: str  # consensus | fragment
    text: str
    supports: set[int]


class MergedGraph:
    """Intermediate graph after consensus-chain merging.

    Consensus nodes (and the sentinels) act as anchors; leftover single-token
    fragment nodes fill the stretches between them.
    """

    def __init__(self, m: int, start: int, end: int):
        self.m = m
        self.start = start
        self.end = end
        self.nodes: dict[int, MergedNode] = {}
        self.edges: dict[tuple[int, int], set[int]] = {}
        self.succ: dict[int, list[int]] = {}
        self.pred: dict[int, list[int]] = {}

    def add_node(self, node: MergedNode) -> None:
        self.nodes[node.node_id] = node
        self.succ[node.node_id] = []
        self.pred[node.node_id] = []

    def add_edge(self, u: int, v: int, supports: set[int]) -> None:
        key = (u, v)
        if key not in self.edges:
            self.edges[key] = set()
            self.succ[u].append(v)
            self.pred[v].append(u)
        self.edges[key] |= supports

    def topological_order(self) -> list[int]:
        indeg = {nid: len(self.pred[nid]) for nid in self.nodes}
        ready = [nid for nid, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order: list[int] = []
        while ready:
            nid = heapq.heappop(ready)
            order.append(nid)
            for w in self.succ[nid]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(ready, w)
        if len(order) != len(self.nodes):
            raise ValueError("merged graph contains a cycle")
        return order

    def anchors(self) -> list[int]:
        """Anchor ids (sentinels and consensus nodes) in path order."""
        return [
            nid
            for nid in self.topological_order()
            if nid in (self.start, self.end) or self.nodes[nid].kind == CONSENSUS
        ]

    def next_on_path(self, nid: int, response_index: int) -> int:
        for w in self.succ[nid]:
            if response_index in self.edges[(nid, w)]:
                return w
        raise ValueError(f"response {response_index} stuck at node {nid}")


def merge_consensus(dag: LexicalDag) -> MergedGraph:
    """Collapse maximal full-support chains into consensus nodes.

    A chain grows across an edge only when the edge itself carries all m
    responses, so reordered-but-shared tokens stay split. Sentinels are kept
    as separate anchors and never merged into a chain.
    """
    m = dag.m
    order = dag.topological_order()
    full = lambda nid: nid not in (dag.START, dag.END) and len(dag.nodes[nid].supports) == m

    chain_of: dict[int, int] = {}
    chains: dict[int, list[int]] = {}
    for nid in order:
        if not full(nid) or nid in chain_of:
            continue
        chain = [nid]
        chain_of[nid] = nid
        current = nid
        while True:
            nxt = [
                w
                for w in dag.succ[current]
                if full(w) and len(dag.edges[(current, w)]) == m and w not in chain_of
            ]
            if len(nxt) != 1:
                break
            current = nxt[0]
            chain.append(current)
            chain_of[current] = nid
        chains[nid] = chain

    merged = MergedGraph(m, start=-1, end=-2)
    remap: dict[int, int] = {}
    next_id = 0
    for nid in order:
        if nid == dag.START:
            merged.start = next_id
            merged.add_node(MergedNode(next_id, CONSENSUS, "", set(dag.nodes[nid].supports)))
            remap[nid] = next_id
            next_id += 1
        elif nid == dag.END:
            merged.end = next_id
            merged.add_node(MergedNode(next_id, CONSENSUS, "", set(dag.nodes[nid].supports)))
            remap[nid] = next_id
            next_id += 1
        elif nid in chain_of:
            head = chain_of[nid]
            if nid == head:
                tokens = [dag.nodes[c].token for c in chains[head]]
                merged.add_node(
                    MergedNode(next_id, CONSENSUS, detokenize(tokens), set(dag.nodes[nid].supports))
                )
                remap[nid] = next_id
                next_id += 1
            else:
                remap[nid] = remap[head]
        else:
            merged.add_node(
                MergedNode(next_id, FRAGMENT, dag.nodes[nid].token, set(dag.nodes[nid].supports))
            )
            remap[nid] = next_id
            next_id += 1

    for (u, v), sup in dag.edges.items():
        mu, mv = remap[u], remap[v]
        if mu == mv:
            continue
        merged.add_edge(mu, mv, set(sup))
    return merged


@dataclass
class Region:
    """Per-response texts between two consecutive anchors."""

    left: int
    right: int
    paths: dict[int, str]

    def distinct_texts(self) -> list[str]:
        """Distinct non-empty texts, ordered by lowest contributing response."""
        seen: dict[str, int] = {}
        for idx in sorted(self.paths):
            text = self.paths[idx]
            if text and text not in seen:
                seen[text] = idx
        return sorted(seen, key=seen.get)


def extract_regions(merged: MergedGraph) -> list[Region]:
    """Collect inter-anchor paths per response; all-empty stretches are skipped."""
    anchors = merged.anchors()
    anchor_pos = {nid: k for k, nid in enumerate(anchors)}
    paths: dict[tuple[int, int], dict[int, str]] = {
        (a, b): {} for a, b in zip(anchors, anchors[1:])
    }
    for i in range(merged.m):
        current = merged.start
        left = merged.start
        fragments: list[str] = []
        while current != merged.end:
            nxt = merged.next_on_path(current, i)
            if nxt in anchor_pos:
                paths[(left, nxt)][i] = detokenize(
                    [t for frag in fragments for t in tokenize_words(frag)]
                )
                left = nxt
                fragments = []
            else:
                fragments.append(merged.nodes[nxt].text)
            current = nxt
    return [
        Region(left, right, p)
        for (left, right), p in paths.items()
        if any(text for text in p.values())
    ]


@dataclass
class CGNode:
    node_id: int
    kind: str  # consensus | disagreement
    text: str
    supports: set[int]
    phrasings: dict[int, str] = field(default_factory=dict)


class ConsensusGraph:
    """Final DAG of consensus and disagreement nodes with sentinels."""

    def __init__(self, m: int, prompt_id: str = "", config: dict[str, Any] | None = None):
        self.m = m
        self.prompt_id = prompt_id
        self.config = config or {}
        self.nodes: dict[int, CGNode] = {}
        self.edges: dict[tuple[int, int], set[int]] = {}
        self.succ: dict[int, list[int]] = {}
        self.pred: dict[int, list[int]] = {}
        self.start = -1
        self.end = -1
        self._next_id = 0

    # -- construction ------------------------------------------------------

    def add_node(
        self,
        kind: str,
        text: str,
        supports: set[int],
        phrasings: dict[int, str] | None = None,
    ) -> int:
        nid = self._next_id
        self._next_id += 1
        self.nodes[nid] = CGNode(nid, kind, text, set(supports), dict(phrasings or {}))
        self.succ[nid] = []
        self.pred[nid] = []
        return nid

    def add_edge(self, u: int, v: int, supports: set[int]) -> None:
        key = (u, v)
        if key not in self.edges:
            self.edges[key] = set()
            self.succ[u].append(v)
            self.pred[v].append(u)
        self.edges[key] |= supports

    # -- queries -----------------------------------------------------------

    def is_sentinel(self, nid: int) -> bool:
        return nid in (self.start, self.end)

    def weighted_degree(self, nid: int) -> float:
        return len(self.nodes[nid].supports) / self.m

    def topological_order(self) -> list[int]:
        indeg = {nid: len(self.pred[nid]) for nid in self.nodes}
        ready = [nid for nid, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order: list[int] = []
        while ready:
            nid = heapq.heappop(ready)
            order.append(nid)
            for w in self.succ[nid]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(ready, w)
        if len(order) != len(self.nodes):
            raise ValueError("consensus graph contains a cycle")
        return order

    def response_path(self, response_index: int) -> list[int]:
        path = [self.start]
        current = self.start
        while current != self.end:
            nxt = [
                v for v in self.succ[current] if response_index in self.edges[(current, v)]
            ]
            if len(nxt) != 1:
                raise ValueError(
                    f"response {response_index} has {len(nxt)} out-edges at node {current}"
                )
            current = nxt[0]
            path.append(current)
        return path

    def node_text_for(self, nid: int, response_index: int) -> str:
        """The text node nid contributes to one response's reconstruction."""
        node = self.nodes[nid]
        if node.kind == DISAGREEMENT:
            return node.phrasings.get(response_index, "")
        return node.text

    def reconstruct_response(self, response_index: int) -> str:
        tokens: list[str] = []
        for nid in self.response_path(response_index):
            tokens.extend(tokenize_words(self.node_text_for(nid, response_index)))
        return detokenize(tokens)

    def reconstruct_responses(self) -> list[str]:
        return [self.reconstruct_response(i) for i in range(self.m)]

    def interior_consensus_ids(self) -> list[int]:
        return [
            nid
            for nid, node in self.nodes.items()
            if node.kind == CONSENSUS and not self.is_sentinel(nid)
        ]

    def disagreement_successors(self, nid: int) -> list[int]:
        return [v for v in self.succ[nid] if self.nodes[v].kind == DISAGREEMENT]

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "prompt_id": self.prompt_id,
            "m": self.m,
            "start": self.start,
            "end": self.end,
            "config": self.config,
            "nodes": [
                {
                    "id": nid,
                    "kind": node.kind,
                    "text": node.text,
                    "supports": sorted(node.supports),
                    "phrasings": {str(k): v for k, v in sorted(node.phrasings.items())},
                }
                for nid, node in sorted(self.nodes.items())
            ],
            "edges": [
                {"from": u, "to": v, "supports": sorted(sup)}
                for (u, v), sup in sorted(self.edges.items())
            ],
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "ConsensusGraph":
        g = cls(m=doc["m"], prompt_id=doc.get("prompt_id", ""), config=doc.get("config", {}))
        for nd in doc["nodes"]:
            nid = g.add_node(
                nd["kind"],
                nd["text"],
                set(nd["supports"]),
                {int(k): v for k, v in nd.get("phrasings", {}).items()},
            )
            assert nid == nd["id"], "node ids must be dense and ordered"
        g.start = doc["start"]
        g.end = doc["end"]
        for ed in doc["edges"]:
            g.add_edge(ed["from"], ed["to"], set(ed["supports"]))
        return g

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ConsensusGraph":
        return cls.from_json(json.loads(text))

    def to_dot(self) -> str:
        """Graphviz DOT export: consensus nodes green, disagreement blue."""

        def esc(s: str) -> str:
            return s.replace("\\", "\\\\").replace('"', '\\"')

        lines = ["digraph consensus_graph {", "  rankdir=LR;", "  node [style=filled];"]
        for nid, node in sorted(self.nodes.items()):
            if self.is_sentinel(nid):
                label = "START" if nid == self.start else "END"
                color = "lightgray"
                shape = "ellipse"
            elif node.kind == CONSENSUS:
                label = node.text
                color = "palegreen"
                shape = "box"
            else:
                label = node.text
                color = "lightblue"
                shape = "box"
            lines.append(f'  n{nid} [label="{esc(label)}", fillcolor={color}, shape={shape}];')
        for (u, v), sup in sorted(self.edges.items()):
            weight = len(sup) / self.m
            lines.append(f'  n{u} -> n{v} [label="{weight:.2f}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


class _UnionFind:
    def __init__(self, items: list[str]):
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def install_disagreement_nodes(
    merged: MergedGraph,
    regions: list[Region],
    judge,
    task_kind: str = "text",
    prompt_id: str = "",
    config: dict[str, Any] | None = None,
) -> ConsensusGraph:
    """Build the final graph by clustering each region into disagreement nodes.

    Exact-duplicate texts are pre-clustered; the judge is only asked about
    pairs of distinct texts not already in one component, so a region with k
    distinct texts costs at most k(k-1)/2 queries. A class's node takes the
    longest member text (lowest response index on ties) and the union of the
    members' response supports.
    """
    anchors = merged.anchors()
    region_by_pair = {(r.left, r.right): r for r in regions}

    g = ConsensusGraph(merged.m, prompt_id=prompt_id, config=config)
    remap: dict[int, int] = {}
    for a in anchors:
        node = merged.nodes[a]
        remap[a] = g.add_node(CONSENSUS, node.text, set(node.supports))
    g.start = remap[merged.start]
    g.end = remap[merged.end]

    full = set(range(merged.m))
    for left, right in zip(anchors, anchors[1:]):
        gl, gr = remap[left], remap[right]
        region = region_by_pair.get((left, right))
        if region is None:
            g.add_edge(gl, gr, set(full))
            continue

        empty_supports = {i for i, text in region.paths.items() if not text}
        if empty_supports:
            g.add_edge(gl, gr, empty_supports)

        texts = region.distinct_texts()
        uf = _UnionFind(texts)
        for a, b in combinations(texts, 2):
            if uf.find(a) == uf.find(b):
                continue
            try:
                if judge.judge_equivalent(a, b, task_kind):
                    uf.union(a, b)
            except Exception as exc:
                raise RegionJudgeError(str(left), str(right), exc) from exc

        classes: dict[str, list[str]] = {}
        for text in texts:
            classes.setdefault(uf.find(text), []).append(text)
        for root in sorted(classes, key=texts.index):
            members = classes[root]
            supports = {i for i, t in region.paths.items() if t in members}
            best = max(
                members,
                key=lambda t: (len(t), -min(i for i, p in region.paths.items() if p == t)),
            )
            nid = g.add_node(
                DISAGREEMENT,
                best,
                supports,
                phrasings={i: region.paths[i] for i in sorted(supports)},
            )
            g.add_edge(gl, nid, set(supports))
            g.add_edge(nid, gr, set(supports))
    return g


def build_consensus_graph(
    rs: ResponseSet,
    judge,
    params: ScoringParams | None = None,
    task_kind: str = "text",
) -> ConsensusGraph:
    """Full pipeline: lexical DAG -> merged anchors -> disagreement nodes."""
    params = params or ScoringParams()
    dag = build_lexical_dag(rs, params)
    merged = merge_consensus(dag)
    regions = extract_regions(merged)
    config = {
        "scoring": {
            "match_penalty": params.match_penalty,
            "mismatch_penalty": params.mismatch_penalty,
            "gap_open_penalty": params.gap_open_penalty,
            "gap_extend_penalty": params.gap_extend_penalty,
        },
        "task_kind": task_kind,
        "judge": getattr(judge, "describe", lambda: {})(),
    }
    return install_disagreement_nodes(
        merged, regions, judge, task_kind=task_kind, prompt_id=rs.prompt_id, config=config
    )

"""Partial-order alignment of token sequences into a weighted lexical DAG.

Each response is aligned against the growing graph with a Needleman-Wunsch
dynamic program extended over DAG predecessors, using Gotoh-style affine gap
penalties. Tokens that align to an existing node with an exact string match
fuse into that node; mismatched or gapped tokens create new nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import ResponseSet
from .errors import DuplicateResponse, EmptySequence

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ScoringParams:
    """Alignment scoring constants; opening a gap costs open + extend."""

    match_penalty: float = 1.0
    mismatch_penalty: float = -2.0
    gap_open_penalty: float = -1.0
    gap_extend_penalty: float = -1.0

    def __post_init__(self) -> None:
        if self.match_penalty <= 0:
            raise ValueError("match_penalty must be positive")
        if self.mismatch_penalty >= 0:
            raise ValueError("mismatch_penalty must be negative")
        if self.gap_open_penalty > 0 or self.gap_extend_penalty > 0:
            raise ValueError("gap penalties must be <= 0")

    def score(self, a: str, b: str) -> float:
        return self.match_penalty if a == b else self.mismatch_penalty

    @property
    def gap_start(self) -> float:
        return self.gap_open_penalty + self.gap_extend_penalty


@dataclass
class DagNode:
    node_id: int
    token: str
    supports: set[int]


class LexicalDag:
    """Weighted token DAG with START/END sentinels.

    Every node carries one token and the set of response indices whose path
    passes through it; edges carry the responses that traverse them. For each
    response the supported nodes form exactly one start-to-end path.
    """

    START = 0
    END = 1

    def __init__(self, m: int):
        self.m = m
        self.nodes: dict[int, DagNode] = {
            self.START: DagNode(self.START, "", set()),
            self.END: DagNode(self.END, "", set()),
        }
        self.edges: dict[tuple[int, int], set[int]] = {}
        self.succ: dict[int, list[int]] = {self.START: [], self.END: []}
        self.pred: dict[int, list[int]] = {self.START: [], self.END: []}
        self._next_id = 2
        self.response_indices: set[int] = set()

    # -- construction ------------------------------------------------------

    def add_node(self, token: str) -> int:
        nid = self._next_id
        self._next_id += 1
        self.nodes[nid] = DagNode(nid, token, set())
        self.succ[nid] = []
        self.pred[nid] = []
        return nid

    def add_edge_support(self, u: int, v: int, response_index: int) -> None:
        key = (u, v)
        if key not in self.edges:
            self.edges[key] = set()
            self.succ[u].append(v)
            self.pred[v].append(u)
        self.edges[key].add(response_index)

    def add_path(self, node_ids: list[int], response_index: int) -> None:
        """Register a response's start-to-end path through the given nodes."""
        full = [self.START, *node_ids, self.END]
        for nid in full:
            self.nodes[nid].supports.add(response_index)
        for u, v in zip(full, full[1:]):
            self.add_edge_support(u, v, response_index)
        self.response_indices.add(response_index)

    # -- queries -----------------------------------------------------------

    def weighted_degree(self, node_id: int) -> float:
        return len(self.nodes[node_id].supports) / self.m

    def topological_order(self) -> list[int]:
        """Kahn's algorithm with smallest-id tie-breaking (deterministic)."""
        indeg = {nid: len(self.pred[nid]) for nid in self.nodes}
        import heapq

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
            raise ValueError("graph contains a cycle")
        return order

    def response_path(self, response_index: int) -> list[int]:
        """Node ids visited by one response, sentinels included."""
        path = [self.START]
        current = self.START
        while current != self.END:
            nxt = [v for v in self.succ[current] if response_index in self.edges[(current, v)]]
            if len(nxt) != 1:
                raise ValueError(
                    f"response {response_index} has {len(nxt)} out-edges at node {current}"
                )
            current = nxt[0]
            path.append(current)
        return path


# -- pairwise alignment ----------------------------------------------------

# Column on each side is a token index or None (gap).
AlignmentColumn = tuple[int | None, int | None]

# DP states: M = aligned pair, X = gap in sequence (graph/first side consumed),
# Y = gap in graph (sequence/second side consumed).
_M, _X, _Y = 0, 1, 2


def align_pair(
    seq_a: list[str], seq_b: list[str], params: ScoringParams | None = None
) -> tuple[list[AlignmentColumn], float]:
    """Optimal global alignment of two token sequences under affine gaps.

    Returns (columns, score); each column pairs a token index from either
    side with either a token index or a gap (None) on the other. Ties prefer
    match, then mismatch, then a gap on the second side, then a gap on the
    first.
    """
    params = params or ScoringParams()
    if not seq_a or not seq_b:
        raise EmptySequence("align_pair requires two non-empty sequences")
    n, k = len(seq_a), len(seq_b)
    go, ge = params.gap_open_penalty, params.gap_extend_penalty

    M = [[NEG_INF] * (k + 1) for _ in range(n + 1)]
    X = [[NEG_INF] * (k + 1) for _ in range(n + 1)]  # seq_a consumed, gap in b
    Y = [[NEG_INF] * (k + 1) for _ in range(n + 1)]  # seq_b consumed, gap in a
    M[0][0] = 0.0
    for i in range(1, n + 1):
        X[i][0] = go + ge * i
    for j in range(1, k + 1):
        Y[0][j] = go + ge * j

    for i in range(1, n + 1):
        for j in range(1, k + 1):
            s = params.score(seq_a[i - 1], seq_b[j - 1])
            M[i][j] = max(M[i - 1][j - 1], X[i - 1][j - 1], Y[i - 1][j - 1]) + s
            X[i][j] = max(M[i - 1][j] + go + ge, Y[i - 1][j] + go + ge, X[i - 1][j] + ge)
            Y[i][j] = max(M[i][j - 1] + go + ge, X[i][j - 1] + go + ge, Y[i][j - 1] + ge)

    # Preference order on equal scores: aligned column (match or mismatch) >
    # gap on the first side (Y) > gap on the second side (X).
    def pick_state(i: int, j: int) -> int:
        best = max(M[i][j], X[i][j], Y[i][j])
        for st in (_M, _Y, _X):
            if (M, X, Y)[st][i][j] == best:
                return st
        raise AssertionError

    columns: list[AlignmentColumn] = []
    i, j = n, k
    state = pick_state(i, j)
    score = (M, X, Y)[state][i][j]
    while i > 0 or j > 0:
        if state == _M:
            columns.append((i - 1, j - 1))
            s = params.score(seq_a[i - 1], seq_b[j - 1])
            cand = [
                (st, (M, X, Y)[st][i - 1][j - 1] + s) for st in (_M, _Y, _X)
            ]
            target = (M, X, Y)[_M][i][j]
            state = next(st for st, val in cand if val == target)
            i, j = i - 1, j - 1
        elif state == _X:
            columns.append((i - 1, None))
            target = X[i][j]
            if i - 1 == 0 and j == 0:
                state = _M
            elif X[i - 1][j] + ge == target:
                state = _X
            elif M[i - 1][j] + go + ge == target:
                state = _M
            else:
                state = _Y
            i -= 1
        else:  # _Y
            columns.append((None, j - 1))
            target = Y[i][j]
            if i == 0 and j - 1 == 0:
                state = _M
            elif Y[i][j - 1] + ge == target:
                state = _Y
            elif M[i][j - 1] + go + ge == target:
                state = _M
            else:
                state = _X
            j -= 1
    columns.reverse()
    return columns, score


# -- graph alignment -------------------------------------------------------


def align_to_graph(
    dag: LexicalDag,
    seq: list[str],
    response_index: int,
    params: ScoringParams | None = None,
) -> LexicalDag:
    """Align one token sequence into the DAG, mutating and returning it.

    Runs the affine-gap dynamic program over (graph node, sequence position)
    cells, where every DAG predecessor of a node feeds its cell. Exact-match
    alignments fuse into existing nodes; everything else becomes new nodes
    chained along the response's path.
    """
    params = params or ScoringParams()
    if not seq:
        raise EmptySequence("cannot align an empty sequence")
    if response_index in dag.response_indices:
        raise DuplicateResponse(f"response {response_index} already in graph")

    go, ge = params.gap_open_penalty, params.gap_extend_penalty
    n = len(seq)
    order = [nid for nid in dag.topological_order() if nid not in (dag.START, dag.END)]

    # Cell values per node id: lists indexed by sequence position 0..n.
    M: dict[int, list[float]] = {}
    X: dict[int, list[float]] = {}
    Y: dict[int, list[float]] = {}
    # Backpointers: (prev_node, prev_j, prev_state) per state.
    bp: dict[tuple[int, int, int], tuple[int, int, int]] = {}

    # Start sentinel: nothing consumed; leading sequence tokens are a gap run.
    M[dag.START] = [0.0] + [NEG_INF] * n
    X[dag.START] = [NEG_INF] * (n + 1)
    Y[dag.START] = [NEG_INF] + [go + ge * j for j in range(1, n + 1)]
    for j in range(1, n + 1):
        bp[(dag.START, j, _Y)] = (dag.START, j - 1, _M if j == 1 else _Y)

    tables = (M, X, Y)

    def best_from(p: int, j: int, adds: tuple[float, float, float]) -> tuple[float, int]:
        """Best (value, state) entering from cell (p, j) with per-state bonus."""
        vals = (M[p][j] + adds[0], X[p][j] + adds[1], Y[p][j] + adds[2])
        # Preference: M > Y > X on ties.
        best_state = _M
        best_val = vals[_M]
        for st in (_Y, _X):
            if vals[st] > best_val:
                best_val, best_state = vals[st], st
        return best_val, best_state

    for v in order:
        tok = dag.nodes[v].token
        M[v] = [NEG_INF] * (n + 1)
        X[v] = [NEG_INF] * (n + 1)
        Y[v] = [NEG_INF] * (n + 1)
        preds = sorted(dag.pred[v])
        for j in range(0, n + 1):
            # X: node v consumed against a gap in the sequence.
            best_val, best_ptr = NEG_INF, None
            for p in preds:
                val, st = best_from(p, j, (go + ge, ge, go + ge))
                if val > best_val:
                    best_val, best_ptr = val, (p, j, st)
            if best_ptr is not None:
                X[v][j] = best_val
                bp[(v, j, _X)] = best_ptr
            # M: node v aligned with seq[j-1].
            if j >= 1:
                s = params.score(tok, seq[j - 1])
                best_val, best_ptr = NEG_INF, None
                for p in preds:
                    val, st = best_from(p, j - 1, (s, s, s))
                    if val > best_val:
                        best_val, best_ptr = val, (p, j - 1, st)
                if best_ptr is not None:
                    M[v][j] = best_val
                    bp[(v, j, _M)] = best_ptr
                # Y: seq[j-1] consumed against a gap while sitting at v.
                vals = (
                    M[v][j - 1] + go + ge,
                    X[v][j - 1] + go + ge,
                    Y[v][j - 1] + ge,
                )
                best_state = _M
                best_val = vals[_M]
                for st in (_Y, _X):
                    if vals[st] > best_val:
                        best_val, best_state = vals[st], st
                if best_val > NEG_INF:
                    Y[v][j] = best_val
                    bp[(v, j, _Y)] = (v, j - 1, best_state)

    # Choose the best final cell among END's predecessors at j = n.
    final_preds = sorted(dag.pred[dag.END]) or [dag.START]
    best_val, best_cell = NEG_INF, None
    for p in final_preds:
        for st in (_M, _Y, _X):
            val = tables[st][p][n]
            if val > best_val:
                best_val, best_cell = val, (p, n, st)
    assert best_cell is not None
    dag.last_alignment_score = best_val

    # Trace back to (START, 0, M), collecting alignment columns.
    columns: list[tuple[int | None, int | None]] = []  # (node_id | None, seq_pos | None)
    node, j, state = best_cell
    while not (node == dag.START and j == 0):
        if state == _M:
            columns.append((node, j - 1))
        elif state == _X:
            columns.append((node, None))
        else:
            columns.append((None, j - 1))
        node, j, state = bp[(node, j, state)]
    columns.reverse()

    # Build the response path: fuse exact matches, create nodes otherwise.
    path: list[int] = []
    for gnode, spos in columns:
        if spos is None:
            continue  # graph-only column: not on this response's path
        token = seq[spos]
        if gnode is not None and dag.nodes[gnode].token == token:
            path.append(gnode)
        else:
            path.append(dag.add_node(token))
    dag.add_path(path, response_index)
    return dag


def build_lexical_dag(rs: ResponseSet, params: ScoringParams | None = None) -> LexicalDag:
    """Fold every response of the set into one weighted lexical DAG."""
    params = params or ScoringParams()
    dag = LexicalDag(rs.m)
    first = [dag.add_node(tok) for tok in rs.token_seqs[0]]
    dag.add_path(first, 0)
    for idx in range(1, rs.m):
        align_to_graph(dag, rs.token_seqs[idx], idx, params)
    return dag

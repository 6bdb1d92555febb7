"""Fuse sampled LM responses into a weighted consensus/disagreement DAG and
synthesize a single response via consensus decoding or guided
self-verification."""

from .align import LexicalDag, ScoringParams, align_pair, align_to_graph, build_lexical_dag
from .corpus import ResponseSet, detokenize, load_response_sets, tokenize
from .decode import SynthesisResult, consensus_decode, extract_boxed, guided_self_verify
from .judge import ABSTAIN, Abstain, Judge, JudgeVerdict, OfflineProvider, RemoteProvider, VerdictCache
from .refine import (
    ConsensusGraph,
    Region,
    build_consensus_graph,
    extract_regions,
    install_disagreement_nodes,
    merge_consensus,
)
from .stats import GraphStats, graph_stats, lexical_overlap_profile

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "Abstain",
    "ConsensusGraph",
    "GraphStats",
    "Judge",
    "JudgeVerdict",
    "LexicalDag",
    "OfflineProvider",
    "Region",
    "RemoteProvider",
    "ResponseSet",
    "ScoringParams",
    "SynthesisResult",
    "VerdictCache",
    "align_pair",
    "align_to_graph",
    "build_consensus_graph",
    "build_lexical_dag",
    "consensus_decode",
    "detokenize",
    "extract_boxed",
    "extract_regions",
    "graph_stats",
    "guided_self_verify",
    "install_disagreement_nodes",
    "lexical_overlap_profile",
    "load_response_sets",
    "merge_consensus",
    "tokenize",
]

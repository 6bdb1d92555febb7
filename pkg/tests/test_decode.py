import pytest

from consgraph.corpus import ResponseSet
from consgraph.decode import consensus_decode, extract_boxed, guided_self_verify
from consgraph.judge import ABSTAIN, Judge, OfflineProvider
from consgraph.refine import DISAGREEMENT, build_consensus_graph

from conftest import check_graph_invariants


class ScriptedProvider(OfflineProvider):
    """Offline judge with a scripted verification rule."""

    def __init__(self, bad_marker="WRONGSTEP", answer="5"):
        super().__init__()
        self.bad_marker = bad_marker
        self.answer = answer
        self.verify_log = []

    def verify(self, problem, partial_a, partial_b):
        self.calls += 1
        scores = (
            0 if self.bad_marker in partial_a else 1,
            0 if self.bad_marker in partial_b else 1,
        )
        self.verify_log.append((partial_a, partial_b, scores))
        return scores

    def synthesize(self, problem, masked_candidates):
        self.calls += 1
        return f"The final answer is $\\boxed{{{self.answer}}}$."


COMMON1 = "first we simplify the expression carefully"
COMMON2 = "then we conclude the result holds"
R1 = {
    "good_a": "expanding every squared term",
    "bad": "using WRONGSTEP identity here",
    "good_b": "via substitution method instead",
}
R2 = {"p": "answer equals exactly five", "q": "answer might equal four"}


@pytest.fixture
def two_region_set() -> ResponseSet:
    responses = [
        f"{COMMON1} {R1['good_a']} {COMMON2} {R2['p']}",   # 0
        f"{COMMON1} {R1['good_a']} {COMMON2} {R2['p']}",   # 1
        f"{COMMON1} {R1['bad']} {COMMON2} {R2['p']}",      # 2
        f"{COMMON1} {R1['bad']} {COMMON2} {R2['q']}",      # 3
        f"{COMMON1} {R1['good_b']} {COMMON2} {R2['q']}",   # 4
    ]
    return ResponseSet("two-region", "prove it", responses)


def _graph(rs):
    return build_consensus_graph(rs, Judge(OfflineProvider()))


# -- consensus decoding ----------------------------------------------------


def test_consensus_decode_single_response_round_trips(offline_judge):
    rs = ResponseSet("one", "", ["The quick brown fox jumps over the lazy dog."])
    g = build_consensus_graph(rs, offline_judge)
    result = consensus_decode(g, 1.0, offline_judge)
    assert result.outcome == rs.responses[0]
    assert result.judge_calls == 1


def test_consensus_decode_threshold_selects_by_degree(two_region_set, offline_judge):
    g = _graph(two_region_set)
    degrees = {
        nid: g.weighted_degree(nid)
        for nid in g.nodes
        if g.nodes[nid].kind == DISAGREEMENT
    }
    # Region 1: branch supports 2/5, 2/5, 1/5; region 2: 3/5 and 2/5.
    assert sorted(degrees.values()) == [0.2, 0.4, 0.4, 0.4, 0.6]
    at_05 = consensus_decode(g, 0.5, offline_judge).trace["selected_nodes"]
    at_03 = consensus_decode(g, 0.3, offline_judge).trace["selected_nodes"]
    picked_05 = [n for n in at_05 if g.nodes[n].kind == DISAGREEMENT]
    picked_03 = [n for n in at_03 if g.nodes[n].kind == DISAGREEMENT]
    assert [g.weighted_degree(n) for n in picked_05] == [0.6]
    assert sorted(g.weighted_degree(n) for n in picked_03) == [0.4, 0.4, 0.4, 0.6]
    assert set(at_05) <= set(at_03)


def test_consensus_decode_high_tau_keeps_only_consensus(two_region_set, offline_judge):
    g = _graph(two_region_set)
    result = consensus_decode(g, 0.9, offline_judge)
    selected_kinds = {g.nodes[n].kind for n in result.trace["selected_nodes"]}
    assert selected_kinds == {"consensus"}
    assert COMMON1 in result.trace["draft"]


def test_consensus_decode_abstains_on_fragmented_draft(offline_judge):
    rs = ResponseSet("frag", "", ["aa bb", "cc dd", "ee ff"])
    g = build_consensus_graph(rs, offline_judge)
    result = consensus_decode(g, 1.0, offline_judge)
    assert result.outcome is ABSTAIN
    assert result.abstained


def test_consensus_decode_tau_validation(two_region_set, offline_judge):
    g = _graph(two_region_set)
    with pytest.raises(ValueError):
        consensus_decode(g, 1.5, offline_judge)


# -- guided self-verification ----------------------------------------------


def test_two_region_fixture_shape(two_region_set):
    g = _graph(two_region_set)
    check_graph_invariants(g)
    interior = g.interior_consensus_ids()
    assert len(interior) == 2
    branch_counts = sorted(len(g.disagreement_successors(u)) for u in interior)
    assert branch_counts == [2, 3]


def test_guided_prunes_scripted_bad_branch(two_region_set):
    g = _graph(two_region_set)
    provider = ScriptedProvider()
    judge = Judge(provider)
    result = guided_self_verify(g, two_region_set, 0.5, judge, "prove it")
    # Only the 3-branch node reaches kappa = 0.5 (3/5 >= 0.5 > 2/5); all three
    # branch pairs are compared, the WRONGSTEP branch carries responses 2 and 3.
    assert len(result.trace["marked_nodes"]) == 1
    assert len(result.trace["verify"]) == 3
    assert sorted(map(int, result.trace["pruned"])) == [2, 3]
    assert result.trace["survivors"] == [0, 1, 4]
    assert not result.trace["all_pruned"]
    assert result.outcome == "5"
    assert result.judge_calls == 4  # three verify calls plus one synthesis


def test_guided_no_pruning_keeps_everyone(two_region_set, offline_judge):
    g = _graph(two_region_set)
    result = guided_self_verify(g, two_region_set, 0.5, offline_judge, "prove it")
    assert result.trace["survivors"] == [0, 1, 2, 3, 4]
    assert result.trace["pruned"] == {}
    # Offline synthesis echoes the first candidate with markers stripped.
    assert "WRONGSTEP" in result.outcome or COMMON1 in result.outcome


def test_guided_kappa_one_with_few_branches_skips_verification(two_region_set):
    g = _graph(two_region_set)
    provider = ScriptedProvider()
    judge = Judge(provider)
    result = guided_self_verify(g, two_region_set, 1.0, judge, "prove it")
    assert result.trace["verify"] == []
    assert result.trace["survivors"] == [0, 1, 2, 3, 4]
    assert result.judge_calls == 1  # synthesis only


def test_guided_all_pruned_falls_back_to_all_candidates(two_region_set):
    class PruneEverything(ScriptedProvider):
        def verify(self, problem, partial_a, partial_b):
            self.calls += 1
            return (0, 0)

    g = _graph(two_region_set)
    result = guided_self_verify(g, two_region_set, 0.5, Judge(PruneEverything()), "p")
    assert result.trace["all_pruned"]
    assert result.trace["survivors"] == [0, 1, 2, 3, 4]
    assert result.outcome == "5"


def test_guided_masks_surviving_candidates(two_region_set):
    captured = {}

    class CapturingProvider(ScriptedProvider):
        def synthesize(self, problem, masked_candidates):
            captured["masked"] = masked_candidates
            return super().synthesize(problem, masked_candidates)

    g = _graph(two_region_set)
    guided_self_verify(g, two_region_set, 0.5, Judge(CapturingProvider()), "p")
    masked = captured["masked"]
    assert len(masked) == 3
    # Verified-region phrasings of survivors are wrapped as uncertain.
    assert f"*START_UNCERTAIN_REGION*{R1['good_a']}*END_UNCERTAIN_REGION*" in masked[0]


def test_guided_kappa_validation(two_region_set, offline_judge):
    g = _graph(two_region_set)
    with pytest.raises(ValueError):
        guided_self_verify(g, two_region_set, -0.1, offline_judge, "p")


def test_guided_threshold_uses_ratio_comparison(two_region_set):
    # kappa = 0.7 with m = 5: a node needs at least 4 distinct branches,
    # since 3/5 = 0.6 < 0.7 <= 4/5. The fixture's max is 3, so nothing triggers.
    g = _graph(two_region_set)
    provider = ScriptedProvider()
    result = guided_self_verify(g, two_region_set, 0.7, Judge(provider), "p")
    assert result.trace["marked_nodes"] == []
    assert result.trace["verify"] == []


# -- helpers ---------------------------------------------------------------


def test_extract_boxed():
    assert extract_boxed("text $\\boxed{42}$ more") == "42"
    assert extract_boxed("no box") is None
    assert extract_boxed("\\boxed{1} then \\boxed{2}") == "2"

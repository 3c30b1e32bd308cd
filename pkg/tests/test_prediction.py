from fractions import Fraction

import numpy as np
import pytest

from oracles import expected_route_probs
from pedems.errors import CyclicModel, EmptyHistory, NoMatchingRoute, UnknownState
from pedems.history import TripHistory, history_from_counts
from pedems.network import Route, Segment, build_network
from pedems.prediction import (
    Predictor,
    build_markov,
    markov_segment_probabilities,
    route_probabilities,
    segment_probabilities,
)
from trees import random_tree_history

ROUTES = {"R1": ("r1", "r2", "r3"), "R2": ("r1", "r2", "r4"), "R3": ("r1", "r5", "r4")}
COUNTS = {"R1": 100, "R2": 200, "R3": 400}


def test_route_probabilities_at_r1(three_net, three_hist):
    probs = route_probabilities(three_hist, three_net, "r1")
    assert probs == pytest.approx({"R1": 1 / 7, "R2": 2 / 7, "R3": 4 / 7}, abs=1e-12)


def test_route_probabilities_at_r2_match_fraction_oracle(three_net, three_hist):
    want = expected_route_probs(COUNTS, ROUTES, "r2")
    assert want == {"R1": Fraction(1, 3), "R2": Fraction(2, 3), "R3": 0}
    got = route_probabilities(three_hist, three_net, "r2")
    for r in want:
        assert got[r] == pytest.approx(float(want[r]), abs=1e-12)


def test_single_route_has_probability_one(three_net, three_hist):
    assert route_probabilities(three_hist, three_net, "r3")["R1"] == 1.0
    pred = segment_probabilities(three_hist, three_net, "r5")
    assert pred.segment_probs["r5"] == 1.0 and pred.segment_probs["r4"] == 1.0


def test_segment_probabilities_at_r1(three_net, three_hist):
    pred = segment_probabilities(three_hist, three_net, "r1")
    want = {"r1": 1, "r2": 3 / 7, "r3": 1 / 7, "r4": 6 / 7, "r5": 4 / 7}
    assert pred.segment_probs == pytest.approx(want, abs=1e-12)


def test_segment_probabilities_at_r2_ignore_the_past(three_net, three_hist):
    pred = segment_probabilities(three_hist, three_net, "r2")
    want = {"r1": 0, "r2": 1, "r3": 1 / 3, "r4": 2 / 3, "r5": 0}
    assert pred.segment_probs == pytest.approx(want, abs=1e-12)


def test_no_matching_route(three_net):
    h = history_from_counts({"R1": 3})
    with pytest.raises(NoMatchingRoute):
        route_probabilities(h, three_net, "r5")


def test_markov_transitions(three_net, three_hist):
    m = build_markov(three_hist, three_net)
    P = m.transition
    assert P["r1"]["r2"] == pytest.approx(3 / 7)
    assert P["r1"]["r5"] == pytest.approx(4 / 7)
    assert P["r2"]["r3"] == pytest.approx(1 / 3)
    assert P["r2"]["r4"] == pytest.approx(2 / 3)
    assert P["r5"]["r4"] == 1.0
    for s in m.states:
        assert sum(P[s].values()) + m.stop[s] == pytest.approx(1.0)
        if P[s] and m.stop[s] == 0:
            assert sum(P[s].values()) == pytest.approx(1.0)


def test_markov_single_hop():
    net = build_network([Segment("a", 1), Segment("b", 1)], [Route("R", ("a", "b"))])
    m = build_markov(history_from_counts({"R": 1}), net)
    assert m.transition["a"] == {"b": 1.0}


def test_markov_reach_matches_counts_on_example(three_net, three_hist):
    m = build_markov(three_hist, three_net)
    pred = markov_segment_probabilities(m, "r1")
    assert pred.segment_probs == pytest.approx(
        {"r1": 1, "r2": 3 / 7, "r3": 1 / 7, "r4": 6 / 7, "r5": 4 / 7}, abs=1e-12
    )
    at_r5 = markov_segment_probabilities(m, "r5").segment_probs
    assert at_r5["r4"] == 1.0
    assert at_r5["r2"] == 0.0


def test_markov_errors(three_net, three_hist):
    with pytest.raises(EmptyHistory):
        build_markov(TripHistory(), three_net)
    m = build_markov(three_hist, three_net)
    with pytest.raises(UnknownState):
        markov_segment_probabilities(m, "nope")


def test_markov_rejects_cycles():
    net = build_network(
        [Segment(s, 1) for s in "abc"],
        [Route("R1", ("a", "b", "c")), Route("R2", ("c", "b"))],
    )
    m = build_markov(history_from_counts({"R1": 1, "R2": 1}), net)
    with pytest.raises(CyclicModel):
        markov_segment_probabilities(m, "a")


def test_markov_counts_partial_trips():
    # a trip ending at b must lower the chance of reaching c
    net = build_network(
        [Segment(s, 1) for s in "abc"], [Route("short", ("a", "b")), Route("long", ("a", "b", "c"))]
    )
    h = history_from_counts({"short": 1, "long": 3})
    m = build_markov(h, net)
    assert markov_segment_probabilities(m, "a").segment_probs["c"] == pytest.approx(0.75)
    assert segment_probabilities(h, net, "a").segment_probs["c"] == pytest.approx(0.75)


@pytest.mark.parametrize("seed", range(40))
def test_markov_equals_counts_on_prefix_trees(seed):
    rng = np.random.default_rng(seed)
    net, hist = random_tree_history(rng)
    m = build_markov(hist, net)
    for cur in net.universe:
        a = segment_probabilities(hist, net, cur).segment_probs
        b = markov_segment_probabilities(m, cur).segment_probs
        for s in a:
            assert a[s] == pytest.approx(b[s], abs=1e-12), (cur, s)


@pytest.mark.parametrize("seed", range(40))
def test_route_invariants(seed):
    rng = np.random.default_rng(seed)
    net, hist = random_tree_history(rng)
    for cur in net.universe:
        rp = route_probabilities(hist, net, cur)
        assert sum(rp.values()) == pytest.approx(1.0, abs=1e-12)
        for rid, p in rp.items():
            assert (p > 0) == (cur in net.route(rid))
        sp = segment_probabilities(hist, net, cur).segment_probs
        assert sp[cur] == 1.0
        assert all(0.0 <= p <= 1.0 for p in sp.values())
        # a segment ending every matching suffix is certain
        ends = {net.route(r).segments[-1] for r, p in rp.items() if p > 0}
        if len(ends) == 1:
            assert sp[ends.pop()] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_conditioning_on_successor_is_bayes_update(seed):
    # tree histories without rejoin: every route through a child also runs through its parent
    rng = np.random.default_rng(seed)
    net, hist = random_tree_history(rng, terminal_rejoin=False)
    for rid in hist.route_counts:
        segs = net.route(rid).segments
        for a, b in zip(segs, segs[1:]):
            prev = route_probabilities(hist, net, a)
            keep = {r: p for r, p in prev.items() if b in net.route(r)}
            z = sum(keep.values())
            bayes = {r: keep.get(r, 0.0) / z for r in prev}
            assert route_probabilities(hist, net, b) == pytest.approx(bayes, abs=1e-12)


def test_predictor_backends_agree(three_net, three_hist):
    a = Predictor(three_hist, three_net, "counts")("r1")
    b = Predictor(three_hist, three_net, "markov")("r1")
    assert a.segment_probs == pytest.approx(b.segment_probs, abs=1e-12)
    assert b.route_probs == a.route_probs
    with pytest.raises(ValueError):
        Predictor(three_hist, three_net, "oracle")

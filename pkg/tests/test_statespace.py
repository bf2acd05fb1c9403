import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import full_index
from specmarkov.errors import DataError
from specmarkov.statespace import (SmartSpace, active_probability, build_full, build_simple,
                                   build_smart, code_pattern, encode, load_table, match_hamming,
                                   pattern_code, save_table, successors)
from specmarkov.traffic import SyntheticSpec, generate_synthetic, periodic_states


def table(*patterns):
    order = len(patterns[0])
    return SmartSpace(order, [pattern_code(p) for p in patterns])


@pytest.mark.parametrize("order, size", [(1, 2), (3, 8), (10, 1024)])
def test_full_sizes(order, size):
    space = build_full(order)
    assert space.size == size
    assert [space.pattern(i).tolist() for i in range(2)] == [[0] * order, [0] * (order - 1) + [1]]


@pytest.mark.parametrize("order", [0, 25, 30])
def test_full_guard_recommends_smart(order):
    with pytest.raises(DataError, match="smart"):
        build_full(order)


def test_full_index_matches_history_oracle():
    space = build_full(4)
    for hist in itertools.product((0, 1), repeat=4):
        idx = space.locate(np.array(hist))[0]
        assert idx == full_index(hist)
        assert space.pattern(idx).tolist() == list(reversed(hist))


def test_simple_sizes_and_run_state():
    assert build_simple(20).size == 40
    assert build_simple(1).size == 2
    space = build_simple(5)
    idx = space.locate(np.array([1, 1, 0, 0, 0]))[0]
    assert space.state(idx) == (0, 3)


@given(st.lists(st.integers(0, 1), min_size=6, max_size=60), st.integers(1, 6))
def test_simple_locate_agrees_with_code_lookup(bits, order):
    from specmarkov import kernels
    space = build_simple(order)
    states = np.array(bits, dtype=np.uint8)
    codes = kernels.window_codes(states, order)
    assert np.array_equal(space.locate(states), space.index_codes(codes))


def test_smart_table_periodic_and_constant():
    space = build_smart(periodic_states(3, 60), 3)
    assert space.size == 6
    assert build_smart(np.ones(40, dtype=np.uint8), 5).size == 1
    with pytest.raises(DataError):
        build_smart(np.ones(3, dtype=np.uint8), 5)


def test_smart_first_come_first_added_with_cap():
    trace = generate_synthetic(SyntheticSpec(4, 500, outlier_rate=0.1, rng_seed=2))
    full = build_smart(trace, 6)
    capped = build_smart(trace, 6, 10)
    assert capped.size == 10
    assert np.array_equal(capped.codes, full.codes[:10])
    # order of first appearance in the trace
    seen = []
    for t in range(5, len(trace)):
        code = pattern_code(trace.window(t, 6))
        if code not in seen:
            seen.append(code)
    assert seen == full.codes.tolist()


def test_encode_full_ambiguity_and_one_hot():
    space = build_full(3)
    belief = encode(space, [1, 1])
    support = {tuple(space.pattern(i)) for i in np.flatnonzero(belief)}
    assert support == {(1, 1, 0), (1, 1, 1)}
    assert np.allclose(belief[belief > 0], 0.5)
    one = encode(space, [1, 0, 1])
    assert one.sum() == 1.0 and np.count_nonzero(one) == 1
    with pytest.raises(DataError):
        encode(space, [1, 0, 1, 1])


def test_encode_smart_ambiguity():
    space = build_smart(periodic_states(3, 60), 3)
    belief = encode(space, [1, 1])
    assert {tuple(space.pattern(i)) for i in np.flatnonzero(belief)} == {(1, 1, 0), (1, 1, 1)}
    assert active_probability(space, belief) == 1.0


def test_encode_simple_saturated_window():
    space = build_simple(5)
    belief = encode(space, [0, 0])
    assert sorted(space.state(i) for i in np.flatnonzero(belief)) == [(0, 2), (0, 3), (0, 4), (0, 5)]
    assert np.flatnonzero(encode(space, [1, 0, 0])).tolist() == [space.index(1, 1)]


@pytest.mark.parametrize("patterns, query, expected", [
    ([[1, 1, 1], [0, 0, 0]], [1, 1, 0], [[1, 1, 1]]),
    ([[1, 0, 1], [0, 0, 1]], [1, 1, 1], [[1, 0, 1]]),
    ([[1, 0, 1], [0, 1, 1]], [1, 1, 1], [[1, 0, 1], [0, 1, 1]]),
    ([[1, 0, 1], [0, 0, 1]], [0, 0, 1], [[0, 0, 1]]),
])
def test_match_hamming_examples(patterns, query, expected):
    space = table(*patterns)
    got = sorted(space.pattern(i).tolist() for i in match_hamming(space, query))
    assert got == sorted(expected)


def test_unseen_pattern_falls_back_to_hamming():
    space = table([1, 0, 1], [0, 1, 1])
    belief = encode(space, [1, 1, 1])
    assert np.allclose(belief, [0.5, 0.5])


def test_match_hamming_short_pattern_uses_recent_bits():
    space = table([1, 1, 0, 0], [0, 1, 1, 1], [0, 0, 0, 0])
    # overlap with the two most recent bits only
    got = sorted(space.pattern(i).tolist() for i in match_hamming(space, [1, 0]))
    assert got == [[0, 0, 0, 0], [1, 1, 0, 0]]


@pytest.mark.parametrize("space, index, expected", [
    (build_full(2), 0b10, [(0, 0b01), (1, 0b11)]),
    (build_simple(3), 5, [(0, 0), (1, 5)]),
])
def test_successor_examples(space, index, expected):
    assert successors(space, index) == expected


def test_smart_successors_can_be_absent():
    space = build_smart(periodic_states(3, 60), 3)
    nxt = dict(successors(space, space.index_of([1, 1, 1])))
    assert space.pattern(nxt[0]).tolist() == [0, 1, 1]
    assert space.pattern(nxt[1]).tolist() == [1, 1, 1]
    # [0,1,0] never occurs in block-3 traffic
    nxt = dict(successors(space, space.index_of([1, 0, 0])))
    assert nxt[0] is None
    assert space.pattern(nxt[1]).tolist() == [1, 1, 0]
    with pytest.raises(IndexError):
        successors(space, space.size)


@pytest.mark.parametrize("order", range(1, 11))
def test_full_successors_form_de_bruijn_graph(order):
    space = build_full(order)
    edges = set()
    for i in range(space.size):
        succ = space.successors(i)
        assert len(succ) == 2
        for bit, j in succ:
            pi, pj = space.pattern(i), space.pattern(j)
            assert pj[0] == bit and np.array_equal(pj[1:], pi[:-1])
            edges.add((i, j))
    indeg = np.bincount([j for _, j in edges], minlength=space.size)
    # regular of degree 2 in both directions
    assert len(edges) == 2 * space.size and np.all(indeg == 2)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=8), st.integers(0, 4))
def test_encode_invariants_full(sensed, extra):
    space = build_full(len(sensed) + extra)
    belief = encode(space, sensed)
    assert belief.sum() == pytest.approx(1.0, abs=1e-12)
    for i in np.flatnonzero(belief):
        assert space.pattern(i)[:len(sensed)].tolist() == sensed
    assert active_probability(space, belief) == pytest.approx(sensed[0], abs=1e-12)


@given(st.integers(0, 2 ** 10 - 1))
def test_code_pattern_roundtrip(code):
    assert pattern_code(code_pattern(code, 10)) == code


def test_table_roundtrip(tmp_path):
    space = build_smart(generate_synthetic(SyntheticSpec(5, 400, outlier_rate=0.05)), 12, 30)
    path = save_table(space, tmp_path / "t.table")
    back = load_table(path, max_states=30)
    assert np.array_equal(back.codes, space.codes) and back.order == 12
    (tmp_path / "bad.table").write_text("0101\n012\n")
    with pytest.raises(DataError, match=":2"):
        load_table(tmp_path / "bad.table")


def test_smart_rejects_duplicates_and_empty():
    with pytest.raises(DataError):
        SmartSpace(3, [1, 1])
    with pytest.raises(DataError):
        SmartSpace(3, [])

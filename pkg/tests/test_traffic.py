import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specmarkov.errors import DataError, TraceFormatError
from specmarkov.traffic import (EnergyTrace, SyntheticSpec, Trace, generate_synthetic,
                                load_trace, periodic_states, save_trace, threshold_energy)


@pytest.mark.parametrize("spec, expected", [
    (SyntheticSpec(3, 12, start_state=1), [1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0]),
    (SyntheticSpec(1, 4, start_state=0), [0, 1, 0, 1]),
])
def test_periodic_examples(spec, expected):
    assert generate_synthetic(spec).states.tolist() == expected


def test_outlier_flips_within_three_sigma():
    noisy = generate_synthetic(SyntheticSpec(3, 1000, 1, outlier_rate=0.05, rng_seed=7))
    flips = int(np.sum(noisy.states != periodic_states(3, 1000, 1)))
    mean, sd = 1000 * 0.05, np.sqrt(1000 * 0.05 * 0.95)
    assert abs(flips - mean) <= 3 * sd


@pytest.mark.parametrize("bad", [SyntheticSpec(0, 10), SyntheticSpec(3, 0),
                                 SyntheticSpec(3, 10, start_state=2),
                                 SyntheticSpec(3, 10, outlier_rate=1.5)])
def test_synthetic_rejects_bad_specs(bad):
    with pytest.raises(DataError):
        generate_synthetic(bad)


@given(seed=st.integers(0, 2 ** 32 - 1), rate=st.floats(0, 1), block=st.integers(1, 20))
def test_same_seed_is_bit_identical(seed, rate, block):
    spec = SyntheticSpec(block, 300, outlier_rate=rate, rng_seed=seed)
    assert np.array_equal(generate_synthetic(spec).states, generate_synthetic(spec).states)


@given(block=st.integers(1, 25), start=st.sampled_from([0, 1]))
def test_period_is_two_blocks(block, start):
    states = generate_synthetic(SyntheticSpec(block, 8 * block, start)).states
    period = 2 * block
    for shift in range(1, period + 1):
        same = np.array_equal(states[shift:], states[:-shift])
        assert same == (shift == period)


def test_threshold_examples():
    assert threshold_energy(EnergyTrace(np.array([0.1, 5.0, 0.2]), 1.0)).states.tolist() == [0, 1, 0]
    assert threshold_energy(EnergyTrace(np.full(5, 0.3), 1.0)).states.sum() == 0
    # equality at the threshold is idle
    assert threshold_energy(EnergyTrace(np.zeros(4), 0.0)).states.sum() == 0


@pytest.mark.parametrize("levels", [np.array([]), np.array([1.0, np.nan]), np.array([np.inf])])
def test_threshold_rejects_bad_levels(levels):
    with pytest.raises(DataError):
        threshold_energy(EnergyTrace(levels, 0.5))


@given(levels=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50),
       threshold=st.floats(-1e3, 1e3), scale=st.floats(1e-3, 1e3))
def test_threshold_invariant_to_positive_rescaling(levels, threshold, scale):
    levels = np.array(levels)
    a = threshold_energy(EnergyTrace(levels, threshold)).states
    b = threshold_energy(EnergyTrace(levels * scale, threshold * scale)).states
    # rescaling may round a level across the threshold only when they are equal to within ulp
    close = np.isclose(levels, threshold, rtol=1e-12, atol=0)
    assert np.array_equal(a[~close], b[~close])


def test_trace_validation_and_window():
    t = Trace([0, 1, 1, 0, 1])
    assert t.window(3, 3).tolist() == [0, 1, 1]
    assert not t.states.flags.writeable
    assert t.activation_fraction == pytest.approx(0.6)
    with pytest.raises(IndexError):
        t.window(1, 3)
    for bad in ([], [0, 2], [0.5]):
        with pytest.raises(DataError):
            Trace(bad)


def test_load_binary_lines(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("0\n1\n1\n")
    assert load_trace(path).states.tolist() == [0, 1, 1]


def test_load_reports_line_and_token(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0\n1\n2\n1\n")
    with pytest.raises(TraceFormatError) as info:
        load_trace(path)
    assert info.value.line == 3 and info.value.token == "2"
    assert "bad.txt:3" in str(info.value)


def test_load_csv_energy(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("0.1\n5.0,0.2\n3.5\n")
    trace = load_trace(path, format="csv-energy", threshold=1.0)
    assert trace.states.tolist() == [0, 1, 0, 1]
    path.write_text("0.1\nabc\n")
    with pytest.raises(TraceFormatError) as info:
        load_trace(path, format="csv-energy", threshold=1.0)
    assert info.value.line == 2


def test_save_load_roundtrip(tmp_path):
    trace = generate_synthetic(SyntheticSpec(4, 200, outlier_rate=0.1, rng_seed=3))
    path = save_trace(trace, tmp_path / "x.txt")
    assert np.array_equal(load_trace(path).states, trace.states)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waldo.dtw import dtw_align, dtw_distance, path_cost, warp_to
from waldo.exceptions import DomainError
from waldo.oracle import check_dtw, dtw_brute_force

seqs = st.lists(st.floats(-10, 10), min_size=1, max_size=5)


def test_known_distances():
    assert dtw_distance([0, 0], [1]) == 2
    assert dtw_distance([1, 2, 3], [1, 2, 3]) == 0
    # the repeated 2 is absorbed by warping
    assert dtw_distance([1, 2, 2, 3], [1, 2, 3]) == 0


def test_identity_path_is_diagonal():
    a = np.linspace(0, 1, 6)
    assert dtw_align(a, a).tolist() == [[i, i] for i in range(6)]


@settings(max_examples=100, deadline=None)
@given(seqs, seqs)
def test_matches_enumeration_and_is_symmetric(a, b):
    d = dtw_distance(a, b)
    assert d == pytest.approx(dtw_brute_force(a, b), abs=1e-9)
    assert d == pytest.approx(dtw_distance(b, a), abs=1e-9)
    path = dtw_align(a, b)
    assert path[0].tolist() == [0, 0] and path[-1].tolist() == [len(a) - 1, len(b) - 1]
    assert np.all(np.diff(path, axis=0) >= 0)
    assert path_cost(a, b, path) == pytest.approx(d, abs=1e-9)


def test_warp_recovers_shifted_signature():
    u = np.linspace(0, 1, 60)
    golden = np.sin(3 * u)
    # same endpoints, resonance features arrive late
    shifted = np.sin(3 * u ** 1.4)
    warped = warp_to(shifted, golden)
    assert warped.shape == golden.shape
    assert np.abs(warped - golden).max() < np.abs(shifted - golden).max() / 2


def test_empty_rejected():
    with pytest.raises(DomainError):
        dtw_distance([], [1.0])


def test_battery_passes():
    assert check_dtw().passed

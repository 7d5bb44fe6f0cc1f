import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmavm.geometry import (ArrayLayout, LayoutError, MicKind, RingSpec, aliasing_cutoff, group_by_radius,
                            make_layout, mic_angles, pairwise_distances, positions)


def test_mic_angles_quarter_ring():
    assert np.allclose(mic_angles(RingSpec(0.12, 4)), [0, math.pi / 2, math.pi, 3 * math.pi / 2], atol=1e-15)


def test_mic_angles_single_mic():
    assert mic_angles(RingSpec(0.10, 1, 1.0)) == [1.0]


def test_mic_angles_thirty():
    assert mic_angles(RingSpec(0.12, 30))[7] == pytest.approx(1.466077, abs=1e-6)


def test_first_angle_is_normalised():
    assert RingSpec(0.1, 3, -math.pi / 2).first_angle == pytest.approx(3 * math.pi / 2)
    assert RingSpec(0.1, 3, 5 * math.pi).first_angle == pytest.approx(math.pi)


@pytest.mark.parametrize("kwargs, key", [
    (dict(radius=0.0, count=3), "radius"),
    (dict(radius=-0.1, count=3), "radius"),
    (dict(radius=0.1, count=0), "count"),
    (dict(radius=0.1, count=2.5), "count"),
])
def test_bad_ring(kwargs, key):
    with pytest.raises(LayoutError, match=key):
        RingSpec(**kwargs)


def test_positions_single_and_order():
    (p,) = positions(make_layout([RingSpec(0.12, 1)]))
    assert (p.x, p.y) == pytest.approx((0.12, 0.0))
    lay = make_layout([RingSpec(0.12, 2), RingSpec(0.10, 2)])
    assert [(q.ring_index, q.mic_index) for q in positions(lay)] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    p0 = positions(make_layout([RingSpec(0.10, 30)]))[0]
    assert (p0.x, p0.y) == pytest.approx((0.10, 0.0))


def test_duplicate_positions_rejected():
    with pytest.raises(LayoutError, match="duplicate"):
        make_layout([RingSpec(0.12, 4), RingSpec(0.12, 2)])
    with pytest.raises(LayoutError):
        ArrayLayout(())


def test_pairwise_distances_examples():
    d = pairwise_distances(make_layout([RingSpec(0.1, 2)]))
    assert d[0, 1] == pytest.approx(0.2)
    d = pairwise_distances(make_layout([RingSpec(0.12, 1), RingSpec(0.10, 1)]))
    assert d[0, 1] == pytest.approx(0.02)
    assert np.all(np.diag(d) == 0)


def test_aliasing_cutoff_values():
    assert aliasing_cutoff(RingSpec(0.12, 10), 340) == pytest.approx(2292, abs=1)
    assert aliasing_cutoff(RingSpec(0.12, 30), 340) == pytest.approx(340 / (0.48 * math.sin(math.pi / 30)), rel=1e-12)
    assert aliasing_cutoff(RingSpec(0.12, 30), 340) == pytest.approx(6776, abs=1)
    assert aliasing_cutoff(RingSpec(0.12, 2), 340) == pytest.approx(708.333, abs=1e-3)
    with pytest.raises(LayoutError):
        aliasing_cutoff(RingSpec(0.12, 1))


def test_aliasing_cutoff_monotone_in_count():
    cut = [aliasing_cutoff(RingSpec(0.12, m)) for m in range(2, 61)]
    assert all(b > a for a, b in zip(cut, cut[1:]))


def test_group_by_radius_merges_interleaved_rings():
    lay = make_layout([RingSpec(0.12, 10), RingSpec(0.12, 10, 2 * math.pi / 30, MicKind.VIRTUAL),
                       RingSpec(0.12, 10, 4 * math.pi / 30, MicKind.VIRTUAL), RingSpec(0.10, 30)])
    assert group_by_radius(lay) == [(0.12, 30), (0.10, 30)]


rings = st.builds(RingSpec, st.floats(0.01, 1.0), st.integers(1, 30), st.floats(-10, 10))


@settings(max_examples=60, deadline=None)
@given(rings)
def test_angle_spacing_and_roundtrip(ring):
    ang = np.array(mic_angles(ring))
    if ring.count > 1:
        diffs = np.mod(np.diff(ang), 2 * math.pi)
        assert np.allclose(diffs, 2 * math.pi / ring.count, atol=1e-12)
    for p in positions(make_layout([ring])):
        assert math.hypot(p.x, p.y) == pytest.approx(ring.radius, abs=1e-9)
        back = math.atan2(p.y, p.x) % (2 * math.pi)
        assert abs(np.angle(np.exp(1j * (back - p.angle)))) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.lists(st.tuples(st.floats(0.02, 0.2), st.integers(1, 20)), min_size=1, max_size=3, unique_by=lambda t: round(t[0], 3)))
def test_triangle_inequality(spec):
    lay = make_layout([RingSpec(r, m, 0.1 * i) for i, (r, m) in enumerate(spec)])
    d = pairwise_distances(lay)
    assert np.allclose(d, d.T)
    m = lay.size
    if m <= 60:
        for i, j in itertools.product(range(m), repeat=2):
            assert np.all(d[i, :] <= d[i, j] + d[j, :] + 1e-12)

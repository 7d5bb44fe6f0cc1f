import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmavm.acoustics import (AcousticsDomainError, PlaneWaveField, bessel_j, bessel_j_signed,
                             bessel_null_frequencies, harmonic_coefficient, jacobi_anger_sum,
                             plane_wave_at, plane_wave_pressure, synthesize_snapshot, wavenumber)
from cmavm.geometry import MicPosition, MicKind, RingSpec, make_layout, positions


def series_oracle(n, x, terms=80):
    """Plain power series in extended precision, independent of the implementation."""
    with mpmath.workdps(40):
        s = mpmath.mpf(0)
        for m in range(terms):
            s += (-1) ** m * (mpmath.mpf(x) / 2) ** (2 * m + n) / (mpmath.factorial(m) * mpmath.factorial(m + n))
        return float(s)


def test_wavenumber():
    assert wavenumber(340 / (2 * math.pi), 340) == pytest.approx(1.0)
    k = wavenumber(1084, 340)
    assert k == pytest.approx(20.0323, abs=1e-4)
    assert k * 0.12 == pytest.approx(2.4039, abs=1e-4)
    with pytest.raises(AcousticsDomainError):
        wavenumber(0, 340)
    with pytest.raises(AcousticsDomainError):
        wavenumber(100, -1)


def test_bessel_basics():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(3, 0.0) == 0.0
    assert abs(bessel_j(0, 2.404826)) < 1e-6
    assert abs(series_oracle(0, 2.404826)) < 1e-6


@pytest.mark.parametrize("n", [0, 1, 2, 5, 12, 30, 64])
@pytest.mark.parametrize("x", [0.01, 0.5, 2.4, 7.99, 8.01, 12.0, 25.0, 49.9])
def test_bessel_against_mpmath(n, x):
    assert bessel_j(n, x) == pytest.approx(float(mpmath.besselj(n, x)), abs=1e-12)


@pytest.mark.parametrize("n", [0, 1, 3, 7])
@pytest.mark.parametrize("x", [0.3, 3.0, 6.5])
def test_bessel_against_series_oracle(n, x):
    assert bessel_j(n, x) == pytest.approx(series_oracle(n, x), abs=1e-13)


@pytest.mark.parametrize("n, x", [(-1, 1.0), (65, 1.0), (0, -0.1), (0, 50.5)])
def test_bessel_domain(n, x):
    with pytest.raises(AcousticsDomainError):
        bessel_j(n, x)


def test_bessel_recurrence():
    for x in np.linspace(0.5, 10, 40):
        for n in range(1, 13):
            lhs = bessel_j(n - 1, x) + bessel_j(n + 1, x)
            rhs = 2 * n / x * bessel_j(n, x)
            assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1e-300) or abs(lhs - rhs) < 1e-15


def test_bessel_normalisation():
    for x in np.linspace(0, 10, 41):
        total = sum(bessel_j_signed(n, x) ** 2 for n in range(-40, 41))
        assert total == pytest.approx(1.0, abs=1e-10)


def test_harmonic_coefficient():
    assert harmonic_coefficient(0, 0.0, 0.12) == 1 + 0j
    x = 1e-4
    assert harmonic_coefficient(1, x, 1.0) == pytest.approx(1j * x / 2, rel=1e-8)
    assert harmonic_coefficient(-1, 1.0, 1.0) == pytest.approx(series_oracle(1, 1.0) * 1j, abs=1e-13)
    assert harmonic_coefficient(-1, 1.0, 1.0).imag == pytest.approx(0.440051, abs=1e-6)


def test_jacobi_anger_truncation():
    alpha = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    for kr in [0.1, 1.0, 2.4048, 5.0, 7.7, 10.0]:
        order = math.ceil(kr) + 18
        err = np.abs(np.exp(1j * kr * np.cos(alpha)) - jacobi_anger_sum(kr, alpha, order)).max()
        assert err < 1e-9


def test_plane_wave_pressure_examples():
    near = MicPosition(0, 0, 0.0, 1e-9, MicKind.PHYSICAL)
    assert plane_wave_pressure(PlaneWaveField(1.0), near) == pytest.approx(1.0)
    side = MicPosition(0, 0, math.pi / 2, 0.12, MicKind.PHYSICAL)
    assert plane_wave_pressure(PlaneWaveField(1000.0, 0.0), side) == pytest.approx(1.0)
    k = wavenumber(1000.0)
    pos = MicPosition(0, 0, 0.3, 2.4048 / k, MicKind.PHYSICAL)
    p = plane_wave_pressure(PlaneWaveField(1000.0, 0.3), pos)
    assert p == pytest.approx(complex(math.cos(2.4048), math.sin(2.4048)), abs=1e-12)
    assert p == pytest.approx(-0.7406 + 0.6719j, abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.floats(1, 4000), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.floats(1e-3, 0.5))
def test_plane_wave_unit_modulus(f, theta, phi, r):
    p = plane_wave_pressure(PlaneWaveField(f, theta), MicPosition(0, 0, phi, r, MicKind.PHYSICAL))
    assert abs(p) == pytest.approx(1.0, abs=1e-12)


def test_synthesize_snapshot():
    tiny = make_layout([RingSpec(1e-9, 1)])
    assert synthesize_snapshot(PlaneWaveField(500.0, 1.0), tiny).values[0] == pytest.approx(1.0)
    pair = make_layout([RingSpec(0.1, 2, 0.4 - 0.25)])  # mics at 0.15 and 0.15 + pi
    sym = make_layout([RingSpec(0.1, 1, 0.4 + 0.7), RingSpec(0.1, 1, 0.4 - 0.7)])
    v = synthesize_snapshot(PlaneWaveField(800.0, 0.4), sym).values
    assert v[0] == pytest.approx(v[1], abs=1e-12)
    # opposite microphones see cos(theta - phi) flip sign
    w = synthesize_snapshot(PlaneWaveField(800.0, 0.9), pair).values
    assert w[0] == pytest.approx(np.conj(w[1]), abs=1e-12)
    lay = make_layout([RingSpec(0.12, 30)])
    fld = PlaneWaveField(1000.0, 0.7, 0.5 - 0.2j)
    snap = synthesize_snapshot(fld, lay)
    per_mic = [plane_wave_pressure(fld, p) for p in positions(lay)]
    assert np.allclose(snap.values, per_mic, atol=1e-14)
    assert np.allclose(plane_wave_at(lay.xy(), fld.k, 0.7, fld.amplitude), per_mic, atol=1e-14)
    assert len(synthesize_snapshot(PlaneWaveField(100.0), pair)) == 2


def bisection_oracle(n, lo, hi):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if series_oracle(n, lo) * series_oracle(n, mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_null_frequencies_reported_values():
    nulls = bessel_null_frequencies(0.12, 340, 2600, 5)
    freqs = [f for _, f in nulls]
    assert [n for n, _ in nulls] == [0, 1, 2, 0]
    assert freqs == pytest.approx([1084, 1728, 2316, 2490], abs=1)
    z0 = bisection_oracle(0, 2.0, 3.0)
    assert z0 == pytest.approx(2.404826, abs=1e-6)
    assert freqs[0] == pytest.approx(z0 * 340 / (2 * math.pi * 0.12), abs=1e-6)
    assert bessel_null_frequencies(0.12, 340, 1000, 5) == []

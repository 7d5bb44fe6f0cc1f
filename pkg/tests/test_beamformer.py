import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmavm.acoustics import bessel_j, bessel_null_frequencies, wavenumber
from cmavm.beamformer import (AliasingConditionError, HarmonicSystem, OrderError, SingularSystemError,
                              build_system, design, solve_weights, truncation_order)
from cmavm.geometry import MicKind, RingSpec, make_layout

C = 340.0
CMA30 = make_layout([RingSpec(0.12, 30)])
CCMA30 = make_layout([RingSpec(0.12, 30), RingSpec(0.10, 30)])


def freq_for_kr(kr, r):
    return kr * C / (2 * math.pi * r)


def test_truncation_order_examples():
    assert truncation_order(CMA30, freq_for_kr(2.0, 0.12)).overall == 2
    assert truncation_order(make_layout([RingSpec(0.12, 10)]), 4000).overall == 4
    o = truncation_order(CCMA30, 1000)
    k = wavenumber(1000)
    assert o.per_ring == (math.ceil(k * 0.12), math.ceil(k * 0.10))
    assert o.overall == math.ceil(k * 0.12) == 3


def test_truncation_order_odd_count_floors():
    assert truncation_order(make_layout([RingSpec(0.12, 7)]), 4000).overall == 2


def test_truncation_order_needs_two_mics():
    assert truncation_order(make_layout([RingSpec(0.12, 2)]), 500).overall == 0
    with pytest.raises(OrderError):
        truncation_order(make_layout([RingSpec(0.12, 1)]), 500)


def test_interleaved_virtual_ring_raises_order():
    lay = make_layout([RingSpec(0.12, 10), RingSpec(0.12, 10, 2 * math.pi / 30, MicKind.VIRTUAL),
                       RingSpec(0.12, 10, 4 * math.pi / 30, MicKind.VIRTUAL)])
    assert truncation_order(lay, 3500).overall == math.ceil(wavenumber(3500) * 0.12) > 4


def test_build_system_order_zero_and_beta():
    sys0 = build_system(CCMA30, 700.0, 0.3, 0)
    k = wavenumber(700.0)
    assert sys0.psi.shape == (1, 60)
    assert np.allclose(sys0.psi[0, :30], bessel_j(0, k * 0.12))
    assert np.allclose(sys0.psi[0, 30:], bessel_j(0, k * 0.10))
    assert np.allclose(sys0.beta, [1])
    sys1 = build_system(CMA30, 700.0, 0.0, 1)
    assert np.allclose(sys1.beta, [-1j, 1, 1j])


def test_build_system_row_symmetry():
    sysn = build_system(CCMA30, 1500.0, 0.0, 4)
    N = 4
    for n in range(1, N + 1):
        # row(-n) = (-1)^n conj(row(n)) since J_{-n} = (-1)^n J_n and J_n is real
        assert np.allclose(sysn.psi[N - n], (-1) ** n * np.conj(sysn.psi[N + n]), atol=1e-14)


def test_build_system_against_elementwise_formula():
    lay = make_layout([RingSpec(0.12, 8, 0.2), RingSpec(0.07, 6, 1.0)])
    f, look = 1800.0, 0.9
    sysn = build_system(lay, f, look, 3)
    k = wavenumber(f)
    r, phi = lay.polar()
    for i, n in enumerate(range(-3, 4)):
        for m in range(lay.size):
            jn = bessel_j(abs(n), k * r[m]) * (-1) ** (n % 2 if n < 0 else 0)
            # conj of J_n e^{-jn phi} per the Hermitian stacking
            assert sysn.psi[i, m] == pytest.approx(np.conj(jn * np.exp(-1j * n * phi[m])), abs=1e-14)
        assert sysn.beta[i] == pytest.approx(1j ** n * np.exp(1j * n * look), abs=1e-14)


def test_order_zero_closed_form():
    lay = make_layout([RingSpec(0.12, 4)])
    f = 600.0
    w = solve_weights(build_system(lay, f, 0.0, 0), delta=0.0)
    j0 = bessel_j(0, wavenumber(f) * 0.12)
    assert np.allclose(w.h, 1 / (4 * j0))


@pytest.mark.parametrize("layout", [CMA30, CCMA30, make_layout([RingSpec(0.12, 10)])])
@pytest.mark.parametrize("f", [300.0, 1000.0, 2000.0, 3000.0])
def test_constraint_residual(layout, f):
    w = design(layout, f, 0.4, delta=0.0)
    sysn = build_system(layout, f, 0.4, truncation_order(layout, f))
    assert np.abs(sysn.psi @ w.h - sysn.beta).max() < 1e-9
    assert w.residual < 1e-10


def test_design_cma30_2000():
    w = design(CMA30, 2000.0, 0.0, delta=0.0)
    assert w.residual < 1e-10
    assert design(CMA30, 2000.0, 0.0).residual < 1e-6
    assert len(w) == 30


def test_singular_at_exact_zero():
    f0 = bessel_null_frequencies(0.12, C, 1200, 0)[0][1]
    with pytest.raises(SingularSystemError):
        design(CMA30, f0, 0.0, delta=0.0)
    w = design(CMA30, f0, 0.0, delta=1e-8)
    assert np.all(np.isfinite(w.h))


def test_regularised_norm_blows_up_near_zero():
    sysn = build_system(CMA30, 1084.0, 0.0, truncation_order(CMA30, 1084.0))
    # independent oracle: SVD condition number of the constraint matrix
    s = np.linalg.svd(sysn.psi, compute_uv=False)
    assert s[0] / s[-1] > 100
    near = np.linalg.norm(design(CMA30, 1084.0, 0.0, 1e-8).h)
    ref = np.linalg.norm(design(CMA30, 1000.0, 0.0, 1e-8).h)
    assert near > 30 * ref
    h_pinv = np.linalg.pinv(sysn.psi) @ sysn.beta
    assert np.linalg.norm(h_pinv) == pytest.approx(near, rel=1e-2)


def test_ccma_moderate_norm_at_null():
    cma = np.linalg.norm(design(CMA30, 1084.0).h)
    ccma = np.linalg.norm(design(CCMA30, 1084.0).h)
    assert ccma < cma / 10
    assert ccma < 5


def test_aliasing_condition():
    lay = make_layout([RingSpec(0.12, 6)])
    with pytest.raises(AliasingConditionError):
        solve_weights(build_system(lay, 1000.0, 0.0, 3))


def test_square_system_matches_min_norm_formula():
    lay = make_layout([RingSpec(0.12, 7, 0.1)])
    sysn = build_system(lay, 1500.0, 0.2, 3)
    assert sysn.psi.shape == (7, 7)
    w = solve_weights(sysn, delta=0.0)
    psi = sysn.psi
    h22 = psi.conj().T @ np.linalg.solve(psi @ psi.conj().T, sysn.beta)
    assert np.allclose(w.h, h22, atol=1e-9)


def test_min_norm_dominates_feasible_perturbations():
    rng = np.random.default_rng(7)
    for lay, f in [(CMA30, 1500.0), (CCMA30, 2400.0)]:
        sysn = build_system(lay, f, 0.0, truncation_order(lay, f))
        w = solve_weights(sysn, delta=0.0)
        psi = sysn.psi
        proj = np.eye(lay.size) - psi.conj().T @ np.linalg.solve(psi @ psi.conj().T, psi)
        base = np.linalg.norm(w.h)
        for _ in range(200):
            z = rng.normal(size=lay.size) + 1j * rng.normal(size=lay.size)
            h2 = w.h + proj @ z
            assert np.abs(psi @ h2 - sysn.beta).max() < 1e-8
            assert base <= np.linalg.norm(h2) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 40), st.floats(200, 3000), st.floats(0, 2 * math.pi))
def test_steering_rotation_permutes_weights(m, f, look):
    lay = make_layout([RingSpec(0.11, m)])
    a = design(lay, f, look, delta=1e-8)
    b = design(lay, f, look + 2 * math.pi / m, delta=1e-8)
    assert np.allclose(b.h, np.roll(a.h, 1), atol=1e-9 * max(1.0, np.abs(a.h).max()))


def test_look_back_rotates_by_half_ring():
    a = design(CMA30, 1500.0, 0.0)
    b = design(CMA30, 1500.0, math.pi)
    assert np.allclose(b.h, np.roll(a.h, 15), atol=1e-9)


def test_negative_delta_rejected():
    with pytest.raises(ValueError):
        solve_weights(build_system(CMA30, 500.0, 0.0, 1), -1.0)

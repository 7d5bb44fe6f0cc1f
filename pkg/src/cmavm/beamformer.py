"""Circular-harmonic beamformer design for CMA, CCMA and CMA-VM layouts.

The array response is matched to a truncated delta beampattern by equating
circular-harmonic coefficients n = -N..N, which gives the linear system
``psi @ h = beta``; the minimum-norm solution is used when it is
underdetermined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .acoustics import bessel_j_signed, wavenumber
from .geometry import ArrayLayout, group_by_radius

DEFAULT_DELTA = 1e-8
PIVOT_RTOL = 1e-13


class OrderError(ValueError):
    pass


class AliasingConditionError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class TruncationOrder:
    per_ring: tuple[int, ...]
    overall: int
    radii: tuple[float, ...] = ()


@dataclass(frozen=True)
class HarmonicSystem:
    psi: np.ndarray
    beta: np.ndarray
    order: int
    frequency: float
    look_direction: float = 0.0


@dataclass(frozen=True)
class BeamformerWeights:
    h: np.ndarray
    look_direction: float
    order: int
    frequency: float
    residual: float
    regularization: float

    def __len__(self):
        return self.h.size


def truncation_order(layout: ArrayLayout, f: float) -> TruncationOrder:
    """Per-radius order min(ceil(kr), floor(M/2) - 1) and their maximum.

    Microphones on the same radius are counted together, so interleaved
    physical and virtual microphones raise the order that circle supports.
    """
    k = wavenumber(f, layout.speed_of_sound)
    radii, orders = [], []
    for r, count in group_by_radius(layout):
        # tolerance keeps kr that is an integer up to round-off from bumping the order
        nq = min(math.ceil(k * r - 1e-9), count // 2 - 1)
        if nq < 0:
            raise OrderError(f"ring of radius {r} with {count} microphone(s) supports no harmonic order")
        radii.append(r)
        orders.append(nq)
    return TruncationOrder(tuple(orders), max(orders), tuple(radii))


def build_system(layout: ArrayLayout, f: float, look: float, order: TruncationOrder | int) -> HarmonicSystem:
    n_max = order.overall if isinstance(order, TruncationOrder) else int(order)
    k = wavenumber(f, layout.speed_of_sound)
    r, phi = layout.polar()
    ns = np.arange(-n_max, n_max + 1)
    # cache J_n(kr) per distinct radius
    bess = {}
    for rad in np.unique(r):
        bess[rad] = np.array([bessel_j_signed(int(n), k * rad) for n in ns])
    jn = np.stack([bess[rad] for rad in r], axis=1)  # (2N+1, M)
    psi = jn * np.exp(1j * np.outer(ns, phi))
    beta = (1j ** (ns % 4)) * np.exp(1j * ns * look)
    return HarmonicSystem(psi, beta, n_max, f, look)


def _lu_solve(a: np.ndarray, b: np.ndarray, strict: bool) -> np.ndarray:
    lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = np.abs(a).sum(axis=1).max()
    if strict and (scale == 0.0 or pivots.min() < PIVOT_RTOL * scale):
        raise SingularSystemError(
            f"numerically singular system: smallest pivot {pivots.min():.3e}, |A|_inf {scale:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), b)


def solve_weights(sys: HarmonicSystem, delta: float = DEFAULT_DELTA) -> BeamformerWeights:
    """Solve ``psi h = beta``.

    Uses ``h = psi^H (psi psi^H + delta I)^{-1} beta`` when there are more
    microphones than constraints and ``psi^{-1} beta`` when square. With
    ``delta == 0`` a numerically singular system raises.
    """
    if delta < 0 or not math.isfinite(delta):
        raise ValueError(f"delta must be a nonnegative finite number, got {delta!r}")
    psi, beta = sys.psi, sys.beta
    rows, m = psi.shape
    if m < rows:
        raise AliasingConditionError(f"{m} microphones cannot satisfy {rows} harmonic constraints")
    strict = delta == 0.0
    if m == rows:
        h = _lu_solve(psi, beta, strict)
        used = 0.0
    else:
        gram = psi @ psi.conj().T
        if delta:
            gram = gram + delta * np.eye(rows)
        h = psi.conj().T @ _lu_solve(gram, beta, strict)
        used = float(delta)
    if not np.all(np.isfinite(h)):
        raise SingularSystemError("weight solve produced non-finite values")
    residual = float(np.linalg.norm(psi @ h - beta))
    return BeamformerWeights(h, sys.look_direction, sys.order, sys.frequency, residual, used)


def design(layout: ArrayLayout, f: float, look: float = 0.0, delta: float = DEFAULT_DELTA) -> BeamformerWeights:
    order = truncation_order(layout, f)
    return solve_weights(build_system(layout, f, look, order), delta)

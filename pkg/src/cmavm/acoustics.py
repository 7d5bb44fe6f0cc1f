"""Bessel functions, plane-wave fields and null-frequency prediction."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import TWO_PI, ArrayLayout, MicPosition, SPEED_OF_SOUND, _wrap_angle, positions

MAX_ORDER = 64
MAX_ARG = 50.0
# below this the power series is used; its largest term stays < 1e3
SERIES_LIMIT = 8.0


class AcousticsDomainError(ValueError):
    """Argument outside the supported domain."""


@dataclass(frozen=True)
class PlaneWaveField:
    frequency: float
    incidence_angle: float = 0.0
    amplitude: complex = 1.0 + 0.0j
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if not (math.isfinite(self.frequency) and self.frequency > 0):
            raise AcousticsDomainError(f"frequency must be positive, got {self.frequency!r}")
        if not cmath.isfinite(complex(self.amplitude)):
            raise AcousticsDomainError("amplitude must be finite")
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "incidence_angle", _wrap_angle(float(self.incidence_angle)))

    @property
    def k(self) -> float:
        return wavenumber(self.frequency, self.speed_of_sound)


@dataclass(frozen=True)
class PressureSnapshot:
    frequency: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def wavenumber(f: float, c: float = SPEED_OF_SOUND) -> float:
    if not (f > 0 and c > 0):
        raise AcousticsDomainError(f"wavenumber needs f > 0 and c > 0, got f={f!r}, c={c!r}")
    return TWO_PI * f / c


def _series(n: int, x: float) -> float:
    h = 0.5 * x
    term = 1.0
    for i in range(1, n + 1):
        term *= h / i
    if term == 0.0:
        return 0.0
    total = term
    q = h * h
    m = 0
    while True:
        m += 1
        term *= -q / (m * (m + n))
        total += term
        # alternating and decreasing once m^2 exceeds (x/2)^2: tail < |term|
        if m * (m + n) > q and abs(term) < 1e-17 * max(1.0, abs(total)):
            return total


def _miller(n: int, x: float) -> float:
    top = max(n, int(x)) + 20 + int(math.sqrt(40.0 * max(n, x)))
    top += top % 2
    j_next, j_cur = 0.0, 1e-30
    norm = 0.0
    result = 0.0
    for order in range(top, 0, -1):
        j_prev = (2.0 * order / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        # j_cur now holds the unnormalised J_{order-1}
        if order - 1 == n:
            result = j_cur
        if (order - 1) % 2 == 0 and order - 1 > 0:
            norm += 2.0 * j_cur
        if abs(j_cur) > 1e250:
            j_cur *= 1e-250
            j_next *= 1e-250
            result *= 1e-250
            norm *= 1e-250
    norm += j_cur
    if n == 0:
        result = j_cur
    return result / norm


def bessel_j(n: int, x: float) -> float:
    """J_n(x) for integer 0 <= n <= 64 and 0 <= x <= 50."""
    if not (0 <= n <= MAX_ORDER) or int(n) != n:
        raise AcousticsDomainError(f"Bessel order must be an integer in [0, {MAX_ORDER}], got {n!r}")
    if not (0.0 <= x <= MAX_ARG):
        raise AcousticsDomainError(f"Bessel argument must lie in [0, {MAX_ARG}], got {x!r}")
    n = int(n)
    x = float(x)
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if x <= SERIES_LIMIT:
        return _series(n, x)
    return _miller(n, x)


def bessel_j_signed(n: int, x: float) -> float:
    """J_n(x) for negative orders too, via J_{-n} = (-1)^n J_n."""
    v = bessel_j(abs(n), x)
    return -v if (n < 0 and n % 2) else v


def harmonic_coefficient(n: int, k: float, r: float) -> complex:
    """Jacobi-Anger coefficient j^n J_n(kr)."""
    return (1j ** (n % 4)) * bessel_j_signed(n, k * r)


def plane_wave_pressure(fld: PlaneWaveField, pos: MicPosition) -> complex:
    return fld.amplitude * cmath.exp(1j * fld.k * pos.radius * math.cos(fld.incidence_angle - pos.angle))


def plane_wave_at(xy: np.ndarray, k: float, theta: float | np.ndarray, amplitude: complex = 1.0) -> np.ndarray:
    """Plane-wave pressures at Cartesian points.

    ``theta`` may be an array of incidence angles; the result then has shape
    ``(len(theta), len(xy))``.
    """
    xy = np.asarray(xy, dtype=float)
    th = np.asarray(theta, dtype=float)
    proj = np.multiply.outer(np.cos(th), xy[:, 0]) + np.multiply.outer(np.sin(th), xy[:, 1])
    return amplitude * np.exp(1j * k * proj)


def synthesize_snapshot(fld: PlaneWaveField, layout: ArrayLayout) -> PressureSnapshot:
    r, phi = layout.polar()
    values = fld.amplitude * np.exp(1j * fld.k * r * np.cos(fld.incidence_angle - phi))
    return PressureSnapshot(fld.frequency, values)


def bessel_zeros(n: int, x_max: float, tol: float = 1e-9) -> list[float]:
    """Positive zeros of J_n below ``x_max`` by sign-change bracketing and bisection."""
    step = 0.05
    zeros = []
    a = 1e-6 if n > 0 else 0.0
    fa = bessel_j(n, a)
    while a < x_max:
        b = min(a + step, x_max)
        fb = bessel_j(n, b)
        if fa == 0.0 and a > 0:
            zeros.append(a)
        elif fa * fb < 0:
            lo, hi, flo = a, b, fa
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                fm = bessel_j(n, mid)
                if fm == 0.0:
                    lo = hi = mid
                    break
                if flo * fm < 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            zeros.append(0.5 * (lo + hi))
        a, fa = b, fb
    return zeros


def bessel_null_frequencies(r: float, c: float = SPEED_OF_SOUND, f_max: float = 4000.0,
                            n_max: int = 10) -> list[tuple[int, float]]:
    """Frequencies where J_n(kr) = 0 for a ring of radius ``r``, ascending."""
    if r <= 0:
        raise AcousticsDomainError("radius must be positive")
    x_max = TWO_PI * f_max * r / c
    if x_max > MAX_ARG:
        raise AcousticsDomainError(f"f_max gives kr = {x_max:.3g} beyond the supported range")
    out = []
    for n in range(n_max + 1):
        for z in bessel_zeros(n, x_max):
            f = z * c / (TWO_PI * r)
            if f <= f_max:
                out.append((n, f))
    out.sort(key=lambda t: t[1])
    return out


def jacobi_anger_sum(kr: float, alpha: Sequence[float] | np.ndarray, order: int) -> np.ndarray:
    """Truncated circular-harmonic expansion of exp(j kr cos(alpha))."""
    alpha = np.asarray(alpha, dtype=float)
    total = np.zeros(alpha.shape, dtype=complex)
    for n in range(-order, order + 1):
        total += harmonic_coefficient(n, kr, 1.0) * np.exp(1j * n * alpha)
    return total

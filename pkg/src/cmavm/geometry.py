"""Microphone ring layouts.

Positions are planar, azimuth measured anti-clockwise from the positive x-axis.
Microphones are always ordered ring-major, then by index within the ring; the
weight vectors produced by :mod:`cmavm.beamformer` use the same order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
SPEED_OF_SOUND = 340.0
POSITION_TOL = 1e-9


class LayoutError(ValueError):
    """Invalid ring or layout definition."""


class MicKind(str, Enum):
    PHYSICAL = "physical"
    VIRTUAL = "virtual"


def _wrap_angle(angle: float) -> float:
    a = math.fmod(angle, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    # fmod can return exactly 2*pi after the correction for tiny negatives
    return 0.0 if a >= TWO_PI else a


@dataclass(frozen=True)
class RingSpec:
    radius: float
    count: int
    first_angle: float = 0.0
    kind: MicKind = MicKind.PHYSICAL

    def __post_init__(self):
        if not (isinstance(self.radius, (int, float)) and math.isfinite(self.radius) and self.radius > 0):
            raise LayoutError(f"radius must be a positive finite length, got {self.radius!r}")
        if isinstance(self.count, bool) or not isinstance(self.count, (int, np.integer)) or self.count < 1:
            raise LayoutError(f"count must be a positive integer, got {self.count!r}")
        if not math.isfinite(self.first_angle):
            raise LayoutError(f"first_angle must be finite, got {self.first_angle!r}")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "first_angle", _wrap_angle(float(self.first_angle)))
        object.__setattr__(self, "kind", MicKind(self.kind))


@dataclass(frozen=True)
class MicPosition:
    ring_index: int
    mic_index: int
    angle: float
    radius: float
    kind: MicKind

    @property
    def x(self) -> float:
        return self.radius * math.cos(self.angle)

    @property
    def y(self) -> float:
        return self.radius * math.sin(self.angle)


@dataclass(frozen=True)
class ArrayLayout:
    rings: tuple[RingSpec, ...]
    speed_of_sound: float = SPEED_OF_SOUND
    _positions: tuple[MicPosition, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rings = tuple(self.rings)
        if not rings:
            raise LayoutError("layout needs at least one ring")
        if not (math.isfinite(self.speed_of_sound) and self.speed_of_sound > 0):
            raise LayoutError(f"speed_of_sound must be positive, got {self.speed_of_sound!r}")
        object.__setattr__(self, "rings", rings)
        object.__setattr__(self, "speed_of_sound", float(self.speed_of_sound))
        pos = tuple(
            MicPosition(qi, mi, a, ring.radius, ring.kind)
            for qi, ring in enumerate(rings)
            for mi, a in enumerate(mic_angles(ring))
        )
        xy = np.array([(p.x, p.y) for p in pos])
        d = _distance_matrix(xy)
        np.fill_diagonal(d, np.inf)
        if d.min() < POSITION_TOL:
            i, j = np.unravel_index(np.argmin(d), d.shape)
            raise LayoutError(
                f"duplicate microphone position: ring {pos[i].ring_index} mic {pos[i].mic_index} "
                f"coincides with ring {pos[j].ring_index} mic {pos[j].mic_index}"
            )
        object.__setattr__(self, "_positions", pos)

    @property
    def size(self) -> int:
        return len(self._positions)

    def select(self, kind: MicKind) -> list[int]:
        """Flat indices of the microphones of one kind."""
        kind = MicKind(kind)
        return [i for i, p in enumerate(self._positions) if p.kind is kind]

    @property
    def has_virtual(self) -> bool:
        return any(r.kind is MicKind.VIRTUAL for r in self.rings)

    def subset(self, kind: MicKind) -> ArrayLayout:
        kind = MicKind(kind)
        rings = tuple(r for r in self.rings if r.kind is kind)
        return ArrayLayout(rings, self.speed_of_sound)

    def xy(self) -> np.ndarray:
        """Cartesian coordinates, shape (M, 2)."""
        return np.array([(p.x, p.y) for p in self._positions], dtype=float)

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-microphone (radius, angle) arrays."""
        return (
            np.array([p.radius for p in self._positions]),
            np.array([p.angle for p in self._positions]),
        )


def mic_angles(ring: RingSpec) -> list[float]:
    step = TWO_PI / ring.count
    return [_wrap_angle(ring.first_angle + m * step) for m in range(ring.count)]


def positions(layout: ArrayLayout) -> tuple[MicPosition, ...]:
    return layout._positions


def _distance_matrix(xy: np.ndarray) -> np.ndarray:
    diff = xy[:, None, :] - xy[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def pairwise_distances(layout: ArrayLayout) -> np.ndarray:
    d = _distance_matrix(layout.xy())
    np.fill_diagonal(d, 0.0)
    return d


def aliasing_cutoff(ring: RingSpec, c: float = SPEED_OF_SOUND) -> float:
    """Highest frequency with inter-microphone spacing below half a wavelength."""
    if ring.count < 2:
        raise LayoutError("aliasing cutoff is undefined for a ring with fewer than 2 microphones")
    return c / (4.0 * ring.radius * abs(math.sin(math.pi / ring.count)))


def group_by_radius(layout: ArrayLayout, tol: float = POSITION_TOL) -> list[tuple[float, int]]:
    """Distinct radii with the number of microphones on each, in first-seen order.

    Rings sharing a radius (e.g. physical and interleaved virtual microphones on
    the same circle) count as one ring for truncation purposes.
    """
    groups: list[list] = []
    for ring in layout.rings:
        for g in groups:
            if abs(g[0] - ring.radius) <= tol:
                g[1] += ring.count
                break
        else:
            groups.append([ring.radius, ring.count])
    return [(r, n) for r, n in groups]


def uniform_ring(radius: float, count: int, first_angle: float = 0.0,
                 kind: MicKind | str = MicKind.PHYSICAL) -> RingSpec:
    return RingSpec(radius, count, first_angle, MicKind(kind))


def make_layout(rings: Sequence[RingSpec], speed_of_sound: float = SPEED_OF_SOUND) -> ArrayLayout:
    return ArrayLayout(tuple(rings), speed_of_sound)

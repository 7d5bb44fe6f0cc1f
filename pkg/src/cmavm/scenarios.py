"""Named array configurations used in the experiments."""

from __future__ import annotations

import math

from .geometry import SPEED_OF_SOUND, ArrayLayout, MicKind, RingSpec

OUTER_RADIUS = 0.12
INNER_RADIUS = 0.10

P, V = MicKind.PHYSICAL, MicKind.VIRTUAL


def _interleaved_outer(physical: int = 10, total: int = 30) -> list[RingSpec]:
    """Physical mics on every third slot of a uniform 30-grid, virtual mics on the rest."""
    per = total // physical
    step = 2.0 * math.pi / total
    rings = [RingSpec(OUTER_RADIUS, physical, 0.0, P)]
    rings += [RingSpec(OUTER_RADIUS, physical, s * step, V) for s in range(1, per)]
    return rings


def scenario_rings(name: str) -> list[RingSpec]:
    if name in ("cma30", "cma10"):
        m = int(name[-2:])
        return [RingSpec(OUTER_RADIUS, m, 0.0, P)]
    if name in ("ccma30", "ccma10"):
        m = int(name[-2:])
        return [RingSpec(OUTER_RADIUS, m, 0.0, P), RingSpec(INNER_RADIUS, m, 0.0, P)]
    if name in ("cmavm30", "cmavm10"):
        m = int(name[-2:])
        return [RingSpec(OUTER_RADIUS, m, 0.0, P), RingSpec(INNER_RADIUS, m, 0.0, V)]
    if name == "cmavm-i":
        return [RingSpec(OUTER_RADIUS, 10, 0.0, P), RingSpec(INNER_RADIUS, 30, 0.0, V)]
    if name == "cmavm-ii":
        return _interleaved_outer() + [RingSpec(INNER_RADIUS, 10, 0.0, V)]
    if name == "cmavm-iii":
        return _interleaved_outer() + [RingSpec(INNER_RADIUS, 30, 0.0, V)]
    raise KeyError(f"unknown scenario {name!r}")


def scenario_layout(name: str, speed_of_sound: float = SPEED_OF_SOUND) -> ArrayLayout:
    return ArrayLayout(tuple(scenario_rings(name)), speed_of_sound)

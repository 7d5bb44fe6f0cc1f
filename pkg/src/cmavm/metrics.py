"""Beampattern, directivity index and white noise gain."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .acoustics import plane_wave_at, wavenumber
from .beamformer import BeamformerWeights
from .geometry import ArrayLayout, pairwise_distances

DB_FLOOR = -80.0


class DegenerateWeightsError(ValueError):
    pass


@dataclass(frozen=True)
class BeampatternGrid:
    frequencies: np.ndarray
    angles: np.ndarray
    values: np.ndarray  # (n_freq, n_angle)

    def __post_init__(self):
        if self.values.shape != (len(self.frequencies), len(self.angles)):
            raise ValueError("beampattern values must have shape (n_frequencies, n_angles)")


@dataclass(frozen=True)
class MetricCurve:
    frequencies: np.ndarray
    values: np.ndarray


class LobeRatio(NamedTuple):
    ratio_db: float
    degenerate: bool


def _weights(weights: BeamformerWeights | np.ndarray) -> np.ndarray:
    h = weights.h if isinstance(weights, BeamformerWeights) else weights
    return np.asarray(h, dtype=complex).reshape(-1)


def response(weights: BeamformerWeights | np.ndarray, pressures: np.ndarray) -> np.ndarray:
    """Array output sum_m conj(h_m) p_m; ``pressures`` is (..., M)."""
    h = _weights(weights)
    p = np.asarray(pressures, dtype=complex)
    if p.shape[-1] != h.size:
        raise ValueError(f"weights have length {h.size} but pressures have {p.shape[-1]} microphones")
    return p @ h.conj()


def beampattern(weights: BeamformerWeights | np.ndarray, layout: ArrayLayout, angles: Sequence[float],
                frequency: float | None = None, field_amplitude: complex = 1.0,
                pressures: np.ndarray | None = None) -> np.ndarray:
    """Complex response versus incidence angle.

    Synthetic plane-wave pressures are used unless ``pressures`` of shape
    (len(angles), M) are supplied, e.g. measured data mixed with virtual
    microphone predictions.
    """
    h = _weights(weights)
    if h.size != layout.size:
        raise ValueError(f"weights have length {h.size}, layout has {layout.size} microphones")
    if pressures is None:
        if frequency is None:
            if not isinstance(weights, BeamformerWeights):
                raise ValueError("frequency is required when weights carry no metadata")
            frequency = weights.frequency
        k = wavenumber(frequency, layout.speed_of_sound)
        pressures = plane_wave_at(layout.xy(), k, np.asarray(angles, dtype=float), field_amplitude)
    return response(h, pressures)


def diffuse_coherence_matrix(layout: ArrayLayout, f: float) -> np.ndarray:
    k = wavenumber(f, layout.speed_of_sound)
    # np.sinc is the normalised sinc: sinc(x/pi) = sin(x)/x
    return np.sinc(k * pairwise_distances(layout) / math.pi)


def _look_power(weights: BeamformerWeights, layout: ArrayLayout, look_response: complex | None,
                field_amplitude: complex) -> float:
    if look_response is None:
        look_response = beampattern(weights, layout, [weights.look_direction],
                                    field_amplitude=field_amplitude)[0]
    return abs(look_response) ** 2


def directivity_index(weights: BeamformerWeights, layout: ArrayLayout, f: float | None = None,
                      look_response: complex | None = None, field_amplitude: complex = 1.0) -> float:
    """DI in dB. ``look_response`` overrides the synthetic look-direction output."""
    f = weights.frequency if f is None else f
    h = _weights(weights)
    gamma = diffuse_coherence_matrix(layout, f)
    denom = float(np.real(h.conj() @ gamma @ h))
    if not denom > 0:
        raise DegenerateWeightsError(f"diffuse-noise output power is {denom!r}")
    return 10.0 * math.log10(_look_power(weights, layout, look_response, field_amplitude) / denom)


def white_noise_gain(weights: BeamformerWeights, layout: ArrayLayout, f: float | None = None,
                     look_response: complex | None = None, field_amplitude: complex = 1.0) -> float:
    h = _weights(weights)
    energy = float(np.real(np.vdot(h, h)))
    if energy == 0.0:
        raise DegenerateWeightsError("white noise gain of all-zero weights")
    return 10.0 * math.log10(_look_power(weights, layout, look_response, field_amplitude) / energy)


def magnitude_db(values: np.ndarray, floor: float = DB_FLOOR) -> np.ndarray:
    mag = np.abs(np.asarray(values))
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    return np.maximum(db, floor)


def main_to_side_lobe(pattern: Sequence[complex], angles: Sequence[float], look: float) -> LobeRatio:
    """Main-lobe peak over the largest side lobe, in dB.

    ``angles`` is treated as a circular grid. The main lobe spans from the grid
    point nearest ``look`` outwards to the first local minimum on each side.
    """
    mag = np.abs(np.asarray(pattern))
    ang = np.asarray(angles, dtype=float)
    n = mag.size
    if n < 3 or not np.any(mag > 0):
        return LobeRatio(0.0, True)
    dist = np.abs(np.angle(np.exp(1j * (ang - look))))
    c = int(np.argmin(dist))
    in_main = np.zeros(n, dtype=bool)
    in_main[c] = True
    for step in (1, -1):
        i = c
        for _ in range(n - 1):
            j = (i + step) % n
            if mag[j] > mag[i] or in_main[j]:
                break
            in_main[j] = True
            i = j
    side = mag[~in_main]
    if side.size == 0 or side.max() == 0.0:
        return LobeRatio(0.0, True)
    return LobeRatio(20.0 * math.log10(mag[c] / side.max()), False)

"""End-to-end scenario runs and run comparison."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, MutableMapping, Sequence

import numpy as np
from scipy.signal import find_peaks

from . import __version__
from .acoustics import bessel_null_frequencies, plane_wave_at, wavenumber
from .ainn import AinnPredictor, TrainingConfig, train
from .beamformer import design
from .geometry import ArrayLayout, MicKind
from .io import (ExperimentConfig, TransferFunctionTable, read_metrics, result_config, save_beampattern,
                 save_metrics, save_predictor, write_manifest)
from .metrics import BeampatternGrid, directivity_index, response, white_noise_gain
from .scenarios import scenario_layout

NULL_PROMINENCE_DB = 3.0


class RunError(RuntimeError):
    def __init__(self, frequency: float, cause: BaseException):
        super().__init__(f"{frequency:g} Hz: {type(cause).__name__}: {cause}")
        self.frequency = frequency
        self.cause = cause


class GridMismatchError(ValueError):
    pass


@dataclass
class BinResult:
    frequency: float
    di_db: float
    wng_db: float
    order: int
    weight_norm: float
    residual: float
    pattern: np.ndarray
    ainn: dict[str, Any] = field(default_factory=dict)
    predictors: list[AinnPredictor] = field(default_factory=list, repr=False)


@dataclass
class RunResult:
    config: ExperimentConfig
    layout: ArrayLayout
    bins: list[BinResult]
    angles: np.ndarray

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([b.frequency for b in self.bins])

    @property
    def di(self) -> np.ndarray:
        return np.array([b.di_db for b in self.bins])

    @property
    def wng(self) -> np.ndarray:
        return np.array([b.wng_db for b in self.bins])

    def pattern_grid(self) -> BeampatternGrid:
        return BeampatternGrid(self.frequencies, self.angles, np.array([b.pattern for b in self.bins]))


def resolve_layout(cfg: ExperimentConfig) -> ArrayLayout:
    if cfg.scenario == "custom":
        return cfg.layout
    return scenario_layout(cfg.scenario, cfg.speed_of_sound)


def bin_seed(base: int, frequency: float, angle_index: int = 0) -> int:
    """Training seed for one (frequency, source) work item; independent of run order."""
    ss = np.random.SeedSequence([int(base), int(round(frequency * 1000)), int(angle_index)])
    return int(ss.generate_state(1)[0])


def null_subset(layout: ArrayLayout, grid: np.ndarray) -> np.ndarray:
    """Grid points nearest to the Bessel-zero frequencies of the largest physical ring."""
    phys = [r for r in layout.rings if r.kind is MicKind.PHYSICAL] or list(layout.rings)
    radius = max(r.radius for r in phys)
    nulls = bessel_null_frequencies(radius, layout.speed_of_sound, float(grid.max()), n_max=64)
    picked = sorted({float(grid[np.argmin(np.abs(grid - f))]) for _, f in nulls if f >= grid.min()})
    return np.array(picked)


def _rotate(xy: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return xy @ np.array([[c, s], [-s, c]])


def _cache_key(xy: np.ndarray, values: np.ndarray, k: float, radius: float, cfg: TrainingConfig) -> str:
    h = hashlib.sha256()
    for a in (xy, values):
        h.update(np.ascontiguousarray(a).tobytes())
    h.update(repr((k, radius, dataclasses.astuple(cfg))).encode())
    return h.hexdigest()


def _train_cached(values: np.ndarray, xy: np.ndarray, k: float, radius: float, cfg: TrainingConfig,
                  cache: MutableMapping | None) -> AinnPredictor:
    if cache is None:
        return train(values, xy, k, radius, cfg)
    key = _cache_key(xy, values, k, radius, cfg)
    if key not in cache:
        cache[key] = train(values, xy, k, radius, cfg)
    return cache[key]


def _report(pred: AinnPredictor) -> dict[str, Any]:
    return {part: {"epochs": r.epochs, "data_loss": r.data_loss, "physics_loss": r.physics_loss,
                   "stopped_early": r.stopped_early, "attempts": r.attempts}
            for part, r in pred.report.items()}


def evaluate_bin(f: float, layout: ArrayLayout, cfg: ExperimentConfig, tf: TransferFunctionTable | None = None,
                 cache: MutableMapping | None = None) -> BinResult:
    """Design and evaluate the beamformer at one frequency.

    Physical pressures come from a synthetic plane wave or from ``tf``;
    virtual pressures from AINNs trained on the physical ones.
    """
    look = cfg.look_direction
    angles = cfg.angles() if tf is None else np.sort(tf.source_angles)
    w = design(layout, f, look, cfg.delta)
    k = wavenumber(f, layout.speed_of_sound)
    xy = layout.xy()
    phys = layout.select(MicKind.PHYSICAL)
    virt = layout.select(MicKind.VIRTUAL)
    if not phys:
        raise ValueError("layout has no physical microphones")
    radius = max(layout.polar()[0][phys])

    if tf is None:
        field_at = lambda th: plane_wave_at(xy, k, th, cfg.amplitude)
        p_look = field_at(look)
        p_grid = field_at(angles)
    else:
        look_idx = int(np.argmin(np.abs(np.angle(np.exp(1j * (angles - look))))))
        if abs(np.angle(np.exp(1j * (angles[look_idx] - look)))) > 1e-6:
            raise ValueError(f"look direction {look} rad is not among the table's source angles")
        mic_ids = list(range(len(phys)))
        p_grid = np.zeros((len(angles), layout.size), dtype=complex)
        for i, a in enumerate(angles):
            p_grid[i, phys] = tf.snapshot(f, a, mic_ids)
        p_look = p_grid[look_idx].copy()

    info: dict[str, Any] = {}
    preds: list[AinnPredictor] = []
    if virt:
        xy_p, xy_v = xy[phys], xy[virt]
        tcfg = dataclasses.replace(cfg.ainn, rng_seed=bin_seed(cfg.ainn.rng_seed, f))
        pred = _train_cached(p_look[phys], xy_p, k, radius, tcfg, cache)
        preds.append(pred)
        info = _report(pred)
        p_look = p_look.copy()
        p_look[virt] = pred(xy_v)
        if cfg.vm_pattern == "rotate":
            # a plane-wave field turns with its source, so the look-direction
            # estimate is re-used in a frame rotated by the source offset
            for i, a in enumerate(angles):
                p_grid[i, virt] = pred(_rotate(xy_v, look - a))
        else:
            for i, a in enumerate(angles):
                acfg = dataclasses.replace(cfg.ainn, rng_seed=bin_seed(cfg.ainn.rng_seed, f, i + 1))
                p_grid[i, virt] = _train_cached(p_grid[i, phys], xy_p, k, radius, acfg, cache)(xy_v)

    y_look = response(w, p_look)
    return BinResult(
        frequency=float(f),
        di_db=directivity_index(w, layout, f, look_response=y_look),
        wng_db=white_noise_gain(w, layout, f, look_response=y_look),
        order=w.order,
        weight_norm=float(np.linalg.norm(w.h)),
        residual=w.residual,
        pattern=response(w, p_grid),
        ainn=info,
        predictors=preds,
    )


def _work(args):
    f, layout, cfg, tf = args
    try:
        return evaluate_bin(f, layout, cfg, tf)
    except Exception as e:  # re-raised in the parent with the bin attached
        return RunError(f, e)


def run_experiment(cfg: ExperimentConfig, frequencies: Sequence[float] | None = None,
                   tf: TransferFunctionTable | None = None, cache: MutableMapping | None = None) -> RunResult:
    layout = resolve_layout(cfg)
    freqs = np.asarray(cfg.grid() if frequencies is None else frequencies, dtype=float)
    if tf is not None and frequencies is None:
        freqs = tf.frequencies
    freqs = np.unique(freqs)
    jobs = [(float(f), layout, cfg, tf) for f in freqs]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_work, jobs))
    else:
        results = []
        for f, *_ in jobs:
            try:
                results.append(evaluate_bin(f, layout, cfg, tf, cache))
            except Exception as e:
                results.append(RunError(f, e))
    for r in results:
        if isinstance(r, RunError):
            raise r
    results.sort(key=lambda b: b.frequency)
    angles = cfg.angles() if tf is None else np.sort(tf.source_angles)
    return RunResult(cfg, layout, results, angles)


def write_run(result: RunResult, out_dir: str | Path, save_models: bool = False) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_metrics(result.frequencies, result.di, result.wng, out / "metrics.csv")
    save_beampattern(result.pattern_grid(), out / "beampattern.csv")
    cfg = result.config
    manifest = {
        "scenario": cfg.scenario,
        "config": result_config(cfg),
        "config_digest": cfg.digest(),
        "delta": cfg.delta,
        "seed": cfg.ainn.rng_seed,
        "tool_version": __version__,
        "layout": [{"radius": r.radius, "count": r.count, "first_angle": r.first_angle, "kind": r.kind.value}
                   for r in result.layout.rings],
        "bins": [{"frequency_hz": b.frequency, "order": b.order, "weight_norm": b.weight_norm,
                  "residual": b.residual, "ainn": b.ainn} for b in result.bins],
    }
    write_manifest(manifest, out / "manifest.json")
    if save_models:
        for b in result.bins:
            for i, p in enumerate(b.predictors):
                save_predictor(p, out / "models" / f"ainn_{b.frequency:.3f}hz_{i}.json")
    return out


def find_nulls(freqs: np.ndarray, curve: np.ndarray, prominence: float = NULL_PROMINENCE_DB) -> np.ndarray:
    """Frequencies of local minima with at least ``prominence`` dB prominence."""
    idx, _ = find_peaks(-np.asarray(curve, dtype=float), prominence=prominence)
    return np.asarray(freqs)[idx]


@dataclass
class Comparison:
    frequencies: np.ndarray
    delta_di: np.ndarray
    delta_wng: np.ndarray
    nulls_a: np.ndarray
    nulls_b: np.ndarray

    def table(self) -> str:
        lines = ["frequency_hz  delta_di_db  delta_wng_db"]
        lines += [f"{f:12.3f}  {d:11.3f}  {w:12.3f}"
                  for f, d, w in zip(self.frequencies, self.delta_di, self.delta_wng)]
        lines.append("nulls A (Hz): " + (", ".join(f"{f:g}" for f in self.nulls_a) or "none"))
        lines.append("nulls B (Hz): " + (", ".join(f"{f:g}" for f in self.nulls_b) or "none"))
        return "\n".join(lines)


def compare(run_a: str | Path | dict, run_b: str | Path | dict) -> Comparison:
    """Per-frequency DI/WNG deltas (B - A) and WNG null detection for two runs."""
    def load(r):
        if isinstance(r, dict):
            return r
        p = Path(r)
        return read_metrics(p / "metrics.csv" if p.is_dir() else p)

    a, b = load(run_a), load(run_b)
    fa, fb = a["frequency_hz"], b["frequency_hz"]
    if fa.shape != fb.shape or not np.allclose(fa, fb, rtol=0, atol=1e-9):
        raise GridMismatchError("runs use different frequency grids")
    return Comparison(fa, b["di_db"] - a["di_db"], b["wng_db"] - a["wng_db"],
                      find_nulls(fa, a["wng_db"]), find_nulls(fb, b["wng_db"]))

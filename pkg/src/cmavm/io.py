"""Config files, transfer-function ingestion and result export.

File formats
------------
config (JSON)
    ``scenario`` is required; ``layout`` is required (and only allowed) for
    ``scenario: "custom"``. See :data:`CONFIG_KEYS` for the full key set.
transfer-function table (CSV)
    ``frequency_hz,mic_id,source_angle_rad,real,imag``
metrics (CSV)
    ``frequency_hz,di_db,wng_db``
beampattern (CSV)
    ``frequency_hz,angle_deg,magnitude_db,phase_rad``; magnitude clamped at -80 dB
AINN model (JSON)
    ``{"format": "cmavm-ainn", "version": 1, ...}``

Numbers are written with 9 significant digits and LF line endings so that
identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .ainn import AinnPredictor, MlpParams, NetReport, TrainingConfig
from .geometry import ArrayLayout, LayoutError, MicKind, RingSpec, SPEED_OF_SOUND
from .metrics import DB_FLOOR, BeampatternGrid, magnitude_db

MODEL_FORMAT = "cmavm-ainn"
MODEL_VERSION = 1
SCENARIOS = ("cma30", "ccma30", "cmavm30", "cma10", "ccma10", "cmavm10",
             "cmavm-i", "cmavm-ii", "cmavm-iii", "custom")
CONFIG_KEYS = ("scenario", "layout", "speed_of_sound", "look_direction", "frequency_grid", "frequencies",
               "angle_grid", "delta", "amplitude", "ainn", "vm_pattern", "workers", "output_dir")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def fmt(x: float) -> str:
    return format(float(x), ".9g")


@dataclass(frozen=True)
class FrequencyGrid:
    start: float = 100.0
    stop: float = 4000.0
    step: float = 4.0

    def values(self) -> np.ndarray:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(n)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    layout: ArrayLayout | None = None
    look_direction: float = 0.0
    frequency_grid: FrequencyGrid = FrequencyGrid()
    frequencies: tuple[float, ...] | None = None
    angle_step_deg: float = 1.0
    delta: float = 1e-8
    amplitude: complex = 1.0 + 0.0j
    ainn: TrainingConfig = TrainingConfig()
    vm_pattern: str = "rotate"
    workers: int = 1
    speed_of_sound: float = SPEED_OF_SOUND
    output_dir: str = "runs/out"

    def grid(self) -> np.ndarray:
        if self.frequencies is not None:
            return np.asarray(self.frequencies, dtype=float)
        return self.frequency_grid.values()

    def angles(self) -> np.ndarray:
        n = int(round(360.0 / self.angle_step_deg))
        return np.deg2rad(self.angle_step_deg * np.arange(n))

    def digest(self) -> str:
        """Hash of the settings that determine results (not where or how parallel they run)."""
        blob = json.dumps(result_config(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _num(d: Mapping, key: str, default: float, path: str, positive: bool = False,
         nonneg: bool = False) -> float:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path + key, f"expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(path + key, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(path + key, f"must be nonnegative, got {v!r}")
    return float(v)


def layout_from_dict(d: Mapping, speed_of_sound: float = SPEED_OF_SOUND) -> ArrayLayout:
    rings_raw = d.get("rings")
    if not isinstance(rings_raw, list) or not rings_raw:
        raise ConfigError("layout.rings", "expected a nonempty list of rings")
    rings = []
    for i, r in enumerate(rings_raw):
        p = f"layout.rings[{i}]."
        if not isinstance(r, Mapping):
            raise ConfigError(p[:-1], "expected an object")
        radius = _num(r, "radius", float("nan"), p, positive=True) if "radius" in r else None
        if radius is None:
            raise ConfigError(p + "radius", "missing")
        count = r.get("count")
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ConfigError(p + "count", f"expected a positive integer, got {count!r}")
        first = _num(r, "first_angle", 0.0, p)
        kind = r.get("kind", "physical")
        if kind not in ("physical", "virtual"):
            raise ConfigError(p + "kind", f"expected 'physical' or 'virtual', got {kind!r}")
        rings.append(RingSpec(radius, count, first, MicKind(kind)))
    c = _num(d, "speed_of_sound", speed_of_sound, "layout.", positive=True)
    try:
        return ArrayLayout(tuple(rings), c)
    except LayoutError as e:
        raise ConfigError("layout", str(e)) from None


def layout_to_dict(layout: ArrayLayout) -> dict:
    return {
        "rings": [{"radius": r.radius, "count": r.count, "first_angle": r.first_angle, "kind": r.kind.value}
                  for r in layout.rings],
        "speed_of_sound": layout.speed_of_sound,
    }


def config_from_dict(d: Mapping) -> ExperimentConfig:
    if not isinstance(d, Mapping):
        raise ConfigError("<root>", "expected a JSON object")
    unknown = sorted(set(d) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    scenario = d.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"expected one of {', '.join(SCENARIOS)}, got {scenario!r}")
    c = _num(d, "speed_of_sound", SPEED_OF_SOUND, "", positive=True)
    layout = None
    if "layout" in d:
        if scenario != "custom":
            raise ConfigError("layout", "only allowed with scenario 'custom'")
        if not isinstance(d["layout"], Mapping):
            raise ConfigError("layout", "expected an object")
        layout = layout_from_dict(d["layout"], c)
    elif scenario == "custom":
        raise ConfigError("layout", "required for scenario 'custom'")

    fg = d.get("frequency_grid", {})
    if not isinstance(fg, Mapping):
        raise ConfigError("frequency_grid", "expected an object")
    grid = FrequencyGrid(
        _num(fg, "start", 100.0, "frequency_grid.", positive=True),
        _num(fg, "stop", 4000.0, "frequency_grid.", positive=True),
        _num(fg, "step", 4.0, "frequency_grid.", positive=True),
    )
    if grid.stop < grid.start:
        raise ConfigError("frequency_grid.stop", "must not be below start")
    freqs = d.get("frequencies")
    if freqs is not None:
        if not isinstance(freqs, list) or not freqs or not all(
                isinstance(f, (int, float)) and not isinstance(f, bool) and f > 0 for f in freqs):
            raise ConfigError("frequencies", "expected a nonempty list of positive numbers")
        freqs = tuple(float(f) for f in freqs)

    ag = d.get("angle_grid", {})
    if not isinstance(ag, Mapping):
        raise ConfigError("angle_grid", "expected an object")
    step = _num(ag, "step_deg", 1.0, "angle_grid.", positive=True)
    if step > 360:
        raise ConfigError("angle_grid.step_deg", "must not exceed 360")

    amp = d.get("amplitude", 1.0)
    if isinstance(amp, list) and len(amp) == 2 and all(isinstance(a, (int, float)) for a in amp):
        amp = complex(amp[0], amp[1])
    elif isinstance(amp, (int, float)) and not isinstance(amp, bool):
        amp = complex(amp)
    else:
        raise ConfigError("amplitude", "expected a number or [real, imag]")

    ainn_raw = d.get("ainn", {})
    if not isinstance(ainn_raw, Mapping):
        raise ConfigError("ainn", "expected an object")
    names = {f.name for f in dataclasses.fields(TrainingConfig)}
    bad = sorted(set(ainn_raw) - names)
    if bad:
        raise ConfigError(f"ainn.{bad[0]}", "unknown key")
    try:
        ainn = TrainingConfig(**ainn_raw)
    except (TypeError, ValueError) as e:
        raise ConfigError("ainn", str(e)) from None

    vm_pattern = d.get("vm_pattern", "rotate")
    if vm_pattern not in ("rotate", "per_angle"):
        raise ConfigError("vm_pattern", "expected 'rotate' or 'per_angle'")
    workers = d.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "expected a positive integer")
    out = d.get("output_dir", "runs/out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir", "expected a path string")

    return ExperimentConfig(
        scenario=scenario,
        layout=layout,
        look_direction=_num(d, "look_direction", 0.0, ""),
        frequency_grid=grid,
        frequencies=freqs,
        angle_step_deg=step,
        delta=_num(d, "delta", 1e-8, "", nonneg=True),
        amplitude=amp,
        ainn=ainn,
        vm_pattern=vm_pattern,
        workers=workers,
        speed_of_sound=c,
        output_dir=out,
    )


def result_config(cfg: ExperimentConfig) -> dict:
    d = config_to_dict(cfg)
    for key in ("output_dir", "workers"):
        d.pop(key, None)
    return d


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d: dict[str, Any] = {"scenario": cfg.scenario}
    if cfg.layout is not None:
        d["layout"] = layout_to_dict(cfg.layout)
    d.update(
        speed_of_sound=cfg.speed_of_sound,
        look_direction=cfg.look_direction,
        frequency_grid=dataclasses.asdict(cfg.frequency_grid),
        angle_grid={"step_deg": cfg.angle_step_deg},
        delta=cfg.delta,
        amplitude=[cfg.amplitude.real, cfg.amplitude.imag],
        ainn=dataclasses.asdict(cfg.ainn),
        vm_pattern=cfg.vm_pattern,
        workers=cfg.workers,
        output_dir=cfg.output_dir,
    )
    if cfg.frequencies is not None:
        d["frequencies"] = list(cfg.frequencies)
    return d


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e}") from None
    return config_from_dict(raw)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


# -- transfer functions ----------------------------------------------------

TF_HEADER = ("frequency_hz", "mic_id", "source_angle_rad", "real", "imag")


@dataclass(frozen=True)
class TransferFunctionTable:
    frequency: np.ndarray
    mic_id: np.ndarray
    source_angle: np.ndarray
    value: np.ndarray  # complex

    def __post_init__(self):
        n = len(self.frequency)
        if not (len(self.mic_id) == len(self.source_angle) == len(self.value) == n):
            raise ValueError("transfer-function columns differ in length")
        if not np.all(np.isfinite(self.value)):
            raise ValueError("transfer-function values must be finite")
        keys = set(zip(self.frequency.tolist(), self.mic_id.tolist(), self.source_angle.tolist()))
        if len(keys) != n:
            raise ValueError("duplicate (frequency, mic_id, source_angle) rows")

    def __len__(self):
        return len(self.frequency)

    @property
    def frequencies(self) -> np.ndarray:
        return np.unique(self.frequency)

    @property
    def source_angles(self) -> np.ndarray:
        return np.unique(self.source_angle)

    def snapshot(self, frequency: float, source_angle: float, mic_ids: Sequence[int]) -> np.ndarray:
        """Pressures for the given microphones, in the given order."""
        sel = np.isclose(self.frequency, frequency, rtol=0, atol=1e-9) & np.isclose(
            self.source_angle, source_angle, rtol=0, atol=1e-9)
        lookup = dict(zip(self.mic_id[sel].tolist(), self.value[sel]))
        missing = [m for m in mic_ids if m not in lookup]
        if missing:
            raise KeyError(f"no transfer function for mic(s) {missing} at {frequency} Hz, "
                           f"source {source_angle} rad")
        return np.array([lookup[m] for m in mic_ids])


def read_tf_table(path: str | Path) -> TransferFunctionTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != TF_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TF_HEADER)}")
        rows = [r for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    return TransferFunctionTable(arr[:, 0], arr[:, 1].astype(int), arr[:, 2], arr[:, 3] + 1j * arr[:, 4])


def write_tf_table(table: TransferFunctionTable, path: str | Path) -> None:
    lines = [",".join(TF_HEADER)]
    for f, m, a, v in zip(table.frequency, table.mic_id, table.source_angle, table.value):
        lines.append(f"{fmt(f)},{int(m)},{fmt(a)},{fmt(v.real)},{fmt(v.imag)}")
    _write_lines(path, lines)


@dataclass
class ImpulseResponseSet:
    sample_rate: float
    responses: dict[tuple[int, float], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        lengths = {len(v) for v in self.responses.values()}
        if len(lengths) > 1:
            raise ValueError("impulse responses differ in length")


def load_impulse_responses(path: str | Path) -> ImpulseResponseSet:
    """Read an ``.npz`` with ``sample_rate``, ``mic_ids`` (M,), ``source_angles`` (S,)
    and ``samples`` (M, S, L)."""
    with np.load(path) as z:
        fs = float(z["sample_rate"])
        mics = z["mic_ids"].astype(int)
        angles = z["source_angles"].astype(float)
        samples = z["samples"].astype(float)
    if samples.shape[:2] != (len(mics), len(angles)):
        raise ValueError("samples must have shape (n_mics, n_sources, n_samples)")
    return ImpulseResponseSet(fs, {(int(m), float(a)): samples[i, j]
                                   for i, m in enumerate(mics) for j, a in enumerate(angles)})


def single_bin_dft(samples: np.ndarray, frequency: float, sample_rate: float) -> complex:
    """sum_t s[t] exp(-j 2 pi f t / fs) at an arbitrary (not grid-aligned) frequency."""
    n = np.arange(len(samples))
    return complex(np.exp(-2j * np.pi * frequency * n / sample_rate) @ np.asarray(samples, dtype=float))


def ir_to_transfer_function(irs: ImpulseResponseSet, frequencies: Iterable[float]) -> TransferFunctionTable:
    freqs = [float(f) for f in frequencies]
    for f in freqs:
        if not 0 <= f < irs.sample_rate / 2:
            raise ValueError(f"frequency {f} Hz is not below Nyquist ({irs.sample_rate / 2} Hz)")
    rows_f, rows_m, rows_a, vals = [], [], [], []
    for f in freqs:
        for (mic, ang), s in sorted(irs.responses.items()):
            rows_f.append(f)
            rows_m.append(mic)
            rows_a.append(ang)
            vals.append(single_bin_dft(s, f, irs.sample_rate))
    return TransferFunctionTable(np.array(rows_f, dtype=float), np.array(rows_m, dtype=int),
                                 np.array(rows_a, dtype=float), np.array(vals, dtype=complex))


# -- results ---------------------------------------------------------------

METRIC_HEADER = "frequency_hz,di_db,wng_db"
PATTERN_HEADER = "frequency_hz,angle_deg,magnitude_db,phase_rad"


def _write_lines(path: str | Path, lines: list[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def save_metrics(frequencies: Sequence[float], di: Sequence[float], wng: Sequence[float],
                 path: str | Path) -> None:
    if not (len(frequencies) == len(di) == len(wng)):
        raise ValueError("metric columns differ in length")
    lines = [METRIC_HEADER]
    lines += [f"{fmt(f)},{fmt(d)},{fmt(w)}" for f, d, w in zip(frequencies, di, wng)]
    _write_lines(path, lines)


def read_metrics(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = ",".join(next(reader, []))
        if header != METRIC_HEADER:
            raise ValueError(f"{path}: expected header {METRIC_HEADER}")
        rows = np.array([r for r in reader if r], dtype=float).reshape(-1, 3)
    return {"frequency_hz": rows[:, 0], "di_db": rows[:, 1], "wng_db": rows[:, 2]}


def save_beampattern(grid: BeampatternGrid, path: str | Path) -> None:
    lines = [PATTERN_HEADER]
    deg = np.rad2deg(grid.angles)
    for i, f in enumerate(grid.frequencies):
        row = grid.values[i]
        mags = magnitude_db(row, DB_FLOOR)
        phases = np.angle(row)
        lines += [f"{fmt(f)},{fmt(a)},{fmt(m)},{fmt(p)}" for a, m, p in zip(deg, mags, phases)]
    _write_lines(path, lines)


def read_beampattern(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = ",".join(next(reader, []))
        if header != PATTERN_HEADER:
            raise ValueError(f"{path}: expected header {PATTERN_HEADER}")
        rows = np.array([r for r in reader if r], dtype=float).reshape(-1, 4)
    return {"frequency_hz": rows[:, 0], "angle_deg": rows[:, 1], "magnitude_db": rows[:, 2],
            "phase_rad": rows[:, 3]}


def write_manifest(meta: Mapping[str, Any], path: str | Path) -> None:
    body = dict(meta)
    body.setdefault("tool_version", __version__)
    _write_lines(path, [json.dumps(body, indent=2, sort_keys=True)])


# -- AINN models -----------------------------------------------------------

def predictor_to_dict(pred: AinnPredictor) -> dict:
    nets = {}
    for part, net in (("real", pred.real_net), ("imag", pred.imag_net)):
        nets[part] = {
            "layer_sizes": net.layer_sizes,
            "input_scale": net.input_scale,
            "params": net.flat().tolist(),
            "report": dataclasses.asdict(pred.report[part]) if part in pred.report else None,
        }
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "k": pred.k,
        "radius": pred.radius,
        "seed": pred.config.rng_seed,
        "config_digest": pred.config.digest(),
        "config": dataclasses.asdict(pred.config),
        "networks": nets,
    }


def predictor_from_dict(d: Mapping) -> AinnPredictor:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    cfg = TrainingConfig(**d["config"])
    if cfg.digest() != d.get("config_digest"):
        raise ValueError("model config digest mismatch")
    nets, report = {}, {}
    for part in ("real", "imag"):
        n = d["networks"][part]
        nets[part] = MlpParams.from_flat(int(n["layer_sizes"][1]), np.array(n["params"], dtype=float),
                                         float(n["input_scale"]))
        if n.get("report"):
            report[part] = NetReport(**n["report"])
    return AinnPredictor(nets["real"], nets["imag"], float(d["k"]), float(d["radius"]), cfg, report)


def save_predictor(pred: AinnPredictor, path: str | Path) -> None:
    _write_lines(path, [json.dumps(predictor_to_dict(pred), sort_keys=True)])


def load_predictor(path: str | Path) -> AinnPredictor:
    return predictor_from_dict(json.loads(Path(path).read_text()))

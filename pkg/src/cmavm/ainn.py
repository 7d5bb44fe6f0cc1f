"""Acoustics-informed neural network for virtual microphone pressures.

Two small real-valued MLPs (real and imaginary part) map planar coordinates to
pressure. Training minimises the data MSE at the physical microphones plus the
mean squared Helmholtz residual ``lap(p)/k^2 + p`` at collocation points
inside the physical ring. All derivatives, including the parameter gradients
of the Laplacian, are computed in closed form.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .acoustics import PressureSnapshot

PARAM_NAMES = ("W1", "b1", "W2", "b2", "w3", "b3")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, part: str = ""):
        super().__init__(f"training diverged at epoch {epoch}" + (f" ({part} network)" if part else ""))
        self.epoch = epoch


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    stop_window: int = 5000
    stop_rel_tol: float = 1e-6
    max_epochs: int = 200_000
    collocation_count: int = 256
    # collocation disk radius as a fraction of the physical ring radius
    collocation_radius: float = 1.0
    input_scale: str = "meters"
    physics_weight: float = 1.0
    # extra fresh-seed attempts when eps_D / mean(target^2) stays above restart_tol
    restarts: int = 3
    restart_tol: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.stop_window < 1:
            raise ValueError("stop_window must be >= 1")
        if self.collocation_count < 1:
            raise ValueError("collocation_count must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if not self.restart_tol >= 0:
            raise ValueError("restart_tol must be >= 0")
        if self.input_scale not in ("meters", "wavenumber"):
            raise ValueError("input_scale must be 'meters' or 'wavenumber'")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MlpParams:
    """Weights of a 2-H-H-1 tanh network.

    ``input_scale`` multiplies the (x, y) coordinates before the first layer;
    it is fixed, not trained.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    input_scale: float = 1.0

    @property
    def width(self) -> int:
        return self.b1.size

    @property
    def layer_sizes(self) -> list[int]:
        return [2, self.width, self.width, 1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def copy(self) -> MlpParams:
        return MlpParams(*(getattr(self, n).copy() for n in PARAM_NAMES), input_scale=self.input_scale)

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_NAMES])

    @classmethod
    def from_flat(cls, width: int, flat: np.ndarray, input_scale: float = 1.0) -> MlpParams:
        shapes = _shapes(width)
        out, i = {}, 0
        for n in PARAM_NAMES:
            size = int(np.prod(shapes[n]))
            out[n] = np.array(flat[i:i + size], dtype=float).reshape(shapes[n])
            i += size
        if i != len(flat):
            raise ValueError(f"expected {i} parameters for width {width}, got {len(flat)}")
        return cls(**out, input_scale=input_scale)


def _shapes(width: int) -> dict[str, tuple[int, ...]]:
    return {"W1": (width, 2), "b1": (width,), "W2": (width, width), "b2": (width,), "w3": (width,), "b3": ()}


def network_width(k: float, r: float) -> int:
    if not k * r > 0:
        raise ValueError(f"network sizing needs kr > 0, got {k * r!r}")
    return max(1, math.ceil(k * r))


def init_network(k: float, r: float, seed: int | np.random.Generator = 0, input_scale: float = 1.0) -> MlpParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, width ceil(kr)."""
    width = network_width(k, r)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    b_in, b_hid = 1.0 / math.sqrt(2.0), 1.0 / math.sqrt(width)
    return MlpParams(
        W1=rng.uniform(-b_in, b_in, (width, 2)),
        b1=np.zeros(width),
        W2=rng.uniform(-b_hid, b_hid, (width, width)),
        b2=np.zeros(width),
        w3=rng.uniform(-b_hid, b_hid, width),
        b3=np.zeros(()),
        input_scale=float(input_scale),
    )


def _as_points(x, y=None) -> np.ndarray:
    if y is None:
        pts = np.asarray(x, dtype=float)
        return pts.reshape(-1, 2)
    return np.column_stack([np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float))])


def forward(net: MlpParams, x, y=None) -> np.ndarray | float:
    """Network output at points; scalar in, scalar out."""
    scalar = y is not None and np.ndim(x) == 0 and np.ndim(y) == 0
    u = _as_points(x, y) * net.input_scale
    a1 = np.tanh(u @ net.W1.T + net.b1)
    a2 = np.tanh(a1 @ net.W2.T + net.b2)
    out = a2 @ net.w3 + net.b3
    return float(out[0]) if scalar else out


def _pass(net: MlpParams, pts: np.ndarray, need_lap: bool):
    s = net.input_scale
    W1 = net.W1 * s  # effective first-layer weights w.r.t. meters
    a1 = np.tanh(pts @ W1.T + net.b1)
    z2 = a1 @ net.W2.T + net.b2
    a2 = np.tanh(z2)
    out = a2 @ net.w3 + net.b3
    cache = {"pts": pts, "a1": a1, "a2": a2, "W1": W1}
    if not need_lap:
        return out, None, cache
    g1 = 1.0 - a1 * a1
    h1 = -2.0 * a1 * g1
    g2 = 1.0 - a2 * a2
    h2 = -2.0 * a2 * g2
    u0 = g1 * W1[:, 0]
    u1 = g1 * W1[:, 1]
    s0 = u0 @ net.W2.T
    s1 = u1 @ net.W2.T
    q = W1[:, 0] ** 2 + W1[:, 1] ** 2
    hq = h1 * q
    t = hq @ net.W2.T
    S = s0 * s0 + s1 * s1
    L2 = h2 * S + g2 * t
    lap = L2 @ net.w3
    cache.update(g1=g1, h1=h1, g2=g2, h2=h2, u0=u0, u1=u1, s0=s0, s1=s1, q=q, hq=hq, t=t, S=S, L2=L2)
    return out, lap, cache


def laplacian(net: MlpParams, x, y=None) -> np.ndarray | float:
    """Analytic d2/dx2 + d2/dy2 of the network output (coordinates in meters)."""
    scalar = y is not None and np.ndim(x) == 0 and np.ndim(y) == 0
    _, lap, _ = _pass(net, _as_points(x, y), True)
    return float(lap[0]) if scalar else lap


def _backward(net: MlpParams, cache: dict, g_out: np.ndarray, g_lap: np.ndarray | None) -> dict[str, np.ndarray]:
    """Parameter gradients given upstream gradients on output and Laplacian."""
    W2, w3 = net.W2, net.w3
    pts, a1, a2 = cache["pts"], cache["a1"], cache["a2"]
    g2 = cache["g2"] if "g2" in cache else 1.0 - a2 * a2
    g1 = cache["g1"] if "g1" in cache else 1.0 - a1 * a1

    grads = {"w3": a2.T @ g_out, "b3": np.asarray(g_out.sum())}
    da2 = np.outer(g_out, w3)
    dW2 = np.zeros_like(W2)
    dW1 = np.zeros_like(net.W1)
    da1 = np.zeros_like(a1)
    if g_lap is not None:
        grads["w3"] = grads["w3"] + cache["L2"].T @ g_lap
        dL2 = np.outer(g_lap, w3)
        dS = dL2 * cache["h2"]
        dt = dL2 * g2
        # h2 and g2 are functions of a2
        da2 += dL2 * (cache["S"] * (6.0 * a2 * a2 - 2.0) - 2.0 * a2 * cache["t"])
        ds0 = 2.0 * dS * cache["s0"]
        ds1 = 2.0 * dS * cache["s1"]
        dW2 += ds0.T @ cache["u0"] + ds1.T @ cache["u1"] + dt.T @ cache["hq"]
        du0 = ds0 @ W2
        du1 = ds1 @ W2
        dhq = dt @ W2
        W1 = cache["W1"]
        dg1 = du0 * W1[:, 0] + du1 * W1[:, 1]
        dh1 = dhq * cache["q"]
        dq = (dhq * cache["h1"]).sum(axis=0)
        dW1[:, 0] += (du0 * g1).sum(axis=0) + 2.0 * dq * W1[:, 0]
        dW1[:, 1] += (du1 * g1).sum(axis=0) + 2.0 * dq * W1[:, 1]
        da1 += dg1 * (-2.0 * a1) + dh1 * (6.0 * a1 * a1 - 2.0)
    dz2 = da2 * g2
    dW2 += dz2.T @ a1
    grads["b2"] = dz2.sum(axis=0)
    da1 += dz2 @ W2
    dz1 = da1 * g1
    dW1 += dz1.T @ pts
    grads["b1"] = dz1.sum(axis=0)
    # chain through the fixed input scaling
    grads["W1"] = dW1 * net.input_scale
    grads["W2"] = dW2
    return grads


def data_loss(pred: Sequence[float], meas: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=float)
    meas = np.asarray(meas, dtype=float)
    if pred.shape != meas.shape or pred.size == 0:
        raise ValueError("data_loss needs equal-length, nonempty sequences")
    return float(np.mean((pred - meas) ** 2))


def helmholtz_residual(values: np.ndarray, lap: np.ndarray, k: float) -> np.ndarray:
    return lap / (k * k) + values


def physics_loss(net: MlpParams, k: float, points) -> float:
    if not k > 0:
        raise ValueError("physics loss needs k > 0")
    pts = _as_points(points)
    out, lap, _ = _pass(net, pts, True)
    return float(np.mean(helmholtz_residual(out, lap, k) ** 2))


def total_loss(eps_data: float, eps_physics: float) -> float:
    return eps_data + eps_physics


def loss_and_grads(net: MlpParams, k: float, data_pts: np.ndarray, targets: np.ndarray,
                   colloc_pts: np.ndarray | None, physics_weight: float = 1.0):
    """Returns (eps_D, eps_A, grads of eps_D + physics_weight * eps_A)."""
    m = len(targets)
    out_d, _, cache_d = _pass(net, data_pts, False)
    err = out_d - targets
    eps_d = float(np.mean(err * err))
    grads = _backward(net, cache_d, 2.0 * err / m, None)
    eps_a = 0.0
    if colloc_pts is not None and physics_weight:
        n = len(colloc_pts)
        out_a, lap_a, cache_a = _pass(net, colloc_pts, True)
        res = helmholtz_residual(out_a, lap_a, k)
        eps_a = float(np.mean(res * res))
        g = 2.0 * physics_weight * res / n
        ga = _backward(net, cache_a, g, g / (k * k))
        for name in PARAM_NAMES:
            grads[name] = grads[name] + ga[name]
    return eps_d, eps_a, grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> AdamState:
        arrs = params.arrays()
        return cls({n: np.zeros_like(a) for n, a in arrs.items()}, {n: np.zeros_like(a) for n, a in arrs.items()})


def adam_step(params: MlpParams, grads: dict[str, np.ndarray], state: AdamState,
              config: TrainingConfig = TrainingConfig()) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, in place; returns (params, state)."""
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in PARAM_NAMES:
        p = getattr(params, name)
        g = np.asarray(grads[name], dtype=float)
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_epsilon)
        if p.ndim == 0:
            setattr(params, name, p - step)
        else:
            p -= step
    return params, state


@dataclass
class NetReport:
    epochs: int
    data_loss: float
    physics_loss: float
    stopped_early: bool
    attempts: int = 1


@dataclass
class AinnPredictor:
    real_net: MlpParams
    imag_net: MlpParams
    k: float
    radius: float
    config: TrainingConfig = field(default_factory=TrainingConfig)
    report: dict[str, NetReport] = field(default_factory=dict)

    def __call__(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return forward(self.real_net, xy) + 1j * forward(self.imag_net, xy)


def collocation_points(radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random points in the closed disk of the given radius."""
    rho = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    ang = rng.uniform(0.0, 2.0 * math.pi, count)
    return np.column_stack([rho * np.cos(ang), rho * np.sin(ang)])


def _fit_numpy(net: MlpParams, k: float, data_pts: np.ndarray, targets: np.ndarray,
               colloc_pts: np.ndarray | None, config: TrainingConfig, part: str,
               history: np.ndarray) -> NetReport:
    state = AdamState.zeros_like(net)
    window = config.stop_window
    ring = np.empty(window + 1)
    for epoch in range(1, config.max_epochs + 1):
        eps_d, eps_a, grads = loss_and_grads(net, k, data_pts, targets, colloc_pts, config.physics_weight)
        if not (math.isfinite(eps_d) and math.isfinite(eps_a)):
            raise TrainingDivergedError(epoch, part)
        if len(history):
            history[epoch - 1] = eps_d, eps_a
        ring[epoch % (window + 1)] = eps_d
        if epoch > window:
            old = ring[(epoch - window) % (window + 1)]
            if old == 0.0 or abs(eps_d - old) <= config.stop_rel_tol * old:
                return NetReport(epoch, eps_d, eps_a, True)
        adam_step(net, grads, state, config)
    eps_d, eps_a, _ = loss_and_grads(net, k, data_pts, targets, colloc_pts, config.physics_weight)
    return NetReport(config.max_epochs, eps_d, eps_a, False)


def fit_network(net: MlpParams, k: float, data_pts: np.ndarray, targets: np.ndarray,
                colloc_pts: np.ndarray | None, config: TrainingConfig, part: str = "",
                history: np.ndarray | None = None, backend: str = "compiled") -> NetReport:
    """Full-batch Adam on one network, in place, until the data loss stalls.

    Stops once the data loss changed by less than ``stop_rel_tol`` (relative)
    over the last ``stop_window`` epochs, or at ``max_epochs``. ``history``,
    if given, must have shape (max_epochs, 2) and receives (eps_D, eps_A) per
    epoch.
    """
    data_pts = np.ascontiguousarray(data_pts, dtype=float)
    targets = np.ascontiguousarray(targets, dtype=float)
    if history is None:
        history = np.empty((0, 2))
    if backend == "numpy":
        return _fit_numpy(net, k, data_pts, targets, colloc_pts, config, part, history)
    from . import _kernel

    cpts = np.empty((0, 2)) if colloc_pts is None else np.ascontiguousarray(colloc_pts, dtype=float)
    b3 = np.array([float(net.b3)])
    epochs, eps_d, eps_a, stopped, bad = _kernel.fit(
        net.W1, net.b1, net.W2, net.b2, net.w3, b3, float(net.input_scale), data_pts, targets, cpts,
        float(k), float(config.physics_weight), config.learning_rate, config.adam_beta1, config.adam_beta2,
        config.adam_epsilon, int(config.stop_window), config.stop_rel_tol, int(config.max_epochs), history)
    net.b3 = np.asarray(b3[0])
    if bad:
        raise TrainingDivergedError(int(bad), part)
    return NetReport(int(epochs), float(eps_d), float(eps_a), bool(stopped))


def _fit_with_restarts(k, radius, scale, mic_xy, target, colloc, config, part, seed):
    """Fit one part; retrain from derived seeds while the fit is stuck in a poor minimum.

    Keeps the attempt with the lowest total loss.
    """
    with np.errstate(over="ignore"):
        floor = config.restart_tol * float(np.mean(target ** 2))
    seeds = [seed] + seed.spawn(config.restarts)
    best = None
    for attempt, s in enumerate(seeds, 1):
        net = init_network(k, radius, np.random.default_rng(s), input_scale=scale)
        rep = fit_network(net, k, mic_xy, target, colloc, config, part)
        if best is None or rep.data_loss + rep.physics_loss < best[1].data_loss + best[1].physics_loss:
            best = net, rep
        if rep.data_loss <= floor or not np.any(target):
            break
    best[1].attempts = attempt
    return best


def train(measured: PressureSnapshot | np.ndarray, mic_xy: np.ndarray, k: float, radius: float,
          config: TrainingConfig = TrainingConfig()) -> AinnPredictor:
    """Train the real- and imaginary-part networks on physical pressures.

    ``mic_xy`` holds the (M, 2) physical microphone coordinates and ``radius``
    the physical ring radius, which sets the network width and the collocation
    disk.
    """
    values = measured.values if isinstance(measured, PressureSnapshot) else np.asarray(measured, dtype=complex)
    mic_xy = np.asarray(mic_xy, dtype=float).reshape(-1, 2)
    if values.size < 1 or values.size != len(mic_xy):
        raise ValueError("need one measured pressure per physical microphone (at least one)")
    if not np.all(np.isfinite(values)):
        raise ValueError("measured pressures must be finite")
    ss = np.random.SeedSequence(config.rng_seed)
    s_colloc, s_real, s_imag = ss.spawn(3)
    colloc = collocation_points(config.collocation_radius * radius, config.collocation_count,
                                np.random.default_rng(s_colloc))
    scale = k if config.input_scale == "wavenumber" else 1.0
    nets, report = {}, {}
    for part, target, seed in (("real", values.real, s_real), ("imag", values.imag, s_imag)):
        nets[part], report[part] = _fit_with_restarts(k, radius, scale, mic_xy, np.ascontiguousarray(target),
                                                      colloc, config, part, seed)
    return AinnPredictor(nets["real"], nets["imag"], k, radius, config, report)


def predict(predictor: AinnPredictor, xy: np.ndarray, frequency: float = float("nan")) -> PressureSnapshot:
    return PressureSnapshot(frequency, predictor(xy))

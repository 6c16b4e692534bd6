"""Time-stepping schemes for the two-site stochastic heat equation.

State is the pair (X1, X2) = (Z_t(1,1), Z_t(1,2)) driven by

    dX1 = (X2 - X1) dt + b X1 dB1,   dX2 = (X1 - X2) dt + b X2 dB2,

in the Ito convention, from (X1, X2)(0) = (1, 0).  Both sub-flows are
exactly solvable: the drift is the symmetric 2x2 heat semigroup (the sum
X1 + X2 is conserved, the difference decays as exp(-2 dt)) and the noise
acts as an independent geometric factor exp(b dB - b^2 dt / 2) per site.
The default SPLITTING scheme composes half of the geometric factor, the
exact drift step, then the second half, so it preserves positivity
unconditionally.  EULER and MILSTEIN are kept as cross-check schemes; they
can step a component negative, in which case it is clamped at zero and the
event counted.

Noise streams: path i consumes the Philox stream (master_seed,
DOMAIN_SDE_PATH, i) in windows of NOISE_WINDOW steps; inside a window the
stream emits a (2, window) block of standard normals, row 0 driving site 1
and row 1 driving site 2.  That layout is part of the reproducibility
contract: the increments seen by a path are a pure function of
(master_seed, path index, step index), independent of how paths are
batched or distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .analytic import Beta
from .rng import DOMAIN_SDE_PATH, stream

if TYPE_CHECKING:  # pragma: no cover
    from .ensemble import ModelParams

__all__ = [
    "StepScheme",
    "PolymerState",
    "NoiseIncrement",
    "Observables",
    "PathSeries",
    "StepError",
    "step",
    "step_block",
    "derive_observables",
    "drift_mix",
    "simulate_path",
    "time_grid",
    "NOISE_WINDOW",
    "BLOCK_SIZE",
]

# Steps per RNG window (stream-layout contract, see module docstring).
NOISE_WINDOW = 1024
# Paths per integration block.  Purely a batching choice: results are
# identical for any value because streams are per path.
BLOCK_SIZE = 4096


class StepScheme(Enum):
    EULER = "euler"
    MILSTEIN = "milstein"
    SPLITTING = "splitting"


@dataclass(frozen=True)
class PolymerState:
    """Point-to-point partition values at time t; both components >= 0."""

    t: float
    x1: float
    x2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValueError(f"nonfinite state: {self}")
        if self.x1 < 0.0 or self.x2 < 0.0:
            raise ValueError(f"negative component: {self}")


@dataclass(frozen=True)
class NoiseIncrement:
    """Brownian increments (variance dt each, independent) for one step."""

    db1: float
    db2: float


class Observables(NamedTuple):
    z: float
    n: float
    overlap: float
    log_z: float


class StepError(RuntimeError):
    """A step produced an unusable state.  Carries time and state/path info."""

    def __init__(self, message: str, t: float, path_index: int | None = None):
        super().__init__(message)
        self.t = t
        self.path_index = path_index


def derive_observables(state: PolymerState) -> Observables:
    """Z, N, overlap and log Z for one state.

    Requires Z = x1 + x2 > 0 (true for the exact flow after t = 0; a zero
    can only be produced by scheme pathology and marks the path invalid).
    The overlap (x1^2 + x2^2) / (x1 + x2)^2 of two nonnegative numbers
    always lies in [1/2, 1].
    """
    z = state.x1 + state.x2
    if z <= 0.0:
        raise ValueError(f"Z = 0 at t={state.t}: path invalid ({state})")
    n = state.x1 * state.x1 + state.x2 * state.x2
    return Observables(z=z, n=n, overlap=n / (z * z), log_z=math.log(z))


def drift_mix(x1, x2, dt: float):
    """Exact drift semigroup over dt: sum conserved, difference damped.

    Works elementwise on floats or arrays.
    """
    decay = math.exp(-2.0 * dt)
    s = x1 + x2
    d = (x1 - x2) * decay
    return 0.5 * (s + d), 0.5 * (s - d)


def step(
    state: PolymerState,
    dt: float,
    noise: NoiseIncrement,
    scheme: StepScheme,
    beta: Beta,
) -> PolymerState:
    """Advance one path by one step of the chosen scheme.

    EULER and MILSTEIN clamp negative excursions at zero (the ensemble
    driver counts those events).  SPLITTING is positivity-preserving by
    construction.  A nonfinite result raises StepError with the offending
    time and state attached.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    b = beta.value
    x1, x2 = state.x1, state.x2
    try:
        y1, y2 = _step_scalar(x1, x2, dt, noise, scheme, b)
    except OverflowError:
        raise StepError(
            f"step to t={state.t + dt} overflowed from {state}", t=state.t + dt
        ) from None
    t_next = state.t + dt
    if not (math.isfinite(y1) and math.isfinite(y2)):
        raise StepError(
            f"step to t={t_next} produced nonfinite state from {state}", t=t_next
        )
    return PolymerState(t=t_next, x1=y1, x2=y2)


def _step_scalar(
    x1: float, x2: float, dt: float, noise: NoiseIncrement, scheme: StepScheme, b: float
) -> tuple[float, float]:
    if scheme is StepScheme.EULER:
        y1 = x1 + (x2 - x1) * dt + b * x1 * noise.db1
        y2 = x2 + (x1 - x2) * dt + b * x2 * noise.db2
        y1, y2 = max(y1, 0.0), max(y2, 0.0)
    elif scheme is StepScheme.MILSTEIN:
        c = 0.5 * b * b
        y1 = x1 + (x2 - x1) * dt + b * x1 * noise.db1 + c * x1 * (noise.db1**2 - dt)
        y2 = x2 + (x1 - x2) * dt + b * x2 * noise.db2 + c * x2 * (noise.db2**2 - dt)
        y1, y2 = max(y1, 0.0), max(y2, 0.0)
    elif scheme is StepScheme.SPLITTING:
        g1 = math.exp(0.5 * b * noise.db1 - 0.25 * b * b * dt)
        g2 = math.exp(0.5 * b * noise.db2 - 0.25 * b * b * dt)
        y1, y2 = drift_mix(x1 * g1, x2 * g2, dt)
        y1, y2 = y1 * g1, y2 * g2
    else:  # pragma: no cover
        raise ValueError(f"unknown scheme {scheme!r}")
    return y1, y2


def step_block(
    x1: np.ndarray,
    x2: np.ndarray,
    db1: np.ndarray,
    db2: np.ndarray,
    dt: float,
    beta: Beta,
    scheme: StepScheme,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Vectorized step over a block of independent paths.

    Returns (x1, x2, n_clamped); n_clamped counts components clamped at
    zero this step (always 0 for SPLITTING).
    """
    b = beta.value
    if scheme is StepScheme.SPLITTING:
        c = 0.25 * b * b * dt
        g1 = np.exp(0.5 * b * db1 - c)
        g2 = np.exp(0.5 * b * db2 - c)
        y1 = x1 * g1
        y2 = x2 * g2
        decay = math.exp(-2.0 * dt)
        s = y1 + y2
        d = (y1 - y2) * decay
        return 0.5 * (s + d) * g1, 0.5 * (s - d) * g2, 0
    if scheme is StepScheme.EULER:
        y1 = x1 + (x2 - x1) * dt + b * x1 * db1
        y2 = x2 + (x1 - x2) * dt + b * x2 * db2
    elif scheme is StepScheme.MILSTEIN:
        c = 0.5 * b * b
        y1 = x1 + (x2 - x1) * dt + b * x1 * db1 + c * x1 * (db1 * db1 - dt)
        y2 = x2 + (x1 - x2) * dt + b * x2 * db2 + c * x2 * (db2 * db2 - dt)
    else:  # pragma: no cover
        raise ValueError(f"unknown scheme {scheme!r}")
    n_clamped = int(np.count_nonzero(y1 < 0.0)) + int(np.count_nonzero(y2 < 0.0))
    if n_clamped:
        np.maximum(y1, 0.0, out=y1)
        np.maximum(y2, 0.0, out=y2)
    return y1, y2, n_clamped


def time_grid(dt: float, horizon: float, stride: float) -> tuple[int, np.ndarray]:
    """Validate the (dt, horizon, stride) triple and build the record grid.

    Returns (n_steps, record_steps) where record_steps holds the step
    indices at which observables are recorded (0, stride, 2*stride, ...,
    horizon, in units of steps).  horizon must be an integer number of
    steps and stride an integer multiple of dt, both within rounding.
    """
    if dt <= 0.0 or horizon <= 0.0:
        raise ValueError(f"dt and horizon must be > 0, got dt={dt}, horizon={horizon}")
    if stride < dt:
        raise ValueError(f"output stride {stride} must be >= dt {dt}")
    n_steps = round(horizon / dt)
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise ValueError(f"horizon {horizon} is not an integer multiple of dt {dt}")
    stride_steps = round(stride / dt)
    if abs(stride_steps * dt - stride) > 1e-9 * max(stride, 1.0):
        raise ValueError(f"stride {stride} is not an integer multiple of dt {dt}")
    if n_steps % stride_steps != 0:
        raise ValueError(
            f"horizon {horizon} is not an integer multiple of stride {stride}"
        )
    record_steps = np.arange(0, n_steps + 1, stride_steps, dtype=np.int64)
    return n_steps, record_steps


def _integrate_block(
    beta: Beta,
    dt: float,
    n_steps: int,
    scheme: StepScheme,
    master_seed: int,
    path_lo: int,
    block_size: int,
    record_steps: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Integrate paths [path_lo, path_lo + block_size) from (1, 0).

    Returns (rx1, rx2, clamp_events) with rx* of shape
    (block_size, len(record_steps)).  Raises StepError with the global
    path index and time if a recorded state is nonfinite or has Z <= 0.
    """
    b = beta.value
    sqdt = math.sqrt(dt)
    x1 = np.ones(block_size)
    x2 = np.zeros(block_size)
    n_rec = len(record_steps)
    rx1 = np.empty((block_size, n_rec))
    rx2 = np.empty((block_size, n_rec))
    rec_ptr = 0
    if record_steps[0] == 0:
        rx1[:, 0] = x1
        rx2[:, 0] = x2
        rec_ptr = 1
    clamp_events = 0

    drive = b != 0.0
    if drive:
        gens = [
            stream(master_seed, DOMAIN_SDE_PATH, path_lo + lane)
            for lane in range(block_size)
        ]
        buf = np.empty((block_size, 2, NOISE_WINDOW))
    else:
        zeros = np.zeros(block_size)

    for w0 in range(0, n_steps, NOISE_WINDOW):
        wlen = min(NOISE_WINDOW, n_steps - w0)
        if drive:
            for lane in range(block_size):
                buf[lane, :, :wlen] = gens[lane].standard_normal(size=(2, wlen))
        for j in range(wlen):
            if drive:
                db1 = buf[:, 0, j] * sqdt
                db2 = buf[:, 1, j] * sqdt
            else:
                db1 = db2 = zeros
            x1, x2, nc = step_block(x1, x2, db1, db2, dt, beta, scheme)
            clamp_events += nc
            k = w0 + j + 1
            if rec_ptr < n_rec and k == record_steps[rec_ptr]:
                bad = ~(np.isfinite(x1) & np.isfinite(x2) & (x1 + x2 > 0.0))
                if bad.any():
                    lane = int(np.flatnonzero(bad)[0])
                    raise StepError(
                        f"invalid state x1={x1[lane]!r} x2={x2[lane]!r} "
                        f"on path {path_lo + lane} at t={k * dt}",
                        t=k * dt,
                        path_index=path_lo + lane,
                    )
                rx1[:, rec_ptr] = x1
                rx2[:, rec_ptr] = x2
                rec_ptr += 1
    return rx1, rx2, clamp_events


@dataclass(frozen=True)
class PathSeries:
    """One path's recorded trajectory at the output times."""

    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    clamp_events: int

    @property
    def z(self) -> np.ndarray:
        return self.x1 + self.x2

    @property
    def n(self) -> np.ndarray:
        return self.x1 * self.x1 + self.x2 * self.x2

    @property
    def overlap(self) -> np.ndarray:
        return self.n / self.z**2

    @property
    def log_z(self) -> np.ndarray:
        return np.log(self.z)

    def states(self) -> list[PolymerState]:
        return [
            PolymerState(t=float(t), x1=float(a), x2=float(b))
            for t, a, b in zip(self.times, self.x1, self.x2)
        ]


def simulate_path(params: "ModelParams", path_seed: int) -> PathSeries:
    """Integrate a single path, recording observables at the output stride.

    Deterministic function of (params, path_seed): the path consumes the
    stream (params.master_seed, DOMAIN_SDE_PATH, path_seed), which is the
    same stream the ensemble driver assigns to path index path_seed, so a
    single path of a large run can be reproduced in isolation (states
    agree to floating-point roundoff; the noise stream is identical).
    """
    n_steps, record_steps = time_grid(params.dt, params.horizon, params.output_stride)
    rx1, rx2, clamps = _integrate_block(
        beta=params.beta,
        dt=params.dt,
        n_steps=n_steps,
        scheme=params.scheme,
        master_seed=params.master_seed,
        path_lo=path_seed,
        block_size=1,
        record_steps=record_steps,
    )
    times = record_steps * params.dt
    return PathSeries(times=times, x1=rx1[0], x2=rx2[0], clamp_events=clamps)

"""Piecewise-deterministic trajectories: flow steps interrupted by jumps.

Time is discretized on a fixed grid of step dt.  Each step either jumps,
with Bernoulli probability w dt decided by one uniform draw, or advances
the deterministic no-jump flow by one Runge-Kutta step.  A jump replaces
the whole step: the state at t + dt is the selected channel target.  The
random stream is a counter-based Philox generator keyed by
(seed, trajectory_index), two uniforms per step, so any trajectory of an
ensemble can be reproduced in isolation and ensembles need no
coordination between trajectories.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._flow import compile_flow, rk4_step
from ._io import fmt, write_lines
from .errors import DimensionMismatch, EmptyChannels, StepTooLarge
from .generator import GeneratorSpec
from .linalg import as_state, normalize, require_hermitian
from .unraveling import RateReport, jump_channels, total_decay_rate

JUMP_PROB_WARN = 0.1
JUMP_PROB_MAX = 0.5
GRID_TOL = 1e-9
RATE_FLOOR_ABS = 1e-9


@dataclass
class TrajectoryConfig:
    """Grid, RNG key and observables for one trajectory."""

    dt: float
    t_final: float
    seed: int
    trajectory_index: int = 0
    observables: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.t_final < self.dt:
            raise ValueError(f"t_final {self.t_final!r} must be at least dt {self.dt!r}")
        steps = round(self.t_final / self.dt)
        if abs(steps * self.dt - self.t_final) > GRID_TOL * max(1.0, self.t_final):
            raise ValueError(f"t_final {self.t_final!r} is not an integer multiple of dt {self.dt!r}")
        for name, bound in (("seed", self.seed), ("trajectory_index", self.trajectory_index)):
            if int(bound) != bound or not 0 <= bound < 2**64:
                raise ValueError(f"{name} must be an integer in [0, 2^64), got {bound!r}")
        self.seed = int(self.seed)
        self.trajectory_index = int(self.trajectory_index)
        self.observables = {
            name: require_hermitian(mat, name=f"observable {name!r}")
            for name, mat in self.observables.items()
        }

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1, dtype=np.float64) * self.dt


@dataclass
class JumpEvent:
    """One jump: when it happened, through which channel, at what rate."""

    time: float
    channel_rate: float
    pre_state_norm_check: float
    target_index: int


@dataclass
class TrajectoryRecord:
    """Observable time series plus the jump log of one trajectory."""

    times: np.ndarray
    observables: dict[str, np.ndarray]
    jumps: list[JumpEvent]
    final_state: np.ndarray


def trajectory_rng(seed: int, trajectory_index: int) -> np.random.Generator:
    """Philox stream keyed by (seed, trajectory_index).

    Counter-based, so streams for different indices are independent and
    a single trajectory can be replayed without generating the others.
    The key layout (seed first, index second) is part of the stable
    on-disk reproducibility contract.
    """
    key = np.array([seed, trajectory_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def deterministic_step(spec: GeneratorSpec, psi: np.ndarray, dt: float) -> np.ndarray:
    """One Runge-Kutta step of the no-jump flow, renormalized."""
    return rk4_step(compile_flow(spec), as_state(psi), dt)


def select_channel(report: RateReport, u2: float) -> int:
    """Channel index chosen with probability rate / total by cumulative scan."""
    rates = report.rates
    if rates.size == 0:
        raise EmptyChannels("cannot select a channel from an empty report")
    threshold = u2 * float(rates.sum())
    running = 0.0
    for n, rate in enumerate(rates):
        running += float(rate)
        if threshold < running:
            return n
    return int(rates.size - 1)


def maybe_jump(
    spec: GeneratorSpec,
    psi: np.ndarray,
    dt: float,
    u1: float,
    u2: float,
    time: float = 0.0,
) -> tuple[np.ndarray, JumpEvent] | None:
    """Bernoulli jump decision for one step.

    Computes only the total decay rate (one generator application, no
    eigendecomposition) unless the jump actually fires; the channel
    eigenproblem is solved lazily.  Returns None when no jump occurs.
    """
    psi = as_state(psi)
    w = total_decay_rate(spec, psi)
    prob = w * dt
    if prob > JUMP_PROB_MAX:
        raise StepTooLarge(f"jump probability {prob:.3f} per step exceeds {JUMP_PROB_MAX}; reduce dt")
    if prob > JUMP_PROB_WARN:
        warnings.warn(
            f"jump probability {prob:.3f} per step exceeds {JUMP_PROB_WARN}: discretization bias is first order in dt",
            stacklevel=2,
        )
    if u1 >= prob:
        return None
    report = jump_channels(spec, psi)
    if not report.channels:
        if w > RATE_FLOOR_ABS:
            raise EmptyChannels(f"decay rate {w:.3e} but every channel was filtered out")
        return None
    idx = select_channel(report, u2)
    channel = report.channels[idx]
    event = JumpEvent(
        time=float(time),
        channel_rate=channel.rate,
        pre_state_norm_check=float(np.linalg.norm(psi)),
        target_index=idx,
    )
    return channel.target.copy(), event


def run_trajectory(spec: GeneratorSpec, psi0: np.ndarray, cfg: TrajectoryConfig) -> TrajectoryRecord:
    """Evolve one trajectory on the configured grid.

    Identical (spec, psi0, cfg) inputs give bitwise-identical records:
    the RNG stream is fixed by (seed, trajectory_index) with exactly two
    uniforms consumed per step whether or not a jump fires.
    """
    psi = normalize(as_state(psi0))
    if psi.shape[0] != spec.dim:
        raise DimensionMismatch(f"state dimension {psi.shape[0]} does not match generator dimension {spec.dim}")
    for name, mat in cfg.observables.items():
        if mat.shape[0] != spec.dim:
            raise DimensionMismatch(f"observable {name!r} has dimension {mat.shape[0]}, expected {spec.dim}")
    flow = compile_flow(spec)
    rng = trajectory_rng(cfg.seed, cfg.trajectory_index)
    n = cfg.n_steps
    names = list(cfg.observables)
    series = {name: np.empty(n + 1, dtype=np.float64) for name in names}

    def record(step: int, state: np.ndarray) -> None:
        for name in names:
            series[name][step] = float(np.vdot(state, cfg.observables[name] @ state).real)

    jumps: list[JumpEvent] = []
    record(0, psi)
    for i in range(n):
        u1, u2 = rng.random(2)
        outcome = maybe_jump(spec, psi, cfg.dt, u1, u2, time=(i + 1) * cfg.dt)
        if outcome is None:
            psi = rk4_step(flow, psi, cfg.dt)
        else:
            psi, event = outcome
            jumps.append(event)
        record(i + 1, psi)
    return TrajectoryRecord(times=cfg.times, observables=series, jumps=jumps, final_state=psi)


def write_event_log(record: TrajectoryRecord, path: str) -> None:
    """Per-step event log: time, event_type (step or jump), rate, target.

    Step rows leave the channel fields empty; jump rows carry the
    selected channel's rate and index.
    """
    dt = float(record.times[1] - record.times[0])
    by_step = {int(round(event.time / dt)): event for event in record.jumps}
    lines = ["time,event_type,channel_rate,target_index"]
    for i in range(1, record.times.shape[0]):
        event = by_step.get(i)
        if event is None:
            lines.append(f"{fmt(record.times[i])},step,,")
        else:
            lines.append(f"{fmt(record.times[i])},jump,{fmt(event.channel_rate)},{event.target_index}")
    write_lines(path, lines)

"""Vectorized multi-trajectory engine.

Evolves many trajectories of one generator at once, holding the states
as columns of a (d, M) block so each Runge-Kutta stage is a single
stacked matrix product.  Trajectories are processed in fixed chunks of
CHUNK columns; worker threads may run chunks concurrently, but partial
results are reduced strictly in chunk order, and every trajectory owns a
Philox stream keyed by (seed, trajectory_index) with two uniforms per
step.  Output bytes therefore do not depend on the thread count.  CHUNK
itself is part of that contract: changing it reorders floating-point
accumulation and changes output in the last bits.

The per-step policy is the same as the single-trajectory path in
trajectory.py: Bernoulli jump with probability w dt decided by the first
uniform, channel selection by cumulative scan with the second, jump
replacing the whole step.  Jumps are rare, so the channel eigenproblem
is solved per jumping column only.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _flow
from .errors import DimensionMismatch, EmptyChannels, StepTooLarge
from .generator import GeneratorSpec
from .linalg import as_state, normalize
from .trajectory import JUMP_PROB_MAX, JUMP_PROB_WARN, RATE_FLOOR_ABS, select_channel, trajectory_rng
from .unraveling import jump_channels

CHUNK = 1024


def resolve_threads(threads: int | None) -> int:
    """Map the user-facing thread count to a worker count (0 or None = auto)."""
    if threads is None or threads == 0:
        return max(1, os.cpu_count() or 1)
    if threads < 0:
        raise ValueError(f"thread count must be nonnegative, got {threads}")
    return int(threads)


@dataclass
class BatchResult:
    """Reduced per-snapshot sums over all trajectories."""

    n_trajectories: int
    snapshot_steps: tuple[int, ...]
    block_counts: np.ndarray  # (n_blocks,) trajectories per jackknife block
    block_sums: np.ndarray  # (S, n_blocks, d, d) sums of projectors
    obs_sum: np.ndarray  # (S, K) sums of observable expectations
    obs_sumsq: np.ndarray  # (S, K)
    max_jump_prob: float
    jump_log: list[tuple[int, float, float, int]] | None  # (trajectory, time, rate, channel)
    final_states: np.ndarray | None  # (d, M)


@dataclass
class _ChunkPartial:
    block_sums: np.ndarray
    obs_sum: np.ndarray
    obs_sumsq: np.ndarray
    max_jump_prob: float
    jump_log: list[tuple[int, float, float, int]] | None
    final_states: np.ndarray | None


def run_batch(
    spec: GeneratorSpec,
    psi0: np.ndarray,
    dt: float,
    n_steps: int,
    n_trajectories: int,
    seed: int,
    snapshot_steps: tuple[int, ...],
    observables: tuple[np.ndarray, ...] = (),
    n_blocks: int = 10,
    threads: int = 1,
    record_jumps: bool = False,
    keep_final: bool = False,
) -> BatchResult:
    flow = _flow.compile_flow(spec)
    psi0 = normalize(as_state(psi0))
    d = spec.dim
    if psi0.shape[0] != d:
        raise DimensionMismatch(f"state dimension {psi0.shape[0]} does not match generator dimension {d}")
    obs_mats = tuple(np.asarray(o, dtype=np.complex128) for o in observables)
    for o in obs_mats:
        if o.shape != (d, d):
            raise DimensionMismatch(f"observable has shape {o.shape}, expected {(d, d)}")
    snaps = tuple(int(s) for s in snapshot_steps)
    if any(not 0 <= s <= n_steps for s in snaps) or len(set(snaps)) != len(snaps):
        raise ValueError(f"snapshot steps {snaps} must be unique integers in [0, {n_steps}]")
    slot_of = {step: slot for slot, step in enumerate(snaps)}
    n_snap = len(snaps)
    n_obs = len(obs_mats)
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    if n_blocks < 1:
        raise ValueError("need at least one block")

    def block_of(index: np.ndarray) -> np.ndarray:
        return (index * n_blocks) // n_trajectories

    def run_chunk(lo: int, hi: int) -> _ChunkPartial:
        m = hi - lo
        psi = np.repeat(psi0[:, None], m, axis=1)
        uniforms = np.empty((n_steps, 2, m), dtype=np.float64)
        for j in range(m):
            uniforms[:, :, j] = trajectory_rng(seed, lo + j).random((n_steps, 2))
        ids = block_of(np.arange(lo, hi, dtype=np.int64))
        # chunk columns are consecutive trajectory indices, so each block
        # occupies one contiguous column range
        splits = np.flatnonzero(np.diff(ids)) + 1
        ranges = []
        start = 0
        for stop in list(splits) + [m]:
            ranges.append((int(ids[start]), start, stop))
            start = stop
        sums = np.zeros((n_snap, n_blocks, d, d), dtype=np.complex128)
        osum = np.zeros((n_snap, n_obs), dtype=np.float64)
        osq = np.zeros((n_snap, n_obs), dtype=np.float64)
        log: list[tuple[int, float, float, int]] | None = [] if record_jumps else None
        pmax = 0.0

        def accumulate(slot: int, states: np.ndarray) -> None:
            for block, c0, c1 in ranges:
                cols = states[:, c0:c1]
                sums[slot, block] += cols @ cols.conj().T
            for k in range(n_obs):
                ov = obs_mats[k] @ states
                vals = np.einsum("dm,dm->m", states.conj(), ov).real
                osum[slot, k] += vals.sum()
                osq[slot, k] += (vals * vals).sum()

        slot = slot_of.get(0)
        if slot is not None:
            accumulate(slot, psi)
        for i in range(n_steps):
            k1, rate = _flow.rhs_block(flow, psi, want_rate=True)
            prob = rate * dt
            step_max = float(prob.max())
            if step_max > JUMP_PROB_MAX:
                raise StepTooLarge(
                    f"jump probability {step_max:.3f} per step exceeds {JUMP_PROB_MAX}; reduce dt"
                )
            pmax = max(pmax, step_max)
            jumping = np.flatnonzero(uniforms[i, 0] < prob)
            psi_next = _flow.rk4_step_block(flow, psi, dt, k1=k1)
            for j in jumping:
                report = jump_channels(spec, psi[:, j])
                if not report.channels:
                    if rate[j] > RATE_FLOOR_ABS:
                        raise EmptyChannels(
                            f"decay rate {rate[j]:.3e} but every channel was filtered out"
                        )
                    continue
                chosen = select_channel(report, float(uniforms[i, 1, j]))
                channel = report.channels[chosen]
                psi_next[:, j] = channel.target
                if log is not None:
                    log.append((lo + int(j), (i + 1) * dt, channel.rate, chosen))
            psi = psi_next
            slot = slot_of.get(i + 1)
            if slot is not None:
                accumulate(slot, psi)
        return _ChunkPartial(
            block_sums=sums,
            obs_sum=osum,
            obs_sumsq=osq,
            max_jump_prob=pmax,
            jump_log=log,
            final_states=psi if keep_final else None,
        )

    bounds = [(lo, min(lo + CHUNK, n_trajectories)) for lo in range(0, n_trajectories, CHUNK)]
    workers = resolve_threads(threads)
    if workers <= 1 or len(bounds) == 1:
        partials = [run_chunk(lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda span: run_chunk(*span), bounds))

    block_sums = np.zeros((n_snap, n_blocks, d, d), dtype=np.complex128)
    obs_sum = np.zeros((n_snap, n_obs), dtype=np.float64)
    obs_sumsq = np.zeros((n_snap, n_obs), dtype=np.float64)
    jump_log: list[tuple[int, float, float, int]] | None = [] if record_jumps else None
    finals = [] if keep_final else None
    max_prob = 0.0
    for part in partials:
        block_sums += part.block_sums
        obs_sum += part.obs_sum
        obs_sumsq += part.obs_sumsq
        max_prob = max(max_prob, part.max_jump_prob)
        if jump_log is not None and part.jump_log is not None:
            jump_log.extend(part.jump_log)
        if finals is not None and part.final_states is not None:
            finals.append(part.final_states)
    if max_prob > JUMP_PROB_WARN:
        warnings.warn(
            f"jump probability reached {max_prob:.3f} per step (above {JUMP_PROB_WARN}): discretization bias is first order in dt",
            stacklevel=2,
        )
    return BatchResult(
        n_trajectories=n_trajectories,
        snapshot_steps=snaps,
        block_counts=np.bincount(block_of(np.arange(n_trajectories, dtype=np.int64)), minlength=n_blocks),
        block_sums=block_sums,
        obs_sum=obs_sum,
        obs_sumsq=obs_sumsq,
        max_jump_prob=max_prob,
        jump_log=jump_log,
        final_states=np.concatenate(finals, axis=1) if finals else None,
    )

"""Single-trajectory behavior: determinism, jump statistics, event logs.

The two-level flip model (H = 0, A = sx, D = [[1/2]]) has constant decay
rate w = 1 from either basis state and a frozen flow there, so its
inter-jump waits are exponential with unit rate up to the first-order
discretization of the per-step Bernoulli trial.  That makes it the one
model where the waiting-time distribution has a clean reference.
"""

import numpy as np
import pytest
from scipy import stats

from qjump._batch import run_batch
from qjump.errors import DimensionMismatch, EmptyChannels, StepTooLarge
from qjump.generator import GeneratorSpec
from qjump.oscillator import OscillatorParams, fock_state, oscillator_generator
from qjump.trajectory import (
    JumpEvent,
    TrajectoryConfig,
    deterministic_step,
    maybe_jump,
    run_trajectory,
    select_channel,
    trajectory_rng,
    write_event_log,
)
from qjump.unraveling import JumpChannel, RateReport

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
FLIP = GeneratorSpec(hamiltonian=np.zeros((2, 2)), couplings=(SX,), coeff=[[0.5]])
OSC = oscillator_generator(OscillatorParams(levels=20, d22=0.5))

E0_2 = np.array([1.0, 0.0], dtype=np.complex128)


def flip_config(dt=1e-3, t_final=1.0, seed=42, index=0):
    return TrajectoryConfig(dt=dt, t_final=t_final, seed=seed, trajectory_index=index)


def test_config_validation():
    with pytest.raises(ValueError):
        TrajectoryConfig(dt=0.0, t_final=1.0, seed=0)
    with pytest.raises(ValueError):
        TrajectoryConfig(dt=0.3, t_final=1.0, seed=0)  # not on the grid
    with pytest.raises(ValueError):
        TrajectoryConfig(dt=1e-3, t_final=1.0, seed=-1)
    cfg = TrajectoryConfig(dt=0.25, t_final=1.0, seed=0)
    assert cfg.n_steps == 4
    assert np.allclose(cfg.times, [0.0, 0.25, 0.5, 0.75, 1.0])


def test_rng_streams():
    a = trajectory_rng(7, 3).random(4)
    b = trajectory_rng(7, 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, trajectory_rng(7, 4).random(4))
    assert not np.array_equal(a, trajectory_rng(3, 7).random(4))


def test_run_is_bitwise_deterministic():
    obs = {"pop0": np.diag([1.0, 0.0]).astype(np.complex128)}
    cfg = TrajectoryConfig(dt=1e-2, t_final=2.0, seed=5, observables=obs)
    first = run_trajectory(FLIP, E0_2, cfg)
    second = run_trajectory(FLIP, E0_2, cfg)
    assert np.array_equal(first.observables["pop0"], second.observables["pop0"])
    assert np.array_equal(first.final_state, second.final_state)
    assert [e.time for e in first.jumps] == [e.time for e in second.jumps]
    third = run_trajectory(FLIP, E0_2, TrajectoryConfig(dt=1e-2, t_final=2.0, seed=5, trajectory_index=1, observables=obs))
    assert not np.array_equal(first.observables["pop0"], third.observables["pop0"])


def test_pure_hamiltonian_trajectory_is_unitary():
    params = OscillatorParams(levels=8, d22=0.0)
    spec = oscillator_generator(params)
    psi0 = (fock_state(8, 0) + fock_state(8, 3)) / np.sqrt(2.0)
    h0 = np.array(spec.hamiltonian)
    cfg = TrajectoryConfig(dt=1e-3, t_final=0.5, seed=0, observables={"H0": h0})
    record = run_trajectory(spec, psi0, cfg)
    assert record.jumps == []
    energy = record.observables["H0"]
    assert np.max(np.abs(energy - energy[0])) < 1e-10
    # H0 is diagonal, so the exact propagator is a pure phase per level
    exact = np.exp(-1j * np.diag(h0).real * 0.5) * psi0
    assert abs(np.vdot(exact, record.final_state)) > 1.0 - 1e-9
    assert np.linalg.norm(record.final_state) == pytest.approx(1.0, abs=1e-12)


def test_observables_recorded_on_full_grid():
    obs = {"pop0": np.diag([1.0, 0.0]).astype(np.complex128)}
    cfg = TrajectoryConfig(dt=0.1, t_final=1.0, seed=1, observables=obs)
    record = run_trajectory(FLIP, E0_2, cfg)
    assert record.observables["pop0"].shape == (11,)
    assert record.observables["pop0"][0] == pytest.approx(1.0)


def test_dimension_mismatch_rejected():
    with pytest.raises(DimensionMismatch):
        run_trajectory(FLIP, np.array([1.0, 0.0, 0.0]), flip_config())
    bad_obs = {"x": np.zeros((3, 3), dtype=np.complex128)}
    with pytest.raises(DimensionMismatch):
        run_trajectory(FLIP, E0_2, TrajectoryConfig(dt=0.1, t_final=1.0, seed=0, observables=bad_obs))


def test_maybe_jump_bernoulli_contract():
    # ground state decays at w = 1/2, so prob = 5e-4 at dt = 1e-3
    psi = fock_state(20, 0)
    assert maybe_jump(OSC, psi, 1e-3, u1=5.1e-4, u2=0.5) is None
    outcome = maybe_jump(OSC, psi, 1e-3, u1=4.9e-4, u2=0.5, time=0.125)
    assert outcome is not None
    target, event = outcome
    assert abs(np.vdot(fock_state(20, 1), target)) >= 1.0 - 1e-10
    assert event == JumpEvent(time=0.125, channel_rate=event.channel_rate, pre_state_norm_check=1.0, target_index=0)
    assert event.channel_rate == pytest.approx(0.5, abs=1e-10)


def test_maybe_jump_probability_guards():
    psi = fock_state(20, 9)  # w = 2 * 0.5 * 19/2 = 9.5
    with pytest.warns(UserWarning):
        assert maybe_jump(OSC, psi, 0.02, u1=0.99, u2=0.5) is None
    with pytest.raises(StepTooLarge):
        maybe_jump(OSC, psi, 0.06, u1=0.99, u2=0.5)


def test_select_channel_cumulative_scan():
    report = RateReport(
        total=0.5,
        channels=[
            JumpChannel(rate=0.2, target=np.array([1.0, 0.0])),
            JumpChannel(rate=0.3, target=np.array([0.0, 1.0])),
        ],
    )
    assert select_channel(report, 0.0) == 0
    assert select_channel(report, 0.39) == 0
    assert select_channel(report, 0.41) == 1
    assert select_channel(report, 0.999999) == 1
    with pytest.raises(EmptyChannels):
        select_channel(RateReport(total=0.0, channels=[]), 0.5)


def test_oversized_step_rejected_by_norm_drift():
    psi = fock_state(20, 0)
    with pytest.raises(StepTooLarge):
        deterministic_step(OSC, psi, 5.0)


def first_waits(dt, t_final, n_traj, seed):
    """Time of the first jump per trajectory, exactly exponential at rate 1.

    Only the first wait is used: pooling all completed inter-jump waits
    from a finite window over-samples short waits (the censored stretch
    after the last jump preferentially swallows long ones).  The window
    is long enough that the missing-first-jump probability e^{-t_final}
    is far below the resolution of the test.
    """
    batch = run_batch(
        FLIP,
        E0_2,
        dt,
        round(t_final / dt),
        n_traj,
        seed,
        snapshot_steps=(round(t_final / dt),),
        record_jumps=True,
    )
    first = {}
    for traj, time, _, _ in batch.jump_log:
        if traj not in first:
            first[traj] = time  # log is time-ordered within a trajectory
    return np.asarray(sorted(first.values()))


def test_flip_waiting_times_are_exponential():
    waits = first_waits(dt=1e-3, t_final=10.0, n_traj=1000, seed=2024)
    assert waits.size >= 999
    assert waits.mean() == pytest.approx(1.0, rel=0.1)
    result = stats.kstest(waits, "expon")
    assert result.pvalue > 0.01
    # halving dt only sharpens the discretization, never degrades it
    finer = first_waits(dt=5e-4, t_final=10.0, n_traj=500, seed=77)
    assert stats.kstest(finer, "expon").pvalue > 0.01


def test_flip_jump_rate_is_constant():
    batch = run_batch(FLIP, E0_2, 1e-3, 2000, 100, 9, snapshot_steps=(2000,), record_jumps=True)
    rates = [rate for _, _, rate, _ in batch.jump_log]
    assert len(rates) > 100
    assert np.max(np.abs(np.asarray(rates) - 1.0)) < 1e-9


def test_event_log_format(tmp_path):
    cfg = TrajectoryConfig(dt=0.05, t_final=2.0, seed=12)
    record = run_trajectory(FLIP, E0_2, cfg)
    assert record.jumps  # seed chosen so at least one jump fires
    path = tmp_path / "jumps.csv"
    write_event_log(record, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "time,event_type,channel_rate,target_index"
    assert len(lines) == 1 + cfg.n_steps
    jump_rows = [line for line in lines[1:] if ",jump," in line]
    assert len(jump_rows) == len(record.jumps)
    for line in lines[1:]:
        fields = line.split(",")
        assert len(fields) == 4
        assert fields[1] in ("step", "jump")
        if fields[1] == "step":
            assert fields[2] == "" and fields[3] == ""
        else:
            assert float(fields[2]) == pytest.approx(1.0, abs=1e-9)
            assert fields[3] == "0"

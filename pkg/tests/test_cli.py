"""End-to-end command line checks on small, fast configurations."""

import argparse
import os

import numpy as np
import pytest

from qjump.cli import _resolve_thread_request, cmd_verify, main

SMALL = """
[model]
type = damped_oscillator
N = 8
D22 = 0.5

[initial]
state = coherent(0.6)

[run]
dt = 1e-2
t_final = 0.2
snapshot_times = 0.1 0.2
n_trajectories = 200
seed = 3

[observables]
names = x number

[output]
directory = {out}
dump_density = {dump}
"""


def write_config(tmp_path, out="out", dump="false", name="model.cfg"):
    path = tmp_path / name
    path.write_text(SMALL.format(out=tmp_path / out, dump=dump))
    return str(path)


def test_missing_subcommand_exits():
    with pytest.raises(SystemExit):
        main([])


def test_missing_config_file(tmp_path, capsys):
    assert main(["verify", "--config", str(tmp_path / "absent.cfg")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_invalid_config_reports_lines(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("[model]\ntype = damped_oscillator\nD11 = -1.0\n")
    assert main(["verify", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "line 1" in err
    assert "positive semidefinite" in err


def test_verify_passes_and_prints_report(tmp_path, capsys):
    assert main(["verify", "--config", write_config(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS] single_step_order_ratio" in out
    assert "[PASS] closed_form_rate_operator" in out
    assert "[FAIL]" not in out
    assert "checks passed" in out


def test_verify_explicit_model(tmp_path, capsys):
    path = tmp_path / "flip.cfg"
    path.write_text(
        "[model]\ntype = explicit\ndim = 2\n"
        "hamiltonian = 0,0 0,0 0,0 0,0\n"
        "couplings = 1\ncoupling_1 = 0,0 1,0 1,0 0,0\ncoeff = 0.5,0\n"
        "[initial]\nstate = fock(0)\n"
        "[run]\ndt = 1e-2\nt_final = 0.1\nn_trajectories = 10\nseed = 1\n"
    )
    assert main(["verify", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "[FAIL]" not in out
    # the oscillator-only closed-form section has nothing to check here
    assert "closed_form_rate_operator" not in out


def test_trajectory_outputs(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["trajectory", "--config", cfg]) == 0
    obs = tmp_path / "out" / "observables_00000.csv"
    jumps = tmp_path / "out" / "jumps_00000.csv"
    lines = obs.read_text().splitlines()
    assert lines[0] == "time,x,number"
    assert len(lines) == 22  # header + 21 grid points
    assert jumps.read_text().splitlines()[0] == "time,event_type,channel_rate,target_index"
    first = obs.read_bytes()
    assert main(["trajectory", "--config", cfg]) == 0
    assert obs.read_bytes() == first  # rerun is byte-identical


def test_trajectory_multiple_indices(tmp_path):
    # long enough that the two streams produce different jump patterns
    cfg_text = (
        SMALL.format(out=tmp_path / "out", dump="false")
        .replace("seed = 3", "seed = 3\ntrajectory_indices = 0 2")
        .replace("t_final = 0.2", "t_final = 1.0")
        .replace("snapshot_times = 0.1 0.2", "snapshot_times = 0.5 1.0")
    )
    path = tmp_path / "multi.cfg"
    path.write_text(cfg_text)
    assert main(["trajectory", "--config", str(path)]) == 0
    names = sorted(os.listdir(tmp_path / "out"))
    assert names == [
        "jumps_00000.csv",
        "jumps_00002.csv",
        "observables_00000.csv",
        "observables_00002.csv",
    ]
    a = (tmp_path / "out" / "jumps_00000.csv").read_text()
    b = (tmp_path / "out" / "jumps_00002.csv").read_text()
    assert a != b  # different trajectory index, different stream


def test_ensemble_outputs_and_thread_independence(tmp_path):
    cfg = write_config(tmp_path, dump="true")
    assert main(["ensemble", "--config", cfg, "--threads", "1"]) == 0
    conv = tmp_path / "out" / "convergence.csv"
    lines = conv.read_text().splitlines()
    assert lines[0] == "time,trace_distance,stat_error,mean_x,stderr_x,mean_number,stderr_number"
    assert len(lines) == 3
    assert (tmp_path / "out" / "rho_mc_000.txt").exists()
    assert (tmp_path / "out" / "rho_oracle_001.txt").exists()
    dump = (tmp_path / "out" / "rho_mc_000.txt").read_text().splitlines()
    assert dump[0] == "dim 8"
    assert len(dump) == 9
    assert len(dump[1].split()) == 8  # eight re,im pairs per row
    baseline = conv.read_bytes()
    mc_baseline = (tmp_path / "out" / "rho_mc_000.txt").read_bytes()
    assert main(["ensemble", "--config", cfg, "--threads", "8"]) == 0
    assert conv.read_bytes() == baseline
    assert (tmp_path / "out" / "rho_mc_000.txt").read_bytes() == mc_baseline


def test_out_and_seed_overrides(tmp_path):
    cfg = write_config(tmp_path)
    alt = tmp_path / "alt"
    assert main(["ensemble", "--config", cfg, "--out", str(alt)]) == 0
    assert (alt / "convergence.csv").exists()
    base = (alt / "convergence.csv").read_bytes()
    assert main(["ensemble", "--config", cfg, "--out", str(alt), "--seed", "99"]) == 0
    assert (alt / "convergence.csv").read_bytes() != base


def test_thread_request_resolution(monkeypatch):
    ns = argparse.Namespace(threads=5)
    assert _resolve_thread_request(ns) == 5
    ns = argparse.Namespace(threads=None)
    monkeypatch.delenv("QJUMP_THREADS", raising=False)
    assert _resolve_thread_request(ns) == 0
    monkeypatch.setenv("QJUMP_THREADS", "3")
    assert _resolve_thread_request(ns) == 3
    monkeypatch.setenv("QJUMP_THREADS", "soup")
    assert _resolve_thread_request(ns) == 0


def test_density_dump_round_trip(tmp_path):
    cfg = write_config(tmp_path, dump="true")
    assert main(["ensemble", "--config", cfg]) == 0
    rows = (tmp_path / "out" / "rho_oracle_000.txt").read_text().splitlines()
    rho = np.array(
        [[complex(*map(float, pair.split(","))) for pair in row.split()] for row in rows[1:]]
    )
    assert rho.shape == (8, 8)
    assert abs(np.trace(rho).real - 1.0) < 1e-10
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-12

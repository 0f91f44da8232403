import dataclasses
import subprocess
import sys

import numpy as np
import pytest

from locrom import pipeline
from locrom.cli import main
from locrom.config import parse_config
from locrom.errors import CorruptStoreError, EmptyReportError, InvalidKError, StageError
from locrom.fom import build_model
from locrom.pipeline import (estimate_bifurcation, load_artifacts, rescan_elbow, run_errors, run_offline,
                             run_online, theta_range)
from locrom.snapshots import load_snapshots

SMALL = """
[model]
name = pitchfork
n_interior = 24

[sampling]
kind = uniform
range = 12, 30
count = 10

[clustering]
k = {k}
restarts = 3

[basis]
rule = energy
energy_tol = {tol}
"""


def small(k=3, tol=1e-8):
    return parse_config(SMALL.format(k=k, tol=tol))


def test_offline_layout(pitchfork_artifacts):
    root = pitchfork_artifacts.root
    for rel in ("manifest.txt", "config.txt", "snapshots/snapshots.mat", "snapshots/meta.txt",
                "clusters/clusters.txt", "clusters/means.mat", "elbow.csv", "bases/local/bases_meta.txt",
                "bases/global/basis_global1.mat", "roms/global2/A0.mat", "roms/local_0/init.mat",
                "offline_report.txt"):
        assert (root / rel).exists(), rel
    art = pitchfork_artifacts
    assert art.K >= 2
    assert all(art.local(k).L >= 1 for k in range(art.K))
    report = (root / "offline_report.txt").read_text()
    for key in ("K =", "L =", "switch_points_midrange_radius", "switch_points_parameter_mean",
                "global1_size", "global2_size"):
        assert key in report
    assert not list(root.parent.glob(".art-*"))


def test_fixed_k_greater_than_s_fails_cleanly(tmp_path):
    with pytest.raises(StageError) as exc:
        run_offline(small(k=11), tmp_path / "out")
    assert exc.value.stage == "clustering"
    assert isinstance(exc.value.cause, InvalidKError)
    assert not (tmp_path / "out").exists()
    assert list(tmp_path.iterdir()) == []


def test_offline_refuses_foreign_directory(tmp_path):
    (tmp_path / "out").mkdir()
    (tmp_path / "out" / "precious.txt").write_text("x")
    with pytest.raises(StageError):
        run_offline(small(), tmp_path / "out")
    assert (tmp_path / "out" / "precious.txt").exists()


def test_rerun_is_bit_identical(tmp_path):
    a = run_offline(small(), tmp_path / "a")
    b = run_offline(small(), tmp_path / "b")
    for rel in ("snapshots/snapshots.mat", "clusters/clusters.txt", "bases/local/basis_0.mat", "roms/local_1/C.ten"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    run_offline(small(), tmp_path / "a")  # overwriting an artifact directory is allowed
    assert (a / "manifest.txt").exists()


def test_training_theta_reproduces_snapshot(tmp_path):
    art = load_artifacts(run_offline(small(tol=0.0), tmp_path / "a"))
    snaps = load_snapshots(art.root / "snapshots")
    d = run_online(art, snaps.thetas)
    model = build_model(art.config.model)
    for row, s in zip(d.rows, range(snaps.S)):
        assert row.converged
        assert abs(row.observable - model.observable(snaps.matrix[:, s])) <= 1e-6
        assert row.basis_used == art.assignment[s]


def test_online_empty_and_csv(pitchfork_artifacts):
    d = run_online(pitchfork_artifacts, [])
    assert d.to_csv() == "theta,observable,basis_used,converged,extrapolation\n"
    d = run_online(pitchfork_artifacts, [20.0, 15.0])
    lines = d.to_csv().splitlines()
    assert lines[1].startswith("15,") and lines[2].startswith("20,")
    obs = float(lines[1].split(",")[1])
    assert obs == d.rows[0].observable  # 17 significant digits round-trip


def test_online_sorts_and_flags(pitchfork_artifacts):
    d = run_online(pitchfork_artifacts, [30.0, 5.0, 12.0], "mean")
    assert list(d.thetas) == [5.0, 12.0, 30.0]
    assert [r.extrapolation for r in d.rows] == [True, False, False]
    assert d.criterion == "parameter_mean"
    assert abs(d.rows[0].observable) < 1e-4 < abs(d.rows[1].observable)


def test_online_never_rebuilds_full_operators(pitchfork_artifacts, monkeypatch):
    def boom(*a, **k):
        raise AssertionError("full-order operator assembly during the online stage")
    monkeypatch.setattr(pipeline, "build_model", boom)
    monkeypatch.setattr(pipeline, "project_model", boom)
    run_online(pitchfork_artifacts, theta_range(5, 40, 20))


def test_diagram_continuity_improves_with_density(pitchfork_artifacts):
    def max_jump(count):
        d = run_online(pitchfork_artifacts, theta_range(10.5, 40.0, count))
        jumps = [abs(b.observable - a.observable) for a, b in zip(d.rows, d.rows[1:])
                 if a.basis_used == b.basis_used]
        return max(jumps)
    assert max_jump(200) < 0.5 * max_jump(50)


def test_modal_sweep_switches_near_boundaries(modal_artifacts):
    d = run_online(modal_artifacts, theta_range(12, 120, 100))
    used = [r.basis_used for r in d.rows]
    changes = [i for i in range(1, len(used)) if used[i] != used[i - 1]]
    assert len(changes) == 2
    spacing = 108 / 99
    for i, boundary in zip(changes, (45.0, 95.0)):
        assert d.rows[i - 1].theta - spacing <= boundary <= d.rows[i].theta + spacing
    assert all(r.converged for r in d.rows)


def test_errors_report(pitchfork_artifacts):
    rep = run_errors(pitchfork_artifacts)
    assert len(rep.rows) == 10
    assert all(r.fom_converged for r in rep.rows)
    loc = rep.column("local")
    assert rep.mean[0] == pytest.approx(loc.mean()) and rep.max[0] == loc.max()
    assert np.all(loc <= 1e-2)
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("theta,cluster,fom_converged,error_kind,local_error")
    assert lines[-2].startswith("mean,") and lines[-1].startswith("max,")


def test_errors_absolute_on_trivial_branch(pitchfork_artifacts):
    rep = run_errors(pitchfork_artifacts, [6.0, 20.5])
    assert rep.rows[0].error_kind == "absolute" and rep.rows[0].errors[0] < 1e-6
    assert rep.rows[1].error_kind == "relative"


def test_errors_input_checks(pitchfork_artifacts):
    with pytest.raises(StageError) as exc:
        run_errors(pitchfork_artifacts, [])
    assert isinstance(exc.value.cause, EmptyReportError)
    with pytest.raises(StageError):
        run_errors(pitchfork_artifacts, [float(pitchfork_artifacts.thetas[3])])


def test_errors_fom_failure_excluded(pitchfork_artifacts):
    art = dataclasses.replace(pitchfork_artifacts,
                              config=dataclasses.replace(pitchfork_artifacts.config, max_iter=1))
    rep = run_errors(art, [20.5, 30.5])
    assert not any(r.fom_converged for r in rep.rows)
    assert np.isnan(rep.mean[0]) and len(rep.notes) == 2
    assert "# full-order solve did not converge" in rep.to_csv()


def test_corrupt_artifacts_detected_before_solving(tmp_path, monkeypatch):
    root = run_offline(small(), tmp_path / "a")
    f = root / "roms" / "local_0" / "A0.mat"
    f.write_bytes(f.read_bytes()[:-3])
    monkeypatch.setattr(pipeline, "solve_rom", lambda *a, **k: pytest.fail("solve before load check"))
    with pytest.raises(CorruptStoreError):
        load_artifacts(root)
    with pytest.raises(StageError) as exc:
        run_online(root, [15.0])
    assert exc.value.stage == "load"


def test_missing_artifact_pieces(tmp_path):
    root = run_offline(small(), tmp_path / "a")
    (root / "bases" / "global" / "basis_global2.mat").unlink()
    with pytest.raises(CorruptStoreError):
        load_artifacts(root)
    with pytest.raises(CorruptStoreError):
        load_artifacts(tmp_path / "nowhere")


def test_estimate_bifurcation():
    Row = pipeline.DiagramRow
    d = pipeline.BifurcationDiagram((Row(1.0, 0.0, 0, True, False), Row(2.0, -0.5, 0, False, False),
                                     Row(3.0, -0.5, 0, True, False)), "midrange_radius")
    assert estimate_bifurcation(d) == 3.0
    assert estimate_bifurcation(pipeline.BifurcationDiagram((), "mean")) is None


def test_rescan_elbow(pitchfork_artifacts):
    scan = rescan_elbow(pitchfork_artifacts.root, 6, 0.1)
    assert scan.k_values[-1] == 6 and 3 <= scan.chosen_K <= 6


def test_cli_round_trip(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(SMALL.format(k=2, tol=1e-8))
    art = tmp_path / "art"
    assert main(["offline", "--config", str(cfg), "--out", str(art)]) == 0
    diag = tmp_path / "d.csv"
    assert main(["online", "--artifacts", str(art), "--theta-min", "12", "--theta-max", "30",
                 "--count", "7", "--criterion", "mean", "--out", str(diag)]) == 0
    assert len(diag.read_text().splitlines()) == 8
    held = tmp_path / "held.txt"
    held.write_text("13.1\n25.7\n")
    rep = tmp_path / "r.csv"
    assert main(["errors", "--artifacts", str(art), "--held-out", str(held), "--out", str(rep)]) == 0
    assert rep.read_text().count("\n") == 5
    assert main(["elbow", "--artifacts", str(art), "--kmax", "4", "--alpha", "0.2"]) == 0
    assert capsys.readouterr().out.splitlines()[-4] == "k,variance,chosen"
    tf = tmp_path / "t.txt"
    tf.write_text("14\n16\n")
    assert main(["online", "--artifacts", str(art), "--theta-file", str(tf), "--out", str(diag)]) == 0
    assert len(diag.read_text().splitlines()) == 3


def test_cli_failures_are_stage_tagged(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(SMALL.format(k=50, tol=1e-8))
    assert main(["offline", "--config", str(cfg), "--out", str(tmp_path / "x")]) != 0
    assert "[clustering] InvalidKError" in capsys.readouterr().err
    assert main(["online", "--artifacts", str(tmp_path / "none"), "--theta-min", "1", "--theta-max", "2",
                 "--count", "2", "--out", str(tmp_path / "d.csv")]) != 0
    assert "[load] CorruptStoreError" in capsys.readouterr().err
    bad = tmp_path / "bad.txt"
    bad.write_text("[model]\nname = pitchfork\nwhat = 1\n")
    assert main(["offline", "--config", str(bad)]) != 0
    assert "[config] ConfigError" in capsys.readouterr().err


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "locrom.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "offline" in res.stdout

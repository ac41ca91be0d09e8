import json
import logging

import numpy as np
import pytest

from stiff_pinn.cli import (
    ExperimentRunner,
    RunManifest,
    TrajectoryPredictor,
    load_series,
    plot_csv,
    run,
    validate_output_file,
    verify_manifest,
)
from stiff_pinn.common.io_utils import read_table
from stiff_pinn.integrators import SolutionTrajectory
from stiff_pinn.pinn import MlpModel, load_checkpoint

TINY_TRAINING = [
    "--network.widths=8,8",
    "--training.n_collocation=64",
    "--training.batch_size=16",
    "--training.max_updates=5",
    "--training.log_every=2",
]


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    """No stiff_pinn.ini from the working tree leaks into a run."""
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def reference_csv(tmp_path, rober_reference):
    path = tmp_path / "reference.csv"
    rober_reference.write_csv(str(path))
    return path


def _manifest(out, command):
    path = out / f"{command}_manifest.json"
    assert path.is_file()
    assert verify_manifest(str(path)) == []
    return RunManifest.read(str(path))


def test_simulate_full_rober(out, capsys):
    code = run(["simulate", "--output-dir", str(out), "--solver.output_points=40"])
    assert code == 0
    columns, rows, trailer = read_table(str(out / "trajectory.csv"))
    assert columns == ["t", "A", "B", "C"]
    assert rows.shape == (40, 4)
    assert rows[0, 0] == 0.0 and rows[-1, 0] == pytest.approx(1e5)
    np.testing.assert_allclose(rows[:, 1:].sum(axis=1), 1.0, atol=1e-6)
    assert any(line.startswith("accepted_steps=") for line in trailer)
    assert (out / "trajectory.svg").is_file()
    manifest = _manifest(out, "simulate")
    assert manifest.command == "simulate"
    assert manifest.details["stats"]["accepted_steps"] > 0
    assert {entry["path"] for entry in manifest.files} == {"trajectory.csv", "trajectory.svg"}
    assert "Simulate" in capsys.readouterr().out


def test_simulate_reduced_rober_with_dopri5(out, rober_reference):
    code = run([
        "simulate", "--preset", "rober-stiff", "--output-dir", str(out),
        "--system", "reduced", "--method", "dopri5",
        "--solver.t_end=100", "--solver.output_grid=linear", "--solver.output_points=11",
        "--output.emit_svg=false",
    ])
    assert code == 0
    traj = SolutionTrajectory.read_csv(str(out / "trajectory.csv"))
    assert traj.times[-1] == 100.0
    assert not (out / "trajectory.svg").exists()
    late = traj.times >= 10.0
    np.testing.assert_allclose(traj.states[late], rober_reference.sample(traj.times[late]), rtol=1e-2)
    manifest = _manifest(out, "simulate")
    assert manifest.details["qss_species"] == ["B"]
    assert manifest.details["closure"] == "closed-form-rober"
    assert manifest.details["reduced_start_time"] == 0.0


def test_simulate_without_reactions_keeps_columns_constant(out, tmp_path):
    mech = tmp_path / "inert.mech"
    mech.write_text("SPECIES: A B\nINIT: 1 2\nTSPAN: 0 10\n", encoding="utf-8")
    code = run([
        "simulate", "--mechanism", str(mech), "--output-dir", str(out),
        "--solver.output_grid=linear", "--solver.output_points=6", "--output.emit_svg=false",
    ])
    assert code == 0
    _, rows, _ = read_table(str(out / "trajectory.csv"))
    np.testing.assert_allclose(rows[:, 0], np.linspace(0.0, 10.0, 6))
    np.testing.assert_array_equal(rows[:, 1:], np.tile([1.0, 2.0], (6, 1)))


LATE_PARTNER_MECH = (
    "SPECIES: A B Q C\nINIT: 1 0 0 0\nTSPAN: 0 10\n"
    "A -> B : 1\nA -> Q : 1e-3\nQ + B -> C : 1e4\n"
)


def test_simulate_reduced_starts_where_the_closure_first_holds(out, tmp_path, caplog):
    mech = tmp_path / "late.mech"
    mech.write_text(LATE_PARTNER_MECH, encoding="utf-8")
    common = [
        "--mechanism", str(mech), "--qssa.species=Q", "--qssa.closure=newton",
        "--solver.output_grid=linear", "--solver.output_points=11", "--output.emit_svg=false",
    ]
    with caplog.at_level(logging.WARNING):
        code = run(["simulate", "--output-dir", str(out / "reduced"), "--system", "reduced",
                    "--method", "dopri5", *common])
    assert code == 0
    assert "QSS closure fails until" in caplog.text
    assert run(["simulate", "--output-dir", str(out / "full"), *common]) == 0
    _, reduced, _ = read_table(str(out / "reduced" / "trajectory.csv"))
    _, full, _ = read_table(str(out / "full" / "trajectory.csv"))
    np.testing.assert_array_equal(reduced[:, 0], np.linspace(0.0, 10.0, 11))
    np.testing.assert_allclose(reduced[0, 1:], [1.0, 0.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(reduced[1:, [1, 2, 4]], full[1:, [1, 2, 4]], rtol=1e-3, atol=1e-4)
    manifest = _manifest(out / "reduced", "simulate")
    assert 0.0 < manifest.details["reduced_start_time"] < 1.0


def test_simulate_log_grid_ends_exactly_at_span_end(out, tmp_path):
    mech = tmp_path / "decay.mech"
    mech.write_text("SPECIES: X Y\nINIT: 1 0\nTSPAN: 0 5\nX -> Y : 1\n", encoding="utf-8")
    code = run([
        "simulate", "--mechanism", str(mech), "--output-dir", str(out),
        "--solver.output_points=10", "--output.emit_svg=false",
    ])
    assert code == 0
    _, rows, _ = read_table(str(out / "trajectory.csv"))
    assert rows[0, 0] == 0.0 and rows[-1, 0] == 5.0
    assert rows[-1, 1] == pytest.approx(np.exp(-5.0), rel=1e-3)


@pytest.mark.slow
def test_reduced_pollu_with_dopri5_tracks_full_bdf(tmp_path):
    common = [
        "--preset", "pollu-stiff", "--solver.output_grid=linear", "--solver.output_points=61",
        "--output.emit_svg=false",
    ]
    assert run(["simulate", "--output-dir", str(tmp_path / "full"), *common]) == 0
    assert run(["simulate", "--output-dir", str(tmp_path / "reduced"), "--system", "reduced",
                "--method", "dopri5", *common]) == 0
    columns, full, _ = read_table(str(tmp_path / "full" / "trajectory.csv"))
    _, reduced, _ = read_table(str(tmp_path / "reduced" / "trajectory.csv"))
    manifest = _manifest(tmp_path / "reduced", "simulate")
    qss = set(manifest.details["qss_species"])
    assert len(qss) == 10
    assert manifest.details["reduced_start_time"] > 0.0
    keep = [i for i, name in enumerate(columns) if i > 0 and name not in qss]
    scale = np.abs(full[:, keep]).max(axis=0)
    assert np.all(np.abs(reduced[:, keep] - full[:, keep]) <= 0.05 * scale)


def test_reduce_rober(out, capsys):
    assert run(["reduce", "--output-dir", str(out), "--output.emit_svg=false"]) == 0
    assert (out / "partition.qss").read_text(encoding="utf-8") == "QSS: B\n"
    assert "QSS: B" in (out / "reduced.mech").read_text(encoding="utf-8")
    columns, rows, _ = read_table(str(out / "species_maxima.csv"))
    assert columns == ["A", "B", "C"]
    assert rows[1].tolist() == [0.0, 1.0, 0.0]
    assert rows[2].tolist() == [1.0, 1.0, 0.0]
    columns, rows, _ = read_table(str(out / "closure_selftest.csv"))
    assert columns == ["t", "residual_norm", "converged", "B", "B_reference"]
    assert np.all(rows[:, 2] == 1.0)
    assert np.all(rows[:, 1] <= 1e-12)
    manifest = _manifest(out, "reduce")
    assert manifest.details["qss_species"] == ["B"]
    assert manifest.details["reduced_start_time"] == 0.0
    assert "QSS: B" in capsys.readouterr().out


def test_reduce_with_empty_selection_is_a_config_error(out, capsys):
    assert run(["reduce", "--output-dir", str(out), "--threshold", "1e-300"]) == 2
    assert "Empty QSS set" in capsys.readouterr().err


def test_train_tiny_stiff_model(out, capsys):
    code = run(["train", "--preset", "rober-stiff", "--output-dir", str(out), "--seed", "3", *TINY_TRAINING])
    assert code == 0
    model = load_checkpoint(str(out / "checkpoint.txt"))
    assert model.widths == (1, 8, 8, 2)
    assert model.species == ("A", "C")
    assert model.seed == 3
    columns, rows, _ = read_table(str(out / "loss_history.csv"))
    assert columns == ["step", "total_loss", "A", "C", "wall_time"]
    assert rows[:, 0].tolist() == [0.0, 2.0, 4.0]
    assert np.all(np.isfinite(rows[:, 1]))
    manifest = _manifest(out, "train")
    assert manifest.seeds == {"training.seed": 3}
    assert manifest.details["updates"] == 5
    assert "[update" in capsys.readouterr().out


def test_train_without_updates_saves_initialization(out):
    code = run([
        "train", "--preset", "rober-stiff", "--output-dir", str(out),
        "--max-updates", "0", "--seed", "11", *TINY_TRAINING[:-2],
    ])
    assert code == 0
    saved = load_checkpoint(str(out / "checkpoint.txt"))
    initial = MlpModel.initialize((1, 8, 8, 2), 11)
    np.testing.assert_array_equal(saved.flatten(), initial.flatten())
    columns, rows, _ = read_table(str(out / "loss_history.csv"))
    assert columns[0] == "step" and rows.shape == (0, 5)
    assert not (out / "loss_history.svg").exists()


def test_train_is_reproducible(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    for target in (first, second):
        args = ["train", "--preset", "rober-stiff", "--output-dir", str(target), *TINY_TRAINING]
        assert run(args) == 0
    assert (first / "checkpoint.txt").read_bytes() == (second / "checkpoint.txt").read_bytes()


def test_evaluate_oracle_checkpoint(out, reference_csv):
    code = run([
        "evaluate", "--preset", "rober-stiff", "--output-dir", str(out),
        "--checkpoint", str(reference_csv), "--reference", str(reference_csv), "--eval-points", "25",
    ])
    assert code == 0
    columns, rows, _ = read_table(str(out / "rmse.csv"))
    assert columns == ["A", "B", "C"]
    assert rows.shape == (2, 3)
    np.testing.assert_array_equal(rows, 0.0)
    columns, rows, _ = read_table(str(out / "prediction.csv"))
    assert columns == ["t", "A", "B", "C"]
    assert rows.shape == (25, 4)
    manifest = _manifest(out, "evaluate")
    assert manifest.details["rmse"] == {"A": 0.0, "B": 0.0, "C": 0.0}


def test_evaluate_species_subset_and_reconstruction(out, reference_csv, tmp_path, rober_reference):
    partial = SolutionTrajectory(
        times=rober_reference.times,
        states=rober_reference.states[:, [0, 2]],
        species_names=("A", "C"),
    )
    partial_csv = tmp_path / "partial.csv"
    partial.write_csv(str(partial_csv))
    code = run([
        "evaluate", "--preset", "rober-stiff", "--output-dir", str(out),
        "--checkpoint", str(partial_csv), "--reference", str(reference_csv),
        "--species", "B", "--reconstruct-qss", "--eval-points", "30",
        "--training.t_min=1", "--output.emit_svg=false",
    ])
    assert code == 0
    _, rows, _ = read_table(str(out / "rmse.csv"))
    assert rows.shape == (2, 1)
    assert rows[1, 0] < 1e-2


def test_evaluate_without_checkpoint(out, capsys):
    assert run(["evaluate", "--output-dir", str(out)]) == 2
    assert "Checkpoint not found" in capsys.readouterr().err


def test_sweep_single_cell(out):
    code = run([
        "sweep", "--preset", "rober-stiff", "--output-dir", str(out),
        "--grid", "8x1", "--seeds", "2",
        "--training.max_updates=3", "--training.n_collocation=32", "--training.batch_size=8",
        "--output.eval_points=20",
    ])
    assert code == 0
    columns, rows, _ = read_table(str(out / "sweep.csv"))
    assert columns == ["width", "depth", "completed", "rmse_A", "rmse_C"]
    assert rows.shape == (1, 5)
    assert rows[0, :3].tolist() == [8.0, 1.0, 2.0]
    assert np.all(np.isfinite(rows[0, 3:]))
    _, runs, _ = read_table(str(out / "sweep_runs.csv"))
    assert runs.shape == (2, 8)
    manifest = _manifest(out, "sweep")
    assert manifest.status == "ok"
    assert set(manifest.seeds) == {"8x1#0", "8x1#1"}
    assert manifest.seeds["8x1#0"] != manifest.seeds["8x1#1"]


def test_stiffness_of_linear_decay(out, tmp_path):
    mech = tmp_path / "decay.mech"
    mech.write_text("SPECIES: X Y\nINIT: 1 0\nTSPAN: 0 5\nX -> Y : 1\n", encoding="utf-8")
    code = run([
        "stiffness", "--mechanism", str(mech), "--output-dir", str(out), "--solver.output_points=10",
    ])
    assert code == 0
    columns, rows, _ = read_table(str(out / "stiffness.csv"))
    assert columns == ["t", "ratio", "max_abs", "min_abs_nonzero", "eig1_re", "eig1_im", "eig2_re", "eig2_im"]
    assert rows.shape == (10, 8)
    np.testing.assert_allclose(rows[:, 1], 1.0)
    np.testing.assert_allclose(rows[:, 4], -1.0)
    columns, rows, _ = read_table(str(out / "step_counts.csv"))
    record = dict(zip(columns, rows[0]))
    assert record["t_end"] == 5.0
    assert record["dopri5_completed"] == 1.0
    assert record["bdf_accepted"] > 0 and record["dopri5_accepted"] > 0


def test_stiffness_step_counts_on_rober(out):
    code = run([
        "stiffness", "--output-dir", str(out), "--solver.output_points=12",
        "--compare-t-end", "10", "--output.emit_svg=false",
    ])
    assert code == 0
    _, rows, _ = read_table(str(out / "stiffness.csv"))
    late = rows[rows[:, 0] >= 1.0]
    assert np.all(late[:, 1] >= 1e3)
    columns, rows, _ = read_table(str(out / "step_counts.csv"))
    record = dict(zip(columns, rows[0]))
    assert record["step_ratio"] > 5


@pytest.mark.slow
def test_dopri5_needs_far_more_steps_on_rober(out):
    code = run(["stiffness", "--output-dir", str(out), "--output.emit_svg=false"])
    assert code == 0
    columns, rows, _ = read_table(str(out / "step_counts.csv"))
    record = dict(zip(columns, rows[0]))
    assert record["t_end"] == 100.0
    assert record["step_ratio"] >= 100


def test_plot_single_csv(tmp_path):
    csv = tmp_path / "series.csv"
    csv.write_text("t,A\n0,1\n1,0.5\n2,0.25\n", encoding="utf-8")
    svg = tmp_path / "plot.svg"
    assert run(["plot", str(csv), "-o", str(svg)]) == 0
    text = svg.read_text(encoding="utf-8")
    assert text.count('id="series-') == 1
    assert 'id="series-0-A"' in text
    assert validate_output_file(str(svg)) is None


def test_plot_logx_drops_non_positive_rows(tmp_path, caplog):
    csv = tmp_path / "series.csv"
    csv.write_text("t,A,B\n0,1,0\n1,0.5,0.5\n2,0.25,0.75\n", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        abscissa, series = load_series([str(csv)], logx=True)
    assert abscissa == "t"
    assert [s.x.tolist() for s in series] == [[1.0, 2.0], [1.0, 2.0]]
    assert "dropped 1 row" in caplog.text
    assert plot_csv([str(csv)], str(tmp_path / "b.svg"), species=["B"], logx=True, logy=True) == 1


def test_plot_overlay_labels_and_errors(tmp_path):
    a = tmp_path / "ref.csv"
    b = tmp_path / "pred.csv"
    a.write_text("t,A\n1,1\n2,2\n", encoding="utf-8")
    b.write_text("t,A\n1,1.1\n2,2.1\n", encoding="utf-8")
    _, series = load_series([str(a), str(b)])
    assert [s.label for s in series] == ["A (ref)", "A (pred)"]
    assert [s.gid for s in series] == ["series-0-A", "series-1-A"]
    c = tmp_path / "other.csv"
    c.write_text("x,A\n1,1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="abscissa"):
        load_series([str(a), str(c)])
    with pytest.raises(ValueError, match="No column named Z"):
        load_series([str(a)], species=["Z"])
    assert run(["plot", str(a), str(c), "-o", str(tmp_path / "x.svg")]) == 2


def test_manifest_detects_changed_files(out):
    assert run(["simulate", "--output-dir", str(out),
                "--solver.output_points=5", "--output.emit_svg=false"]) == 0
    manifest_path = out / "simulate_manifest.json"
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    assert data["files"][0]["kind"] == "table"
    (out / "trajectory.csv").write_text("t,A,B,C\n0,1,0,0\n", encoding="utf-8")
    problems = verify_manifest(str(manifest_path))
    assert len(problems) == 1 and "Digest mismatch" in problems[0]
    (out / "trajectory.csv").unlink()
    assert "was not created" in verify_manifest(str(manifest_path))[0]


def test_validate_output_file(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    assert "empty" in validate_output_file(str(empty))
    fake = tmp_path / "fake.svg"
    fake.write_text("hello", encoding="utf-8")
    assert "not a valid SVG" in validate_output_file(str(fake))
    headless = tmp_path / "headless.csv"
    headless.write_text("# comment only\n", encoding="utf-8")
    assert "missing header" in validate_output_file(str(headless))


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--bogus"],
        ["simulate", "--training.nope=1"],
        ["train", "--network.widths=0"],
        ["plot", "missing.csv", "-o", "x.svg", "--training.seed=1"],
    ],
)
def test_bad_arguments_exit_with_config_error(argv, capsys):
    assert run(argv) == 2
    assert "Error:" in capsys.readouterr().err


def test_runner_with_tiny_config(tiny_config, rober_reference):
    runner = ExperimentRunner(tiny_config)
    assert runner.partition.qss_indices == (1,)
    assert runner.closure_mode(runner.partition) == "closed-form-rober"
    system = runner.training_system()
    assert runner.species_weights(system.non_qss_names) == (1.0, 1.0)
    times = runner.evaluation_times()
    assert times.size == 50 and times[0] == pytest.approx(1e-5)
    grid = runner.output_times(runner.t_span)
    assert grid.size == 40 and grid[0] == 0.0 and grid[1] == pytest.approx(1e-6)
    predictor = TrajectoryPredictor(rober_reference)
    assert predictor(1.0).shape == (1, 3)


@pytest.mark.parametrize("span", [(0.0, 5.0), (0.3, 7.0), (1e-6, 1e5)])
def test_log_output_grid_hits_span_ends_exactly(tiny_config, span):
    grid = ExperimentRunner(tiny_config).output_times(span)
    assert grid.size == 40
    assert grid[0] == span[0] and grid[-1] == span[1]
    assert np.all(np.diff(grid) > 0)


def test_runner_detail_lines_follow_verbose(tiny_config, caplog):
    with caplog.at_level(logging.INFO, logger="stiff_pinn.cli.runner"):
        assert ExperimentRunner(tiny_config).mechanism.n_species == 3
    assert "Mechanism:" not in caplog.text
    with caplog.at_level(logging.INFO, logger="stiff_pinn.cli.runner"):
        assert ExperimentRunner(tiny_config, verbose=True).mechanism.n_species == 3
    assert "Mechanism: 3 species, 3 reactions" in caplog.text


@pytest.fixture(scope="module")
def rober_sweep(tmp_path_factory):
    """Default-budget stiff ROBER sweep over four architectures, three seeds each."""
    root = tmp_path_factory.mktemp("sweep")
    with pytest.MonkeyPatch.context() as mp:
        mp.chdir(root)
        code = run([
            "sweep", "--preset", "rober-stiff", "--output-dir", str(root / "out"),
            "--grid", "128x3,128x2,64x5,64x4", "--seeds", "3", "--jobs", "4",
            "--output.emit_svg=false",
        ])
    assert code == 0
    columns, rows, _ = read_table(str(root / "out" / "sweep.csv"))
    return {(int(row[0]), int(row[1])): dict(zip(columns, row)) for row in rows}


@pytest.mark.slow
def test_stiff_rober_128x3_reaches_target_accuracy(rober_sweep):
    cell = rober_sweep[(128, 3)]
    assert cell["completed"] == 3.0
    assert cell["rmse_A"] <= 5e-3
    assert cell["rmse_C"] <= 1e-2


@pytest.mark.slow
def test_deeper_networks_are_more_accurate(rober_sweep):
    assert rober_sweep[(128, 3)]["rmse_A"] < rober_sweep[(128, 2)]["rmse_A"]
    assert rober_sweep[(64, 5)]["rmse_A"] < rober_sweep[(64, 4)]["rmse_A"]


@pytest.mark.slow
def test_stiff_pollu_training_beats_regular(tmp_path):
    quiet = "--output.emit_svg=false"
    assert run([
        "simulate", "--preset", "pollu-stiff", "--output-dir", str(tmp_path / "dae"),
        "--system", "reduced", "--method", "dopri5", "--solver.output_grid=steps", quiet,
    ]) == 0
    final = {}
    for preset in ("pollu-stiff", "pollu-regular"):
        target = tmp_path / preset
        assert run(["train", "--preset", preset, "--output-dir", str(target),
                    "--training.max_updates=20000", quiet]) == 0
        _, history, _ = read_table(str(target / "loss_history.csv"))
        final[preset] = history[-1, 1]
    assert final["pollu-stiff"] <= 1e-3 * final["pollu-regular"]
    assert run([
        "evaluate", "--preset", "pollu-stiff", "--output-dir", str(tmp_path / "pollu-stiff"),
        "--reference", str(tmp_path / "dae" / "trajectory.csv"), quiet,
    ]) == 0
    columns, rmse, _ = read_table(str(tmp_path / "pollu-stiff" / "rmse.csv"))
    assert len(columns) == 10
    assert np.all(rmse[1] <= 5e-2)

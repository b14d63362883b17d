"""Config parsing, run orchestration, artifacts, and plot-data emission."""

import numpy as np
import pytest

from nlstails.cli import (
    ConfigError,
    emit_plotdata,
    load_config,
    main,
    run_experiment,
)
from nlstails.series import PositiveLeadingExponent


def write_cfg(tmp_path, body, name="run.cfg"):
    path = tmp_path / name
    path.write_text(body)
    return path


SMALL_MESH = """
[mesh]
h = 0.25
k = 0.01
half_width = 4.0
horizon = 0.1
"""

PLANE_WAVE_SMALL = """
[experiment]
preset = plane_wave
snapshot_stride = 10

[mesh]
h = 0.1
k = 2e-3
half_width = 12.0
horizon = 0.1

[tolerances]
correction_sup = 1e-6
solution_sup = 1e-3
"""


# --------------------------------------------------------------- parsing


def test_defaults_fill_unset_keys(tmp_path):
    cfg = load_config(write_cfg(tmp_path, SMALL_MESH))
    assert cfg.preset == "custom"
    assert cfg.mu == 1.0
    assert cfg.h == 0.25
    assert cfg.truncation == 5
    assert cfg.window_x == 256
    assert cfg.exponents is None
    assert cfg.ratio_low == 1.7
    assert np.isinf(cfg.correction_sup)


def test_preset_pins_mesh_and_tolerances(tmp_path):
    cfg = load_config(write_cfg(tmp_path, "[experiment]\npreset = plane_wave\n"))
    assert cfg.h == 0.05 and cfg.k == 1e-4
    assert cfg.horizon == 1.0
    assert cfg.exponents == (0.0,)
    assert cfg.right_coefficients == (1 + 0j,)
    assert cfg.radii == (1.0, 2.0, 4.0)
    assert cfg.correction_sup == 1e-8
    assert cfg.solution_sup == 5e-4


def test_file_keys_override_preset(tmp_path):
    cfg = load_config(write_cfg(tmp_path, PLANE_WAVE_SMALL))
    assert cfg.h == 0.1 and cfg.half_width == 12.0
    assert cfg.solution_sup == 1e-3
    assert cfg.exponents == (0.0,)  # untouched preset value survives


def test_comments_and_blank_lines_ignored(tmp_path):
    body = "# leading comment\n\n[mesh]\nh = 0.25  # trailing\nk = 0.01\n" \
           "half_width = 4.0\nhorizon = 0.1\n"
    assert load_config(write_cfg(tmp_path, body)).h == 0.25


@pytest.mark.parametrize("body, fragment", [
    ("[mesh]\nstepsize = 1\n", "unknown key 'stepsize'"),
    ("[mesh]\nstepsize = 1\n", "line 2"),
    ("[turbo]\nh = 1\n", "unknown section [turbo]"),
    ("[mesh]\nh = 0.1\nh = 0.2\n", "duplicate key 'h'"),
    ("[mesh]\nh 0.1\n", "expected 'key = value'"),
    ("h = 0.1\n", "outside a section"),
    ("[mesh\nh = 0.1\n", "malformed section header"),
    ("[mesh]\nh = fast\n", "bad value for 'h'"),
    ("[experiment]\npreset = warp\n", "must be one of"),
])
def test_parse_errors_carry_diagnostics(tmp_path, body, fragment):
    try:
        load_config(write_cfg(tmp_path, body))
    except ConfigError as err:
        assert fragment in str(err)
    else:
        pytest.fail("config accepted")


@pytest.mark.parametrize("body, fragment", [
    (SMALL_MESH + "[experiment]\nmu = 2.0\n", "mu"),
    (SMALL_MESH + "[interp]\nwindow_x = 16\n", "window_x"),
    (SMALL_MESH + "[experiment]\nsnapshot_stride = 0\n", "snapshot_stride"),
    (SMALL_MESH + "[converge]\nh_values = 0.1, 0.1\n", "together"),
    (SMALL_MESH + "[converge]\nh_values = 0.1\nk_values = 1e-3\n", "2"),
    (SMALL_MESH + "[series]\nexponents = -1\n", "coefficients"),
    (SMALL_MESH
     + "[series]\nexponents = -1\nright_coefficients = (1+0j), (2+0j)\n",
     "one value per exponent"),
    ("[experiment]\npreset = soliton\nmu = -1.0\n", "mu = 1"),
])
def test_validation_errors_name_the_field(tmp_path, body, fragment):
    try:
        load_config(write_cfg(tmp_path, body))
    except ConfigError as err:
        assert fragment in str(err)
    else:
        pytest.fail("config accepted")


def test_positive_exponent_rejected_at_load(tmp_path):
    body = SMALL_MESH + "[series]\nexponents = 0.25\n" \
                        "right_coefficients = (1+0j)\n"
    with pytest.raises(PositiveLeadingExponent,
                       match="leading amplitude to vanish"):
        load_config(write_cfg(tmp_path, body))


def test_positive_exponent_exits_2_without_artifacts(tmp_path, capsys):
    out_dir = tmp_path / "never_created"
    body = SMALL_MESH + f"""
[experiment]
output_dir = {out_dir}

[series]
exponents = 0.25
right_coefficients = (1+0j)
"""
    code = main([str(write_cfg(tmp_path, body))])
    assert code == 2
    assert not out_dir.exists()
    assert "leading exponent" in capsys.readouterr().err


# ------------------------------------------------------------ solve runs


def run_cfg(tmp_path, body, mode="solve", name="run.cfg"):
    path = write_cfg(tmp_path, body, name)
    cfg = load_config(path)
    out_dir = tmp_path / f"out_{name}_{mode}"
    code = run_experiment(cfg, mode, out_dir)
    return cfg, out_dir, code


def test_zero_data_solve_passes_and_writes_artifacts(tmp_path):
    cfg, out_dir, code = run_cfg(tmp_path, SMALL_MESH)
    assert code == 0
    for fname in ("manifest.txt", "norms.csv", "ledger.csv",
                  "snapshots.csv", "residuals.csv", "report.csv"):
        assert (out_dir / fname).exists(), fname
    lines = (out_dir / "norms.csv").read_text().splitlines()
    assert lines[0].startswith("t,norm_sh,schwartz_0_0")
    values = [float(tok) for tok in lines[1].split(",")]
    assert values[1:] == [0.0] * (len(values) - 1)
    manifest = (out_dir / "manifest.txt").read_text()
    assert "termination = completed" in manifest
    assert "assertions_passed = true" in manifest


def test_every_csv_declares_a_header(tmp_path):
    _, out_dir, _ = run_cfg(tmp_path, SMALL_MESH)
    for path in out_dir.glob("*.csv"):
        header = path.read_text().splitlines()[0]
        assert all(tok.strip().replace("_", "").isalnum()
                   for tok in header.split(",")), path.name


def test_manifest_round_trips_to_identical_config(tmp_path):
    cfg, out_dir, code = run_cfg(tmp_path, PLANE_WAVE_SMALL)
    assert code == 0
    assert load_config(out_dir / "manifest.txt") == cfg


def test_reruns_are_byte_identical(tmp_path):
    cfg = load_config(write_cfg(tmp_path, PLANE_WAVE_SMALL))
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert run_experiment(cfg, "solve", d) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert names == sorted(p.name for p in dirs[1].iterdir())
    for name in names:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


def test_plane_wave_solve_correction_stays_tiny(tmp_path):
    cfg, out_dir, code = run_cfg(tmp_path, PLANE_WAVE_SMALL)
    assert code == 0
    manifest = (out_dir / "manifest.txt").read_text()
    max_norm = float(manifest.split("max_norm_sh = ")[1].splitlines()[0])
    assert max_norm <= 1e-6
    sup_err = float(manifest.split("solution_sup_error = ")[1].splitlines()[0])
    assert sup_err <= 1e-3


def test_failing_assertion_exits_1_and_keeps_artifacts(tmp_path, capsys):
    body = PLANE_WAVE_SMALL + "residual_max = 1e-30\n"
    cfg, out_dir, code = run_cfg(tmp_path, body)
    assert code == 1
    assert "residual_max" in capsys.readouterr().err
    manifest = (out_dir / "manifest.txt").read_text()
    assert "assertions_passed = false" in manifest
    assert "failing_stage = assertions:residual_max" in manifest
    assert (out_dir / "snapshots.csv").exists()  # partial output retained
    report = (out_dir / "report.csv").read_text()
    assert "residual_max" in report and "false" in report


def test_failing_stage_is_named(tmp_path, capsys):
    # converge without a ladder fails in its config stage, not with a traceback
    cfg, out_dir, code = run_cfg(tmp_path, SMALL_MESH, mode="converge")
    assert code == 1
    assert "failed at stage 'config'" in capsys.readouterr().err
    manifest = (out_dir / "manifest.txt").read_text()
    assert "termination = failed:config" in manifest


# ------------------------------------------------------- remaining modes


def test_converge_mode_records_ratios(tmp_path):
    body = """
[experiment]
preset = soliton

[mesh]
half_width = 12.0
horizon = 0.04

[converge]
h_values = 0.025, 0.025
k_values = 4e-3, 2e-3
"""
    cfg, out_dir, code = run_cfg(tmp_path, body, mode="converge")
    assert code == 0
    lines = (out_dir / "convergence.csv").read_text().splitlines()
    assert lines[0] == "h,k,error,ratio"
    ratio = float(lines[2].split(",")[3])
    assert 1.7 <= ratio <= 2.3


def test_uniqueness_mode_bitwise_and_envelope(tmp_path):
    body = """
[experiment]
preset = plane_wave

[mesh]
h = 0.1
k = 1e-3
half_width = 12.0
horizon = 0.05
"""
    cfg, out_dir, code = run_cfg(tmp_path, body, mode="uniqueness")
    assert code == 0
    report = (out_dir / "report.csv").read_text()
    assert "bitwise_reproducible" in report
    assert "gronwall_envelope" in report
    lines = (out_dir / "uniqueness.csv").read_text().splitlines()
    assert lines[0] == "t,q_norm,envelope"
    first = [float(tok) for tok in lines[1].split(",")]
    assert first[1] > 0 and first[1] <= first[2]


def test_independence_mode_within_budget(tmp_path):
    body = """
[experiment]
preset = plane_wave

[mesh]
h = 0.1
k = 2e-3
half_width = 12.0
horizon = 0.05

[profile]
cutoff_constant = true
"""
    cfg, out_dir, code = run_cfg(tmp_path, body, mode="independence")
    assert code == 0
    lines = (out_dir / "independence.csv").read_text().splitlines()
    header, row = lines[0].split(","), [float(t) for t in lines[1].split(",")]
    sup = row[header.index("sup_difference")]
    budget = row[header.index("budget")]
    assert 0 < sup <= budget


def test_independence_mode_requires_series(tmp_path, capsys):
    cfg, out_dir, code = run_cfg(tmp_path, SMALL_MESH, mode="independence")
    assert code == 1
    assert "exponents" in capsys.readouterr().err


# ------------------------------------------------------------- plot data


def test_emit_plotdata_two_float_columns(tmp_path):
    cfg, out_dir, code = run_cfg(tmp_path, PLANE_WAVE_SMALL)
    assert code == 0
    for selector in ("norm_sh", "coercivity", "snapshot:0.05"):
        path = emit_plotdata(out_dir, selector)
        rows = [line.split() for line in path.read_text().splitlines()]
        assert rows, selector
        for row in rows:
            assert len(row) == 2
            float(row[0]), float(row[1])


def test_emit_plotdata_snapshot_name_is_deterministic(tmp_path):
    cfg, out_dir, code = run_cfg(tmp_path, PLANE_WAVE_SMALL)
    first = emit_plotdata(out_dir, "snapshot:0.05")
    second = emit_plotdata(out_dir, "snapshot:0.05")
    assert first == second
    assert first.name.startswith("plot_snapshot_")


def test_emit_plotdata_unknown_selector_lists_available(tmp_path):
    cfg, out_dir, code = run_cfg(tmp_path, SMALL_MESH)
    with pytest.raises(ValueError, match="norm_sh"):
        emit_plotdata(out_dir, "bogus")
    with pytest.raises(ValueError, match="available"):
        emit_plotdata(out_dir, "q_norm")  # solve run has no uniqueness.csv


# ------------------------------------------------------------------ main


def test_main_solve_and_output_dir_override(tmp_path):
    cfg_path = write_cfg(tmp_path, SMALL_MESH)
    out_dir = tmp_path / "cli_out"
    code = main([str(cfg_path), "--output-dir", str(out_dir)])
    assert code == 0
    assert (out_dir / "manifest.txt").exists()


def test_main_bad_config_exits_2(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, "[mesh]\nh = fast\n")
    assert main([str(cfg_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_main_missing_file_exits_2(tmp_path, capsys):
    assert main([str(tmp_path / "nope.cfg")]) == 2
    assert "config error" in capsys.readouterr().err


def test_main_plot_flag_writes_series(tmp_path):
    cfg_path = write_cfg(tmp_path, SMALL_MESH)
    out_dir = tmp_path / "plot_out"
    code = main([str(cfg_path), "--output-dir", str(out_dir),
                 "--plot", "l2h"])
    assert code == 0
    assert (out_dir / "plot_l2h.dat").exists()

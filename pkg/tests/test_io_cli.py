"""Flat-file round trips, heatmap bytes, run reports, scenario documents,
and the CLI's exit-code contract with its on-disk artifacts.
"""

import json
import math
import os

import numpy as np
import pytest

from matsol import export, report
from matsol.cli import (
    EXIT_INVALID,
    EXIT_IO,
    EXIT_OK,
    EXIT_THRESHOLD,
    main,
)
from matsol.evaluate import MatrixField, evaluate_grid
from matsol.scenario_io import (
    PRESET_NAMES,
    ScenarioSchemaError,
    ScenarioSyntaxError,
    parse_scenario,
    preset,
    scenario_to_document,
)
from matsol.selftest import singular_prone_scenario
from matsol.spectral import (
    GridSpec,
    ScenarioValidationError,
    build_operator_data,
)


@pytest.fixture(scope="module")
def masked_field():
    sc = singular_prone_scenario()
    return evaluate_grid(build_operator_data(sc), sc.grid)


def _tiny_field():
    values = np.array(
        [[[[0.0 + 0j]], [[-0.0 - 0.5j]]],
         [[[1.0 + 0j]], [[np.nan + 1j * np.nan]]]]
    )
    mask = np.array([[False, False], [False, True]])
    return MatrixField(
        grid=GridSpec(0.0, 1.0, 2, 0.0, 1.0, 2),
        values=values, mask=mask,
        det_min=np.where(mask, np.nan, 1.0),
        reason=np.where(mask, 3, 0).astype(np.uint8),
        path="fast",
    )


# ---------------------------------------------------------------- CSV


def test_csv_header_and_order(tmp_path):
    p = tmp_path / "f.csv"
    export.write_field_csv(_tiny_field(), str(p))
    lines = p.read_text().splitlines()
    assert lines[0] == "x,t,i,j,re,im"
    assert lines[1] == "0,0,1,1,0,0"
    assert lines[2] == "1,0,1,1,-0,-0.5"  # signed zero survives
    assert lines[4] == "1,1,1,1,nan,nan"
    assert len(lines) == 5


def test_csv_round_trip_bit_exact(tmp_path, masked_field):
    p = tmp_path / "field.csv"
    export.write_field_csv(masked_field, str(p))
    back = export.read_field_csv(str(p))
    assert back.values.tobytes() == masked_field.values.tobytes()
    assert np.array_equal(back.mask, masked_field.mask)
    assert back.grid == masked_field.grid
    # rewriting reproduces the file byte for byte
    p2 = tmp_path / "field2.csv"
    export.write_field_csv(back, str(p2))
    assert p.read_bytes() == p2.read_bytes()


def test_csv_reader_rejects_malformed(tmp_path):
    bad_header = tmp_path / "a.csv"
    bad_header.write_text("x,t,re,im\n")
    with pytest.raises(export.FieldCsvError):
        export.read_field_csv(str(bad_header))
    short_row = tmp_path / "b.csv"
    short_row.write_text("x,t,i,j,re,im\n0,0,1,1,0\n")
    with pytest.raises(export.FieldCsvError):
        export.read_field_csv(str(short_row))
    no_rows = tmp_path / "c.csv"
    no_rows.write_text("x,t,i,j,re,im\n")
    with pytest.raises(export.FieldCsvError):
        export.read_field_csv(str(no_rows))
    not_numbers = tmp_path / "d.csv"
    not_numbers.write_text("x,t,i,j,re,im\n0,0,1,1,zero,0\n")
    with pytest.raises(export.FieldCsvError):
        export.read_field_csv(str(not_numbers))


# ---------------------------------------------------------------- PPM


def test_ppm_layout_and_mask_color(masked_field):
    scale = export.entry_scales(masked_field)[(0, 0)]
    raw = export.ppm_bytes(masked_field, 0, 0, scale)
    nt, nx = masked_field.mask.shape
    header = b"P6\n%d %d\n255\n" % (nx, nt)
    assert raw.startswith(header)
    pix = np.frombuffer(raw[len(header):], dtype=np.uint8)
    pix = pix.reshape(nt, nx, 3)
    red = (pix[:, :, 0] == 255) & (pix[:, :, 1] == 0) & (pix[:, :, 2] == 0)
    assert int(red.sum()) == masked_field.masked_count
    # top pixel row is the latest t slice
    assert np.array_equal(red[0], masked_field.mask[-1])
    assert export.ppm_bytes(masked_field, 0, 0, scale) == raw


def test_ppm_gray_ramp_orientation():
    f = _tiny_field()
    raw = export.ppm_bytes(f, 0, 0, (0.0, 1.0))
    pix = np.frombuffer(raw[len(b"P6\n2 2\n255\n"):], dtype=np.uint8)
    pix = pix.reshape(2, 2, 3)
    # t = 1 row on top: |V| = 1 renders white, the masked cell red
    assert tuple(pix[0, 0]) == (255, 255, 255)
    assert tuple(pix[0, 1]) == (255, 0, 0)
    assert tuple(pix[1, 0]) == (0, 0, 0)


def test_entry_scales_shared(preset_field):
    f = preset_field("scalar2")
    per = export.entry_scales(f)
    shared = export.entry_scales(f, shared=True)
    assert set(per) == {(0, 0)}
    assert shared[(0, 0)] == per[(0, 0)]


def test_write_field_ppms_and_script(tmp_path, masked_field):
    meta = export.write_field_ppms(masked_field, str(tmp_path), "run")
    assert sorted(meta) == ["run_V11.ppm"]
    assert (tmp_path / "run_V11.ppm").exists()
    assert meta["run_V11.ppm"]["entry"] == [1, 1]
    name = export.write_plot_script("run.csv", 2, str(tmp_path), "run")
    assert name == "run_plots.gnuplot"
    text = (tmp_path / name).read_text()
    assert "set datafile separator ','" in text
    assert "run.csv" in text
    assert "int($3)==2 && int($4)==1" in text  # per-entry ternary filter


# ---------------------------------------------------------------- report


def test_sanitize_json_safe():
    doc = {
        "z": 1.5 + 2.5j,
        "bad": float("nan"),
        "arr": np.arange(3),
        "np_scalar": np.float64(0.25),
        "nested": [{"ok": True, "none": None}],
    }
    clean = report.sanitize(doc)
    assert clean["z"] == {"re": 1.5, "im": 2.5}
    assert clean["bad"] == "nan"
    assert clean["arr"] == [0, 1, 2]
    assert clean["np_scalar"] == 0.25
    text = report.render_json(doc)
    assert json.loads(text)["nested"][0]["ok"] is True


def test_text_and_json_agree_on_floats(tmp_path):
    doc = {"sup": 3.6312986e-08, "count": 12, "label": "demo",
           "values": [0.1, 0.25]}
    jname, tname = report.write_report(doc, str(tmp_path), stem="run",
                                       title="demo run")
    text = (tmp_path / tname).read_text()
    parsed = json.loads((tmp_path / jname).read_text())
    assert parsed["sup"] == doc["sup"]
    for v in (doc["sup"], *doc["values"]):
        assert repr(v) in text
    assert text.startswith("demo run\n========")


# ---------------------------------------------------------------- scenarios


def test_parse_error_layers():
    with pytest.raises(ScenarioSyntaxError) as syn:
        parse_scenario("{not json")
    assert syn.value.line == 1
    doc = {"d": 1, "solitons": [{"k": [1, 0], "B": [[1]]}],
           "grid": {"x": [-1, 1, 3], "t": [0, 1, 2]}}
    missing = {k: v for k, v in doc.items() if k != "grid"}
    with pytest.raises(ScenarioSchemaError) as sch:
        parse_scenario(json.dumps(missing))
    assert sch.value.path == "grid"
    bad_axis = json.loads(json.dumps(doc))
    bad_axis["grid"]["x"] = [-1, 1, 3.5]
    with pytest.raises(ScenarioSchemaError) as sch:
        parse_scenario(json.dumps(bad_axis))
    assert sch.value.path == "grid.x"
    extra = json.loads(json.dumps(doc))
    extra["speed"] = 1
    with pytest.raises(ScenarioSchemaError) as sch:
        parse_scenario(json.dumps(extra))
    assert sch.value.path == "speed"
    bad_path = json.loads(json.dumps(doc))
    bad_path["options"] = {"path": "turbo"}
    with pytest.raises(ScenarioSchemaError) as sch:
        parse_scenario(json.dumps(bad_path))
    assert sch.value.path == "options.path"
    invalid = json.loads(json.dumps(doc))
    invalid["solitons"][0]["k"] = [-1, 0]
    with pytest.raises(ScenarioValidationError):
        parse_scenario(json.dumps(invalid))


def test_document_round_trip_presets():
    for name in PRESET_NAMES:
        sc = preset(name)
        back = parse_scenario(scenario_to_document(sc))
        assert back.d == sc.d
        assert back.label == sc.label
        assert back.imaginary_weights == sc.imaginary_weights
        assert back.grid == sc.grid
        assert len(back.entries) == len(sc.entries)
        for a, b in zip(back.entries, sc.entries):
            assert complex(a.k) == complex(b.k)
            assert np.array_equal(np.asarray(a.B, dtype=complex),
                                  np.asarray(b.B, dtype=complex))


def test_shipped_scenario_files_match_presets():
    root = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")
    for name in PRESET_NAMES:
        with open(os.path.join(root, f"{name}.json")) as fh:
            sc = parse_scenario(fh.read())
        ref = preset(name)
        assert sc.d == ref.d and sc.grid == ref.grid
        assert sc.label == name
        for a, b in zip(sc.entries, ref.entries):
            assert complex(a.k) == complex(b.k)
            assert np.array_equal(np.asarray(a.B, dtype=complex),
                                  np.asarray(b.B, dtype=complex))
    with open(os.path.join(root, "fig2.json")) as fh:
        fig2 = parse_scenario(fh.read())
    assert fig2.d == 3 and len(fig2.entries) == 2
    b1, b2 = (np.asarray(e.B) for e in fig2.entries)
    assert np.array_equal(b1, b2)
    assert b1[0, 0] == 1.0 and b1[2, 2] == 1.0 and b1[1, 1] == 0.0


def test_unknown_preset_name():
    with pytest.raises(ValueError):
        preset("fig9")


# ---------------------------------------------------------------- CLI


def test_cli_evaluate_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["evaluate", "--preset", "scalar1",
                 "--out", str(out)]) == EXIT_OK
    for name in ("scalar1.csv", "scalar1.png", "report.json",
                 "report.txt"):
        assert (out / name).exists(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["subcommand"] == "evaluate"
    assert rep["field"]["masked"] == 0
    assert rep["scenario"]["d"] == 1


def test_cli_render_adds_heatmaps(tmp_path):
    out = tmp_path / "run"
    assert main(["render", "--preset", "scalar2",
                 "--out", str(out)]) == EXIT_OK
    assert (out / "scalar2_V11.ppm").exists()
    assert (out / "scalar2_plots.gnuplot").exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["outputs"]["ppm"] == ["scalar2_V11.ppm"]
    assert "ppm_scales" in rep["outputs"]


def test_cli_render_is_reproducible(tmp_path):
    sc = singular_prone_scenario()
    doc = scenario_to_document(sc)
    spath = tmp_path / "prone.json"
    spath.write_text(doc)
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["render", "--scenario", str(spath),
                     "--out", str(out)]) == EXIT_OK
        outs.append(out)
    stem = sc.label or "field"
    for name in (f"{stem}.csv", f"{stem}_V11.ppm"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_cli_verify_scalar_chain(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["verify", "--preset", "scalar1",
                 "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "[PASS] mkdv sup <= 1e-5" in stdout
    assert "[PASS] kdv sup <= 1e-4" in stdout
    assert "[PASS] pkdv sup <= 1e-4" in stdout
    rep = json.loads((out / "report.json").read_text())
    assert all(g["ok"] for g in rep["gates"])
    assert rep["residuals"]["mkdv"]["sup"] <= 1e-5
    assert rep["miura_probe"]["selected"] == 1
    assert (out / "scalar1_convergence.png").exists()


def test_cli_verify_matrix_skips_chain(tmp_path):
    out = tmp_path / "run"
    assert main(["verify", "--preset", "fig4",
                 "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert "skipped" in rep["residuals"]["kdv"]
    assert rep["miura_probe"] is None


def test_cli_verify_coarse_stencil_fails_gate(tmp_path):
    # h large enough that truncation blows the mkdv gate, small enough
    # that the decay search for the potential chain still succeeds
    out = tmp_path / "run"
    code = main(["verify", "--preset", "scalar1", "--h", "0.15",
                 "--out", str(out)])
    assert code == EXIT_THRESHOLD
    rep = json.loads((out / "report.json").read_text())
    gates = {g["name"]: g["ok"] for g in rep["gates"]}
    assert not gates["mkdv sup <= 1e-5"]
    assert gates["kdv sup <= 1e-4"]


def test_cli_diagnose_narrow_window_reports_unavailable(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["diagnose", "--preset", "scalar1",
                 "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "unavailable" in stdout
    rep = json.loads((out / "report.json").read_text())
    assert "unavailable" in rep["functionals"]["trace_sq"]
    assert len(rep["peaks"]["pre_solitons"]) == 1
    assert (out / "scalar1_diagnostics.png").exists()


def test_cli_diagnose_wide_window_full_tables(tmp_path, capsys):
    doc = json.loads(scenario_to_document(preset("scalar1")))
    doc["grid"]["x"] = [-30, 30, 1201]
    doc["options"]["label"] = "wide"
    spath = tmp_path / "wide.json"
    spath.write_text(json.dumps(doc))
    out = tmp_path / "run"
    assert main(["diagnose", "--scenario", str(spath),
                 "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["functionals"]["trace_sq"]["drift"] <= 1e-6
    first = rep["functionals"]["trace"]["first"]
    if isinstance(first, dict):  # complex values serialize as re/im pairs
        first = complex(first["re"], first["im"])
    assert abs(first - math.pi) <= 1e-6
    assert rep["energy_partition"]["sum_consistency"] <= 1e-10
    assert (out / "wide_functionals.csv").exists()


def test_cli_selftest_passes(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["selftest", "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "[PASS]" in stdout and "[FAIL]" not in stdout
    rep = json.loads((out / "report.json").read_text())
    assert rep["failed"] == 0


def test_cli_invalid_inputs_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    cases = [
        ["evaluate", "--preset", "fig9", "--out", str(tmp_path / "o1")],
        ["evaluate", "--scenario", str(bad), "--out", str(tmp_path / "o2")],
        ["evaluate", "--out", str(tmp_path / "o3")],  # no source given
        ["evaluate", "--preset", "scalar1", "--scenario", str(bad)],
        ["verify", "--preset", "scalar1", "--order", "3"],
        ["evaluate", "--preset", "scalar1", "--path", "turbo"],
        ["frobnicate"],
        [],
    ]
    for argv in cases:
        assert main(argv) == EXIT_INVALID, argv


def test_cli_io_failures_exit_3(tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["evaluate", "--scenario", str(missing),
                 "--out", str(tmp_path / "o")]) == EXIT_IO
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["evaluate", "--preset", "scalar1",
                 "--out", str(blocker / "sub")]) == EXIT_IO

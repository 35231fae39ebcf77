import csv
import io
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from conftest import CLUTTER
from rcskit.analysis import grid_from_csv
from rcskit.cli import EXIT_IO, EXIT_NETWORK, EXIT_OK, EXIT_PIPELINE, EXIT_VALIDATION, run
from rcskit.ingest import BandSpec, load_campaign, load_manifest
from rcskit.sweep import FrequencySweep
from rcskit.synth import generate_campaign, oracle_template
from rcskit.vna import FaultSpec, MockInstrument

ROOT = Path(__file__).resolve().parents[1]
SCENE = ROOT / "scripts" / "scenes" / "oracle_two_band.json"
GOLDEN = Path(__file__).parent / "data" / "golden"
BANDS = (BandSpec("FR3", 10e9, 14e9, 2001, 16.0), BandSpec("FR2", 25.75e9, 30.25e9, 2001, 25.0))


def make_campaign(root: Path, **kw) -> Path:
    args = dict(bands=BANDS, clutter=CLUTTER, phi_deg=(0, 90, 180), noise_rms=1e-6, seed=1)
    return generate_campaign(oracle_template(**(args | kw)), root)


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    return make_campaign(tmp_path_factory.mktemp("small"))


@pytest.fixture
def small_copy(small, tmp_path):
    dst = tmp_path / "camp"
    shutil.copytree(small.parent, dst)
    return dst / "manifest.json"


def read_csv(path: Path) -> list[list[str]]:
    return list(csv.reader(io.StringIO(path.read_text())))


# --- extract --------------------------------------------------------------------------


def test_extract_writes_records_and_grids(small, tmp_path, capsys):
    assert run(["extract", "--manifest", str(small), "--out", str(tmp_path), "--format", "json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary == [{"band": "FR3", "extracted": 3, "failed": 0}, {"band": "FR2", "extracted": 3, "failed": 0}]
    doc = json.loads((tmp_path / "extract_FR3.json").read_text())
    assert len(doc["records"]) == 3 and doc["errors"] == []
    assert all(abs(r["rcs_dbsm"] - 10 * np.log10(0.5)) <= 0.1 for r in doc["records"])
    assert (tmp_path / "grid_FR2.csv").exists() and (tmp_path / "heatmap_FR2.svg").exists()


def test_bundled_campaign_matches_golden_grid(tmp_path):
    camp = tmp_path / "camp"
    assert run(["synth", "--scene", str(SCENE), "--out", str(camp)]) == EXIT_OK
    assert run(["extract", "--manifest", str(camp / "manifest.json"), "--out", str(tmp_path / "out"), "--no-figures", "--jobs", "4"]) == EXIT_OK
    for band in ("FR3", "FR2"):
        got = grid_from_csv((tmp_path / "out" / f"grid_{band}.csv").read_text())
        want = grid_from_csv((GOLDEN / f"grid_{band}.csv").read_text())
        assert got.theta_values == want.theta_values and got.phi_values == want.phi_values
        assert np.max(np.abs(got.rcs_dbsm - want.rcs_dbsm)) <= 1e-6


def test_gate_span_override_is_echoed(small, tmp_path):
    assert run(["extract", "--manifest", str(small), "--out", str(tmp_path), "--band", "FR3", "--gate-span", "5e-9"]) == EXIT_OK
    doc = json.loads((tmp_path / "extract_FR3.json").read_text())
    assert doc["gate_params"]["span_s"] == 5e-9 and doc["gate_params"]["span_override"] is True
    assert all(r["gate"]["span_s"] == 5e-9 for r in doc["records"])


def test_missing_sphere_file_names_band_and_slot(small_copy, tmp_path, capsys):
    (small_copy.parent / "FR2" / "t0_p90_sphere.s1p").unlink()
    code = run(["extract", "--manifest", str(small_copy), "--out", str(tmp_path / "o")])
    assert code != EXIT_OK
    err = capsys.readouterr().err
    assert "(FR2, sphere" in err and "t0_p90_sphere.s1p" in err
    assert not (tmp_path / "o").exists()  # validation happens before any output


def test_unknown_band_is_a_validation_error(small, tmp_path):
    assert run(["extract", "--manifest", str(small), "--out", str(tmp_path), "--band", "FR9"]) == EXIT_VALIDATION


def test_bad_jobs_is_a_validation_error(small, tmp_path):
    assert run(["extract", "--manifest", str(small), "--out", str(tmp_path), "--jobs", "0"]) == EXIT_VALIDATION


def test_gate_failure_is_a_pipeline_error(tmp_path, capsys):
    manifest = make_campaign(tmp_path / "empty", bands=BANDS[:1], body_scatterers=(), phi_deg=(0, 10), noise_rms=0.0)
    assert run(["extract", "--manifest", str(manifest), "--out", str(tmp_path / "o")]) == EXIT_PIPELINE
    err = capsys.readouterr().err
    assert "phi=0" in err and "phi=10" in err  # every failing angle is listed
    assert json.loads((tmp_path / "o" / "extract_FR3.json").read_text())["records"] == []


def test_unwritable_output_is_an_io_error(small, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(["extract", "--manifest", str(small), "--out", str(blocker)]) == EXIT_IO


def test_missing_manifest_is_an_io_error(tmp_path):
    assert run(["extract", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_IO


def test_inputs_are_not_modified(small, tmp_path):
    before = {p: p.read_bytes() for p in small.parent.rglob("*") if p.is_file()}
    run(["extract", "--manifest", str(small), "--out", str(tmp_path)])
    assert {p: p.read_bytes() for p in small.parent.rglob("*") if p.is_file()} == before


# --- scale ----------------------------------------------------------------------------


def test_identical_bands_give_zero_delta(small, tmp_path, capsys):
    assert run(["scale", "--manifest", str(small), "--out", str(tmp_path), "--band1", "FR3", "--band2", "FR3", "--format", "json"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    overall = rows[-1]
    assert overall["theta"] == "Overall" and overall["mu_db"] == 0.0 and overall["sigma_db"] == 0.0


def test_six_elevations_give_seven_rows(tmp_path, capsys):
    manifest = make_campaign(tmp_path / "agv", theta_deg=(0, 10, 20, 30, 40, 50), phi_deg=(0, 90))
    assert run(["scale", "--manifest", str(manifest), "--out", str(tmp_path / "o"), "--format", "json", "--no-figures"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    assert [r["theta"] for r in rows] == ["0", "10", "20", "30", "40", "50", "Overall"]
    doc = json.loads((tmp_path / "o" / "gaussian_fits_FR3_FR2.json").read_text())
    assert doc["rows"] == rows and doc["band1"] == "FR3"
    assert len(read_csv(tmp_path / "o" / "delta_rcs_FR3_FR2.csv")) == 1 + 12


def test_scale_table_text(small, tmp_path, capsys):
    assert run(["scale", "--manifest", str(small), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Overall" in out
    assert (tmp_path / "delta_hist_FR3_FR2.svg").read_text().startswith("<svg")


# --- range-image ----------------------------------------------------------------------


def test_interpolation_leaves_measured_columns_alone(small, tmp_path):
    outs = {}
    for interp in ("nearest", "linear"):
        out = tmp_path / interp
        args = ["range-image", "--manifest", str(small), "--out", str(out), "--band", "FR3", "--theta", "0", "--interp", interp, "--phi-step", "5"]
        assert run(args) == EXIT_OK
        outs[interp] = np.array(read_csv(out / "range_azimuth_FR3_t0.csv"))
    near, lin = outs["nearest"], outs["linear"]
    header = [float(p) for p in near[0, 1:]]
    cols = [1 + header.index(p) for p in (0.0, 90.0, 180.0)]
    assert np.array_equal(near[:, cols], lin[:, cols])
    assert not np.array_equal(near, lin)  # the in-between columns do differ
    for interp in outs:
        doc = json.loads((tmp_path / interp / "top_contributors_FR3_t0.json").read_text())
        assert interp in doc["interpolation"]


def test_unknown_theta_lists_elevations(small, tmp_path, capsys):
    assert run(["range-image", "--manifest", str(small), "--out", str(tmp_path), "--band", "FR3", "--theta", "20"]) == EXIT_VALIDATION
    assert "available elevations: 0" in capsys.readouterr().err


def test_top_contributors_on_centre_scatterer(small, tmp_path):
    assert run(["range-image", "--manifest", str(small), "--out", str(tmp_path), "--band", "FR3", "--theta", "0", "--top-k", "1"]) == EXIT_OK
    doc = json.loads((tmp_path / "top_contributors_FR3_t0.json").read_text())
    (p,) = doc["points"]
    assert abs(p["range_m"]) <= 0.0375
    for name in ("range_azimuth_FR3_t0.svg", "range_polar_FR3_t0.svg"):
        assert (tmp_path / name).read_text().startswith("<svg")


# --- plan -----------------------------------------------------------------------------


def test_plan_json(tmp_path, capsys):
    args = ["plan", "--aperture", "0.1", "--hpbw", "25", "--freq", "28e9", "--width", "1.734", "--margin", "0.1", "--format", "json", "--out", str(tmp_path)]
    assert run(args) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["distance_m"] == pytest.approx(4.362, abs=1e-3)
    assert doc["constraint_binding"] == "footprint"
    assert json.loads((tmp_path / "plan.json").read_text()) == doc


def test_plan_rejects_bad_beamwidth(capsys):
    assert run(["plan", "--aperture", "0.1", "--hpbw", "200", "--freq", "28e9", "--width", "1", "--margin", "0"]) == EXIT_VALIDATION


# --- synth ----------------------------------------------------------------------------


def test_synth_seed_flag_changes_noise(tmp_path):
    for seed in ("1", "1", "2"):
        run(["synth", "--scene", str(SCENE), "--out", str(tmp_path / f"s{seed}"), "--seed", seed])
    f = Path("FR3") / "t0_p0_target.s1p"
    assert (tmp_path / "s1" / f).read_bytes() != (tmp_path / "s2" / f).read_bytes()


def test_synth_needs_out():
    assert run(["synth", "--scene", str(SCENE)]) == EXIT_VALIDATION


# --- acquire --------------------------------------------------------------------------


def acquire_args(manifest: Path, port: int, *extra: str) -> list[str]:
    return ["acquire", "--manifest", str(manifest), "--port", str(port), "--band", "FR3", "--theta", "0", "--phi", "45", "--slot", "target", *extra]


@pytest.fixture
def fr3_sweep(small):
    camp = load_campaign(small)
    s = camp.sweep("FR3", 0.0, 90.0, "target")
    return FrequencySweep(s.grid, s.samples)


def test_acquire_appends_file_and_entry(small_copy, fr3_sweep):
    with MockInstrument(fr3_sweep) as mock:
        assert run(acquire_args(small_copy, mock.address[1])) == EXIT_OK
        entry = load_manifest(small_copy).entries[-1]
        assert (entry.band, entry.theta_deg, entry.phi_deg, entry.scenario) == ("FR3", 0.0, 45.0, "target")
        assert (small_copy.parent / entry.path).exists()
        for slot in ("background", "sphere"):
            args = acquire_args(small_copy, mock.address[1])
            args[args.index("target")] = slot
            assert run(args) == EXIT_OK
    camp = load_campaign(small_copy)  # the completed angle validates on reload
    assert (0.0, 45.0) in camp.angles("FR3")
    assert np.array_equal(camp.sweep("FR3", 0.0, 45.0, "target").samples, fr3_sweep.samples)


def test_acquire_fault_leaves_manifest_unchanged(small_copy, fr3_sweep):
    before = small_copy.read_bytes()
    files = sorted(small_copy.parent.rglob("*"))
    with MockInstrument(fr3_sweep, FaultSpec("disconnect")) as mock:
        assert run(acquire_args(small_copy, mock.address[1])) == EXIT_NETWORK
    assert small_copy.read_bytes() == before
    assert sorted(small_copy.parent.rglob("*")) == files


def test_acquire_point_mismatch_fails_before_writing(small_copy, fr3_sweep):
    before = small_copy.read_bytes()
    files = sorted(small_copy.parent.rglob("*"))
    with MockInstrument(fr3_sweep) as mock:
        assert run(acquire_args(small_copy, mock.address[1], "--points", "1001")) == EXIT_VALIDATION
        assert mock.command_log == []  # never even connected
    assert small_copy.read_bytes() == before and sorted(small_copy.parent.rglob("*")) == files


def test_acquire_duplicate_slot_is_rejected(small_copy, fr3_sweep):
    with MockInstrument(fr3_sweep) as mock:
        args = acquire_args(small_copy, mock.address[1])
        args[args.index("45")] = "90"
        assert run(args) == EXIT_VALIDATION


def test_acquire_unreachable_is_a_network_error(small_copy):
    import socket

    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    assert run(acquire_args(small_copy, port, "--timeout-ms", "500")) == EXIT_NETWORK

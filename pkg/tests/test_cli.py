import json
import subprocess
import sys

import numpy as np
import pytest

from canopyfuel import pipeline
from canopyfuel.cli import main


@pytest.fixture(scope="module")
def stand(tmp_path_factory):
    out = tmp_path_factory.mktemp("stand")
    assert main(["synth", "--out-dir", str(out), "--n-trees", "12", "--seed", "4"]) == 0
    return out


def _run_args(stand, out, *extra):
    return ["run", "--cloud", str(stand / "cloud.ply"), "--recon", str(stand / "recon.csv"),
            "--gt", str(stand / "gt.csv"), "--out-dir", str(out), *extra]


def test_synth_outputs(stand):
    truth = json.loads((stand / "truth.json").read_text())
    assert truth["n_trees"] == 12
    assert {"center_x_m", "center_y_m", "crown_radius_m", "species", "crown_area_m2"} <= set(
        truth["trees"][0])
    assert (stand / "recon.csv").read_text().startswith("frame_id,x,y,z,qw,qx,qy,qz\n")


def test_align_recovers_scale(stand, tmp_path, capsys):
    code = main(["align", "--recon", str(stand / "recon.csv"), "--gt", str(stand / "gt.csv"),
                 "--cloud", str(stand / "cloud.ply"), "--out", str(tmp_path / "m.ply"),
                 "--report", str(tmp_path / "a.json"), "--json"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    # synth's default reconstruction frame is scaled by 0.37
    assert abs(report["scale"] - 1 / 0.37) < 1e-9
    assert report["rmse_m"] < 1e-9 and report["n_points"] == 36
    assert json.loads((tmp_path / "a.json").read_text()) == report


def test_align_identical_trajectories(stand, tmp_path, capsys):
    code = main(["align", "--recon", str(stand / "gt.csv"), "--gt", str(stand / "gt.csv"),
                 "--cloud", str(stand / "cloud.ply"), "--out", str(tmp_path / "m.ply"), "--json"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["scale"] == pytest.approx(1.0, abs=1e-12)


def test_align_disjoint_frames(stand, tmp_path, capsys):
    gt = tmp_path / "far.csv"
    gt.write_text("frame_id,x,y,z,qw,qx,qy,qz\n" + "".join(
        f"{100 + i},{i},{i * i},0,1,0,0,0\n" for i in range(5)))
    code = main(["align", "--recon", str(stand / "recon.csv"), "--gt", str(gt),
                 "--cloud", str(stand / "cloud.ply"), "--out", str(tmp_path / "m.ply")])
    err = capsys.readouterr().err
    assert code == 3
    assert "fewer than 3 correspondences" in err and "far.csv" in err


def test_run_recovers_truth(stand, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(_run_args(stand, out, "--json", "--latitude", "55")) == 0
    summary = json.loads(capsys.readouterr().out)
    truth = json.loads((stand / "truth.json").read_text())
    assert summary["n_trees"] == truth["n_trees"]
    assert summary["alpha_geo"] == 0.85
    assert abs(summary["corrected_area_m2"] - summary["footprint_m2"]) <= 1e-6 * summary["footprint_m2"]
    names = {p.name for p in out.iterdir()}
    assert names == {"metric.ply", "align.json", "height.bevr1", "density.bevr1", "canopy.mask1",
                     "labels.lblr1", "height.pgm", "labels.pgm", "inventory.csv", "summary.json",
                     "manifest.json"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["latitude_deg"] == 55.0
    assert set(manifest["timings_ms"]) == {"align", "rasterize", "segment", "inventory"}
    assert pipeline.verify_manifest(out) == []
    (out / "labels.pgm").write_bytes(b"tampered")
    assert pipeline.verify_manifest(out) == ["labels.pgm"]


def test_rerun_is_byte_identical(stand, tmp_path):
    for name in ("a", "b"):
        assert main(_run_args(stand, tmp_path / name)) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]


def test_chained_stages_equal_run(stand, tmp_path):
    mono = tmp_path / "mono"
    step = tmp_path / "step"
    cfg = ["--set", "cell_size_m=0.25", "--latitude", "12"]
    assert main(_run_args(stand, mono, *cfg)) == 0
    step.mkdir()
    assert main(["align", "--recon", str(stand / "recon.csv"), "--gt", str(stand / "gt.csv"),
                 "--cloud", str(stand / "cloud.ply"), "--out", str(step / "metric.ply"),
                 "--report", str(step / "align.json")]) == 0
    assert main(["rasterize", "--cloud", str(step / "metric.ply"), "--gt", str(stand / "gt.csv"),
                 "--out-dir", str(step), *cfg]) == 0
    assert main(["segment", "--height", str(step / "height.bevr1"), "--mask",
                 str(step / "canopy.mask1"), "--out-dir", str(step), *cfg]) == 0
    assert main(["inventory", "--height", str(step / "height.bevr1"), "--mask",
                 str(step / "canopy.mask1"), "--labels", str(step / "labels.lblr1"),
                 "--out-dir", str(step), *cfg]) == 0
    produced = sorted(p.name for p in step.iterdir())
    assert produced == sorted(p.name for p in mono.iterdir() if p.name != "manifest.json")
    for name in produced:
        assert (step / name).read_bytes() == (mono / name).read_bytes(), name


def test_config_file_and_flag_precedence(stand, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("latitude_deg = 10\nh_min = 0.2\n")
    out = tmp_path / "o"
    assert main(_run_args(stand, out, "--config", str(cfg), "--latitude", "60")) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["latitude_deg"] == 60.0
    assert manifest["config"]["h_min"] == 0.2


def test_usage_errors(stand, tmp_path, capsys):
    assert main(["run", "--cloud", str(stand / "cloud.ply"), "--recon", str(stand / "recon.csv"),
                 "--out-dir", str(tmp_path)]) == 1
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(_run_args(stand, tmp_path / "x", "--set", "h_min")) == 1


def test_input_errors(stand, tmp_path):
    assert main(_run_args(stand, tmp_path / "x", "--set", "h_min=1.5")) == 2
    bad = tmp_path / "bad.bevr1"
    bad.write_bytes(b"NOPE1 1 1 1 0 0\n\0\0\0\0")
    assert main(["segment", "--height", str(bad), "--mask", str(bad),
                 "--out-dir", str(tmp_path)]) == 2
    broken = tmp_path / "broken.csv"
    broken.write_text("frame_id,x,y,z,qw,qx,qy,qz\n1,2,3\n")
    assert main(["run", "--cloud", str(stand / "cloud.ply"), "--recon", str(broken), "--gt",
                 str(stand / "gt.csv"), "--out-dir", str(tmp_path / "y")]) == 2


def test_empty_mask_is_degenerate(tmp_path, capsys):
    from canopyfuel.bev import BevRaster, CanopyMask, GridSpec
    from canopyfuel.io.rasters import write_bev, write_mask
    spec = GridSpec(4, 4, 0.5, 0, 0)
    write_bev(BevRaster(spec, np.arange(16.0).reshape(4, 4)), tmp_path / "h.bevr1")
    write_mask(CanopyMask(spec, np.zeros((4, 4), bool)), tmp_path / "m.mask1")
    code = main(["segment", "--height", str(tmp_path / "h.bevr1"), "--mask",
                 str(tmp_path / "m.mask1"), "--out-dir", str(tmp_path)])
    assert code == 3
    assert "segment: no canopy" in capsys.readouterr().err


def test_missing_file_is_io_failure(stand, tmp_path):
    assert main(["run", "--cloud", str(tmp_path / "nope.ply"), "--recon", str(stand / "recon.csv"),
                 "--gt", str(stand / "gt.csv"), "--out-dir", str(tmp_path / "z")]) == 4


def test_console_script(stand, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "canopyfuel.cli", *_run_args(stand, tmp_path / "p"),
                           "--json"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["n_trees"] == 12
    assert "INFO" in proc.stderr

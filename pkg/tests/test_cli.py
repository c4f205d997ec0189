import json

import numpy as np
import pytest

from fpca import cli, fileio
from conftest import make_block
from reference import conv_relu_codes


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "rows": 20, "cols": 20, "max_kernel": 5, "out_channels": 2,
        "stride": 5, "adc_bits": 16, "skip_block": 5}))
    return path


def test_validate_echoes_geometry(cfg_file, capsys):
    assert cli.main(["validate", "--config", str(cfg_file)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == {"in_height": 20, "in_width": 20, "out_height": 4,
                   "out_width": 4, "colp_period": 1}


def test_validate_invalid_config_exits_3(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"rows": 21, "cols": 20, "max_kernel": 5,
                                "out_channels": 2, "stride": 5}))
    assert cli.main(["validate", "--config", str(path)]) == 3
    assert "validation error" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(tmp_path / "nope.json")]) == 1


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as err:
        cli.main(["run", "--config"])
    assert err.value.code == 2


def test_run_matches_reference(cfg_file, tmp_path, rng):
    image = rng.uniform(0, 1, (20, 20, 3))
    kernels = rng.uniform(-1, 1, (2, 5, 5, 3))
    image_path = tmp_path / "img.json"
    fileio.save_tensor(image_path, image)
    weights_path = tmp_path / "k.json"
    fileio.save_tensor(weights_path, kernels)
    out_path = tmp_path / "out.csv"
    code = cli.main(["run", "--config", str(cfg_file),
                     "--image", str(image_path),
                     "--weights", str(weights_path),
                     "--model", "ideal", "--out", str(out_path)])
    assert code == 0
    counts = fileio.load_tensor(out_path)
    from fpca import FPCAConfig, WeightBlock
    cfg = FPCAConfig(rows=20, cols=20, max_kernel=5, out_channels=2,
                     stride=5, adc_bits=16, skip_block=5)
    block = WeightBlock.program(list(kernels), cfg)
    signed = np.stack([block.signed_plane(ch) for ch in range(2)])
    expect = conv_relu_codes(image, signed, 5, 0, 16)
    assert np.max(np.abs(counts - expect)) <= 1.0
    manifest = json.loads((tmp_path / "out.csv.manifest.json").read_text())
    assert manifest["command"] == "run" and manifest["model"] == "ideal"


def test_run_accepts_smaller_kernels_via_padding(cfg_file, tmp_path, rng):
    image_path = tmp_path / "img.json"
    fileio.save_tensor(image_path, rng.uniform(0, 1, (20, 20, 3)))
    weights_path = tmp_path / "k.json"
    fileio.save_tensor(weights_path, rng.uniform(-1, 1, (2, 3, 3, 3)))
    out_path = tmp_path / "out.csv"
    assert cli.main(["run", "--config", str(cfg_file),
                     "--image", str(image_path),
                     "--weights", str(weights_path),
                     "--out", str(out_path)]) == 0
    assert fileio.load_tensor(out_path).shape == (4, 4, 2)


def test_fit_predict_error_report_pipeline(tmp_path, rng):
    model_path = tmp_path / "model.json"
    assert cli.main(["fit", "--oracle", "saturating", "--pixels", "12",
                     "--grid", "11", "--out", str(model_path)]) == 0
    manifest = json.loads((tmp_path / "model.json.manifest.json").read_text())
    assert manifest["command"] == "fit"
    assert "generic" in manifest["residual_rms"]

    contribs = rng.uniform(0, 1, (6, 2, 12))
    in_path = tmp_path / "contribs.json"
    fileio.save_tensor(in_path, contribs)
    pred_path = tmp_path / "pred.csv"
    assert cli.main(["predict", "--surrogate", str(model_path),
                     "--input", str(in_path), "--out", str(pred_path)]) == 0
    preds = fileio.load_tensor(pred_path)
    assert preds.shape == (6, 2)

    stats_path = tmp_path / "stats.json"
    args = ["error-report", "--surrogate", str(model_path),
            "--oracle", "saturating", "--trials", "200", "--seed", "7",
            "--out", str(stats_path)]
    assert cli.main(args) == 0
    first = stats_path.read_bytes()
    assert cli.main(args) == 0
    assert stats_path.read_bytes() == first  # byte-identical rerun
    doc = json.loads(first)
    assert doc["trials"] == 200 and doc["seed"] == 7


def test_sweep_cost_csv_and_manifest(cfg_file, tmp_path):
    out_path = tmp_path / "sweep.csv"
    assert cli.main(["sweep-cost", "--config", str(cfg_file),
                     "--strides", "1,5", "--channels", "2,4",
                     "--out", str(out_path)]) == 0
    lines = out_path.read_text().splitlines()
    meta = json.loads(lines[0][2:])
    assert "baseline" in meta and meta["baseline"]["e_frontend_J"] > 0
    assert lines[1] == "S,c_o,binning,n_c,e_frontend_J,e_io_J,t_frontend_s,max_fps,br"
    assert len(lines) == 2 + 4 + 1  # header rows + grid + baseline row
    assert lines[-1].startswith("0,0,1,0,")
    assert (tmp_path / "sweep.csv.manifest.json").exists()


def test_dump_schedule_trace_golden(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "rows": 9, "cols": 9, "max_kernel": 3, "out_channels": 2,
        "stride": 2, "padding": 1, "skip_block": 4}))
    out_path = tmp_path / "sched.json"
    trace_path = tmp_path / "sched.trace"
    assert cli.main(["dump-schedule", "--config", str(cfg_path),
                     "--out", str(out_path),
                     "--trace", str(trace_path)]) == 0
    doc = json.loads(out_path.read_text())
    assert doc["n_cycles"] == 60
    lines = trace_path.read_text().splitlines()
    assert lines[0] == "00000 pos ch=0 phase=2 rot=2 row=0 outs=0,3 rs=0-1 sw=0-1,5-7"
    assert len(lines) == 60


def test_dump_block_layout(cfg_file, tmp_path, rng):
    weights_path = tmp_path / "k.json"
    fileio.save_tensor(weights_path, rng.uniform(-1, 1, (2, 5, 5, 3)))
    out_path = tmp_path / "block.json"
    assert cli.main(["dump-block", "--config", str(cfg_file),
                     "--weights", str(weights_path),
                     "--out", str(out_path)]) == 0
    doc = json.loads(out_path.read_text())
    assert doc["weights_per_column"] == 2 * 25 * 3 * 2
    assert "ch1_neg" in doc["planes"]


def test_run_with_mask_writes_zeroed_outputs(cfg_file, tmp_path, rng):
    mask_path = tmp_path / "mask.json"
    mask_path.write_text(json.dumps(
        {"block_size": 5, "active": [[0, 1, 1, 1]] + [[1] * 4] * 3}))
    image_path = tmp_path / "img.json"
    fileio.save_tensor(image_path, rng.uniform(0.5, 1, (20, 20, 3)))
    weights_path = tmp_path / "k.json"
    fileio.save_tensor(weights_path, np.full((2, 5, 5, 3), 0.5))
    out_path = tmp_path / "out.csv"
    assert cli.main(["run", "--config", str(cfg_file),
                     "--image", str(image_path),
                     "--weights", str(weights_path),
                     "--mask", str(mask_path),
                     "--out", str(out_path)]) == 0
    counts = fileio.load_tensor(out_path)
    assert not counts[0, 0].any()      # receptive field inside skipped block
    assert counts[1:, :].any() and counts[0, 1:].any()

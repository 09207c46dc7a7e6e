import json

import numpy as np
import pytest

from otsdc.cli import main
from otsdc.nifti import read_volume, write_volume
from otsdc.ot1d import column_field
from otsdc.volume import EpiPair, Volume

DIMS = ["40", "40", "32"]


@pytest.fixture(scope="module")
def phantom(tmp_path_factory):
    d = tmp_path_factory.mktemp("ph")
    assert main(["phantom", "--dims", *DIMS, "--snr", "20", "--seed", "3",
                 "--out", str(d / "p")]) == 0
    return d / "p"


def pair_args(prefix):
    return ["--plus", f"{prefix}_plus.nii.gz", "--minus", f"{prefix}_minus.nii.gz"]


def test_phantom_outputs_byte_identical(tmp_path):
    for tag in ("a", "b"):
        assert main(["phantom", "--dims", "16", "16", "12", "--noise", "1.0", "--seed", "5",
                     "--out", str(tmp_path / tag / "x")]) == 0
    for name in ("I0", "plus", "minus", "field"):
        a = (tmp_path / "a" / f"x_{name}.nii.gz").read_bytes()
        assert a == (tmp_path / "b" / f"x_{name}.nii.gz").read_bytes()
    assert (tmp_path / "a" / "x_spec.json").read_text() == (tmp_path / "b" / "x_spec.json").read_text()


def test_correct_report(phantom, tmp_path):
    out = tmp_path / "c"
    assert main(["correct", *pair_args(phantom), "--threads", "1", "--out", str(out),
                 "--t1", f"{phantom}_I0.nii.gz"]) == 0
    rep = json.loads((tmp_path / "c_report.json").read_text())
    assert rep["schema"] == 1 and rep["status"] == "converged"
    assert rep["residual"] <= rep["delta"] * (1 + 1e-3)
    assert rep["delta"] == pytest.approx(1.5 * rep["sigma"])
    assert {"transport", "lambda_selection", "unwarp", "total"} <= set(rep["timing"])
    assert set(rep["diagnostics"]) == {"gradient_clamped", "negative_clamped"}
    unc, cor = rep["metrics"]
    assert cor["ncc_lr_rl"] > unc["ncc_lr_rl"] and cor["rmse_lr_rl"] < unc["rmse_lr_rl"]
    field = read_volume(tmp_path / "c_field.nii.gz")
    avg = read_volume(tmp_path / "c_corrected_avg.nii.gz")
    assert field.dims == avg.dims == tuple(int(x) for x in DIMS)
    write_volume(field, tmp_path / "again.nii.gz")
    np.testing.assert_array_equal(read_volume(tmp_path / "again.nii.gz").data, field.data)


def test_lambda_zero_gives_raw_field(phantom, tmp_path):
    assert main(["estimate-field", *pair_args(phantom), "--lambda", "0", "--threads", "1",
                 "--out", str(tmp_path / "e")]) == 0
    got = read_volume(tmp_path / "e_field.nii.gz").data
    pair = EpiPair(read_volume(f"{phantom}_plus.nii.gz"), read_volume(f"{phantom}_minus.nii.gz"))
    np.testing.assert_array_equal(got, column_field(pair).u.astype(np.float32))
    rep = json.loads((tmp_path / "e_report.json").read_text())
    assert rep["status"] == "fixed_lambda" and rep["residual"] == 0


def test_null_distortion(phantom, tmp_path):
    args = ["--plus", f"{phantom}_I0.nii.gz", "--minus", f"{phantom}_I0.nii.gz"]
    assert main(["estimate-field", *args, "--out", str(tmp_path / "n")]) == 0
    assert np.abs(read_volume(tmp_path / "n_field.nii.gz").data).max() < 0.05


def test_reference_field(phantom, tmp_path):
    assert main(["estimate-field", *pair_args(phantom), "--out", str(tmp_path / "f")]) == 0
    own = str(tmp_path / "f_field.nii.gz")
    assert main(["estimate-field", *pair_args(phantom), "--ref-field", own,
                 "--out", str(tmp_path / "g")]) == 0
    rep = json.loads((tmp_path / "g_report.json").read_text())
    assert rep["pearson_r"] == pytest.approx(1.0, abs=1e-6)
    write_volume(Volume(np.zeros((4, 4, 4))), tmp_path / "small.nii.gz")
    code = main(["estimate-field", *pair_args(phantom), "--ref-field",
                 str(tmp_path / "small.nii.gz"), "--out", str(tmp_path / "h")])
    assert code != 0


def test_missing_input(tmp_path, capsys):
    missing = tmp_path / "nope.nii.gz"
    code = main(["correct", "--plus", str(missing), "--minus", str(missing),
                 "--out", str(tmp_path / "x")])
    assert code == 2
    err = capsys.readouterr().err
    assert str(missing) in err and len(err.strip().splitlines()) == 1


def test_usage_errors(phantom, tmp_path):
    assert main(["correct", *pair_args(phantom), "--lambda", "1", "--delta", "1",
                 "--out", str(tmp_path / "u")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["correct", "--plus", "a.nii"])
    assert exc.value.code == 1


def test_degenerate_background(tmp_path):
    write_volume(Volume(np.ones((12, 10, 8))), tmp_path / "flat.nii.gz")
    args = ["--plus", str(tmp_path / "flat.nii.gz"), "--minus", str(tmp_path / "flat.nii.gz")]
    assert main(["correct", *args, "--out", str(tmp_path / "d")]) == 3


def test_metrics_identical(phantom, tmp_path, capsys):
    args = ["--plus", f"{phantom}_plus.nii.gz", "--minus", f"{phantom}_plus.nii.gz"]
    assert main(["metrics", *args, "--label", "same", "--out", str(tmp_path / "m")]) == 0
    doc = json.loads((tmp_path / "m_metrics.json").read_text())
    (rep,) = doc["methods"]
    assert rep["ncc_lr_rl"] == pytest.approx(1.0) and rep["rmse_lr_rl"] == 0


def test_metrics_rows_per_label(phantom, tmp_path, capsys):
    args = []
    for label in ("raw", "again", "third"):
        args += [*pair_args(phantom), "--label", label]
    assert main(["metrics", *args, "--t1", f"{phantom}_I0.nii.gz", "--slices", "10", "16",
                 "--out", str(tmp_path / "t")]) == 0
    lines = (tmp_path / "t_metrics.txt").read_text().splitlines()
    assert [ln.split()[0] for ln in lines[2:]] == ["raw", "again", "third"]
    assert "z = 16" in lines[0]

import hashlib
import json

import numpy as np
import pytest

from witnesskit.cli import UsageError, decode_matrix, dumps, encode_matrix, main, parse_state_spec
from witnesskit.linalg import matrix_rank
from witnesskit.witness import W0_MATRIX


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    assert code == 0, out
    return json.loads(out)


def test_thresholds_zero_radius(capsys):
    data = run_json(capsys, "witness", "thresholds", "--d", "0")
    assert data["tau"] == pytest.approx(0.0, abs=1e-15)
    assert "theta" not in data


def test_thresholds_with_p(capsys):
    data = run_json(capsys, "witness", "thresholds", "--d", "0.1", "--p", "0.5")
    assert data["tau"] == pytest.approx(0.0070479305, abs=1e-9)
    expected = 0.25 - 1 / 12 - 3 * 0.5 / 8 + 0.25 * 0.01 / 1.0
    assert data["theta"] == pytest.approx(expected, abs=1e-14)


def test_decompose_w0_ons(capsys):
    data = run_json(capsys, "decompose", "--target", "w0", "--mode", "ons")
    assert data["settings"] == 3
    assert data["lower_bound"] == 3
    assert data["residual"] <= 1e-10
    assert np.allclose(decode_matrix(data["witness_matrix"]), W0_MATRIX, atol=1e-12)


def test_state_make_horodecki(capsys):
    data = run_json(capsys, "state", "make", "--family", "horodecki", "--b", "0.5")
    assert data["kernel_dim"] == 3
    assert data["ppt"] is True
    rho = decode_matrix(data["matrix"])
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-14)


def test_state_make_chessboard_params(capsys):
    data = run_json(capsys, "state", "make", "--family", "chessboard", "--params", "1,0.7,1.3,0.4,0.9,0.6")
    assert data["dims"] == [3, 3]
    assert matrix_rank(decode_matrix(data["matrix"])) == 4


def test_state_make_bad_params(capsys):
    code = main(["state", "make", "--family", "chessboard", "--params", "1,2,3"])
    assert code == 1


def test_edge_witness_for_horodecki(capsys):
    data = run_json(capsys, "witness", "build", "--for", "horodecki:b=0.5", "--restarts", "50")
    assert data["kind"] == "edge"
    assert data["epsilon"] > 0


def test_error_exit_code_and_json(capsys):
    code, out = run(capsys, "witness", "build", "--for", "npt:noisy-bell:p=0.3333333333333333")
    assert code == 2
    err = json.loads(out)["error"]
    assert err["code"] == "no_npt_witness"
    assert err["message"]


def test_bad_subcommand_exits_one():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_missing_decomposition_file(capsys, tmp_path):
    code, _ = run(capsys, "simulate", "--state", "noisy-bell:p=0.9",
                  "--decomposition", str(tmp_path / "absent.json"))
    assert code == 1


def test_manifest_written(tmp_path):
    out = tmp_path / "dec.json"
    assert main(["decompose", "--target", "w0", "--seed", "4", "--out", str(out)]) == 0
    manifest = json.loads((tmp_path / "dec.json.manifest.json").read_text())
    assert manifest["seed"] == 4
    assert manifest["argv"][:3] == ["decompose", "--target", "w0"]
    assert manifest["outputs"][str(out)] == hashlib.sha256(out.read_bytes()).hexdigest()
    assert manifest["version"]


def _twice(tmp_path, argv):
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.out"
        assert main(argv + ["--out", str(path)]) == 0
        outs.append(path.read_bytes())
    return outs


def test_curve_reruns_are_identical(tmp_path):
    a, b = _twice(tmp_path, ["montecarlo", "curve", "--d", "0.1", "--samples", "2000", "--bins", "10",
                             "--p-points", "21", "--seed", "3", "--format", "csv"])
    assert a == b
    assert a.splitlines()[0].startswith(b"d,alpha")


def test_simulate_reruns_are_identical(tmp_path):
    dec = tmp_path / "w0.json"
    assert main(["decompose", "--target", "w0", "--out", str(dec)]) == 0
    a, b = _twice(tmp_path, ["simulate", "--state", "noisy-bell:p=0.9", "--decomposition", str(dec),
                             "--shots", "20000", "--seed", "5"])
    assert a == b
    data = json.loads(a)
    assert data["exact"] == pytest.approx(-0.425, abs=1e-12)
    assert abs(data["value"] - data["exact"]) <= 5 * data["stderr"]


def test_simulate_certifies_with_radius(tmp_path, capsys):
    dec = tmp_path / "w0.json"
    assert main(["decompose", "--target", "w0", "--out", str(dec)]) == 0
    data = run_json(capsys, "simulate", "--state", "noisy-bell:p=0.9,d=0.1", "--decomposition", str(dec),
                    "--shots", "20000", "--d", "0.1")
    assert data["verdict"] == "entangled"


def test_simulate_dimension_mismatch(tmp_path, capsys):
    dec = tmp_path / "w0.json"
    assert main(["decompose", "--target", "w0", "--out", str(dec)]) == 0
    code, out = run(capsys, "simulate", "--state", "ghz", "--decomposition", str(dec), "--shots", "10")
    assert code == 2
    assert "error" in json.loads(out)


def test_parse_state_spec_families():
    assert parse_state_spec("ghz").dims == (2, 2, 2)
    assert parse_state_spec("upb").dims == (3, 3)
    rho = parse_state_spec("noisy-bell:p=1,kind=phi-")
    phi = np.array([1, 0, 0, -1]) / np.sqrt(2)
    assert np.allclose(rho.mat, np.outer(phi, phi))
    rho = parse_state_spec("chessboard:m=1,n=0.7,a=1.3,b=0.4,c=0.9,d=0.6")
    assert rho.dims == (3, 3)


def test_parse_state_spec_errors(tmp_path):
    with pytest.raises(UsageError):
        parse_state_spec("chessboard:m=1")
    with pytest.raises(UsageError):
        parse_state_spec("noisy-bell:p=abc")
    with pytest.raises(UsageError):
        parse_state_spec("noisy-bell:p")
    with pytest.raises(UsageError):
        parse_state_spec("teapot")
    with pytest.raises(UsageError):
        parse_state_spec(str(tmp_path / "missing.json"))


def test_state_file_round_trip(tmp_path, capsys):
    path = tmp_path / "h.json"
    assert main(["state", "make", "--family", "horodecki", "--b", "0.3", "--out", str(path)]) == 0
    rho = parse_state_spec(str(path))
    data = run_json(capsys, "state", "make", "--family", "horodecki", "--b", "0.3")
    assert np.array_equal(rho.mat, decode_matrix(data["matrix"]))


def test_matrix_codec_round_trip():
    m = np.array([[1 + 2j, -0.5], [0.25j, 3]])
    assert np.array_equal(decode_matrix(json.loads(dumps(encode_matrix(m)))), m)


def test_negative_zero_is_normalised():
    assert "-0.0" not in dumps({"x": -0.0, "y": np.float64(-0.0), "z": complex(-0.0, -0.0)})

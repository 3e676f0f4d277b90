import json
from pathlib import Path

import pytest

from epishape.cli import ExperimentConfig, load_config, main
from epishape.errors import ConfigError


def _write(tmp_path: Path, text: str) -> Path:
    p = tmp_path / "run.toml"
    p.write_text(text)
    return p


def test_load_config_minimal(tmp_path):
    p = _write(tmp_path, 'd = 3\nlambda = 1.2\nrecovery = "const:2.0"\nL = 16\n')
    cfg = load_config(p)
    assert cfg == {"d": 3, "lambda": 1.2, "recovery": "const:2.0", "L": 16}


def test_load_config_unknown_keys_listed(tmp_path):
    p = _write(tmp_path, 'd = 3\nbogus = 1\nworse = "x"\n')
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert "bogus" in str(err.value) and "worse" in str(err.value)


def test_load_config_type_mismatch_names_key(tmp_path):
    p = _write(tmp_path, 'd = "three"\n')
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert "'d'" in str(err.value)


def test_degenerate_recovery_rejected(tmp_path):
    p = _write(tmp_path, 'd = 2\nrecovery = "const:0.0"\n')
    cfg = load_config(p)  # parse is fine; the distribution itself is not
    with pytest.raises(ConfigError):
        ExperimentConfig({**cfg, "lambda": 1.0, "seed": 0}).field_config()


def test_flag_overrides_file(tmp_path, capsys):
    p = _write(
        tmp_path,
        'd = 2\nlambda = 1.2\nrecovery = "exp:1.0"\nL = 4\nreplicas = 120\n',
    )
    out = tmp_path / "out"
    code = main(
        [
            "tails", "--config", str(p), "--lambda", "0.4", "--seed", "3",
            "--n-values", "2", "3", "4", "5", "--out", str(out), "--jobs", "1",
        ]
    )
    assert code == 0
    header = (out / "curves.csv").read_text().splitlines()
    row = header[4].split(",")
    assert row[0] == "0.4"  # flag value won over the file's 1.2


def test_missing_recovery_exits_2(capsys):
    code = main(["lambda-c", "--d", "2", "--n", "3", "--replicas", "100"])
    assert code == 2
    assert "recovery" in capsys.readouterr().err


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["tails", "--nonsense", "1"])
    assert err.value.code == 2


def test_truncation_exits_3(tmp_path, capsys):
    # radial ray that cannot fit its endpoint neighborhoods in the box
    code = main(
        [
            "radial", "--d", "2", "--lambda", "1e-6", "--recovery", "exp:1.0",
            "--z", "1", "0", "--n-max", "4", "--replicas", "3",
            "--out", str(tmp_path), "--jobs", "1",
        ]
    )
    assert code == 3
    assert "box" in capsys.readouterr().err


def test_outputs_reproducible_byte_identical(tmp_path, capsys):
    args = [
        "tails", "--d", "2", "--lambda", "0.5", "--recovery", "exp:1.0",
        "--replicas", "150", "--n-values", "2", "3", "4", "5",
        "--seed", "11", "--jobs", "2",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2), "--jobs", "1"]) == 0
    assert (out1 / "curves.csv").read_bytes() == (out2 / "curves.csv").read_bytes()
    assert (out1 / "fit.json").read_bytes() == (out2 / "fit.json").read_bytes()


def test_headers_carry_provenance(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(
        [
            "epidemic", "--d", "2", "--lambda", "1.0", "--recovery", "const:1.0",
            "--L", "3", "--horizon", "2", "--seed", "5", "--out", str(out),
        ]
    )
    assert code == 0
    head = (out / "trajectory.csv").read_text().splitlines()[:3]
    assert head[0].startswith("# config_hash: ")
    assert head[1] == "# seed: 5"
    assert head[2].startswith("# version: ")


def test_lambda_c_json_artifact(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(
        [
            "lambda-c", "--d", "2", "--recovery", "exp:1.0", "--n", "3",
            "--tol", "0.2", "--replicas", "120", "--seed", "7",
            "--out", str(out), "--jobs", "1",
        ]
    )
    assert code == 0
    doc = json.loads((out / "lambda_c.json").read_text())
    assert set(doc) == {"meta", "out", "in"}
    assert doc["out"]["lo"] < doc["out"]["hi"]
    summary = capsys.readouterr().out
    assert "lambda-c:" in summary and "out=[" in summary


def test_verify_quick_passes():
    assert main(["verify", "--quick"]) == 0


def test_infinity_encoded_as_empty_field(tmp_path, capsys):
    out = tmp_path / "out"
    main(
        [
            "epidemic", "--d", "2", "--lambda", "1e-9", "--recovery", "const:0.001",
            "--L", "2", "--horizon", "1", "--seed", "1", "--out", str(out),
        ]
    )
    body = (out / "trajectory.csv").read_text().splitlines()
    data = [l for l in body if not l.startswith("#")][1:]
    empties = [l for l in data if l.endswith(",,")]
    assert len(empties) == 24  # all but the origin never get infected

import csv
import json

import pytest

from spiralacf import acf, cli, geometry


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_verify_lemmas_exit_zero(tmp_path):
    status = cli.main(["verify-lemmas", "--trials", "30", "--out", str(tmp_path), "--format", "csv"])
    assert status == cli.EXIT_PASS
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    lemma_certs = [k for k in manifest["certificates"] if k.startswith("lemma:")]
    assert len(lemma_certs) == 7
    assert manifest["theta0"] == pytest.approx(0.38)
    rows = read_csv(tmp_path / "lemmas.csv")
    assert {r["lemma_id"] for r in rows} == set(cli.lemmas.LEMMA_IDS)


def test_stage_zero_is_diameter_with_unit_j(tmp_path):
    status = cli.main(["acf-scan", "--stages", "0", "--samples", "1000", "--radii", "5",
                       "--out", str(tmp_path)])
    assert status == cli.EXIT_PASS
    rows = read_csv(tmp_path / "interface.csv")
    assert [(float(r["x"]), float(r["y"])) for r in rows] == [(-1.0, 0.0), (1.0, 0.0)]
    scan = [r for r in read_csv(tmp_path / "acf_scan.csv") if r["n"] == "2"]
    assert len(scan) == 5 and all(abs(float(r["J"]) - 1) < 1e-12 for r in scan)
    assert (tmp_path / "acf.svg").read_text().lstrip().startswith("<?xml")


def test_rerun_is_byte_identical(tmp_path):
    args = ["full-report", "--stages", "1", "--samples", "1000", "--radii", "4", "--trials", "10",
            "--theta-grid", "0.05,0.1", "--format", "csv"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(args + ["--out", str(a)]) == cli.main(args + ["--out", str(b)])
    for name in ("lemmas.csv", "interface.csv", "stages.csv", "acf_scan.csv", "tangent.csv", "blowup.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    manifest = json.loads((a / "manifest.json").read_text())
    assert {x["file"] for x in manifest["artifacts"]} >= {"acf_scan.csv", "tangent.csv"}
    assert all(x["seed"] == 42 for x in manifest["artifacts"])
    assert manifest["config"]["command"] == "full-report"


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("command = build-spiral\nstages = 2\nseed = 7\nformat = csv\n")
    cfg = cli.parse_config(["--config", str(conf), "--seed", "9"])
    assert (cfg.command, cfg.stages, cfg.seed, cfg.formats) == ("build-spiral", 2, 9, ("csv",))


@pytest.mark.parametrize("argv, name", [
    (["--stages", "-1"], "stages"),
    (["--samples", "10"], "samples"),
    (["--n0", "1", "--stages", "1"], "n0"),
    (["--format", "png"], "format"),
    (["--theta-grid", "a:b"], "theta-grid"),
    (["nonsense"], "command"),
])
def test_invalid_config_names_field(argv, name, capsys):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(argv)
    assert info.value.field == name
    assert cli.main(argv) == cli.EXIT_CONFIG
    assert name in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    conf = tmp_path / "bad.cfg"
    conf.write_text("colour = blue\n")
    assert cli.main(["--config", str(conf)]) == cli.EXIT_CONFIG


def test_construction_failure_exit_code(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise geometry.ConstructionError("no admissible radii", "C", 2)

    monkeypatch.setattr(acf, "construct_spiral", fail)
    status = cli.main(["build-spiral", "--stages", "2", "--samples", "1000", "--out", str(tmp_path)])
    assert status == cli.EXIT_CONSTRUCTION
    err = json.loads((tmp_path / "manifest.json").read_text())["error"]
    assert err["criterion"] == "C" and err["stage"] == 2


def test_theta_grid_forms():
    assert cli.parse_theta_grid("0.1:0.3:0.1") == [0.1, 0.2, 0.3]
    assert cli.parse_theta_grid("0.05, 0.2") == [0.05, 0.2]
    auto = cli.parse_theta_grid("auto")
    assert auto[0] == 0.01 and auto[-1] == pytest.approx(0.38)

import hashlib
import json
from pathlib import Path

import pytest

from carpetdyn import cli
from cli_configs import SMALL


def run(tmp_path: Path, command: str, cfg: dict, seed: int = 7, out: str = "out"):
    conf = tmp_path / f"{command}.json"
    conf.write_text(json.dumps(cfg))
    outdir = tmp_path / out
    return cli.main([command, "--config", str(conf), "--seed", str(seed), "--out", str(outdir)]), outdir


def digest(d: Path):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir())}


def test_periodic(tmp_path):
    code, out = run(tmp_path, "periodic", SMALL["periodic"])
    assert code == 0
    rows = (out / "periodic.csv").read_text().splitlines()
    assert rows[0].startswith("period,count,lefschetz,match")
    assert rows[1].split(",")[:4] == ["1", "1", "1", "yes"]
    assert json.loads((out / "report.json").read_text())["ok"]
    assert b"\r\n" in (out / "periodic.csv").read_bytes()


def test_build_then_render(tmp_path):
    code, out = run(tmp_path, "build", SMALL["build"], out="b")
    assert code == 0
    inv = json.loads((out / "invariants.json").read_text())
    assert inv["ok"] and inv["depth"] == 4
    cfg = dict(SMALL["render"], stage=str(out / "stage.json"))
    code, rout = run(tmp_path, "render", cfg, out="r")
    assert code == 0
    assert (rout / "stage.png").read_bytes()[:4] == b"\x89PNG"
    assert (rout / "phase.png").exists()


def test_build_too_deep_is_usage_error(tmp_path, capsys):
    code, _ = run(tmp_path, "build", {"max_period": 2, "depth": 40})
    assert code == 2
    assert "short by" in capsys.readouterr().err


def test_bad_configs(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"periods": [1, 2,]}')
    assert cli.main(["periodic", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == 2
    assert "line 1" in capsys.readouterr().err
    code, _ = run(tmp_path, "periodic", {"nonsense": 1})
    assert code == 2
    assert "nonsense" in capsys.readouterr().err
    code, _ = run(tmp_path, "periodic", {"periods": "all"})
    assert code == 2
    assert "periods" in capsys.readouterr().err
    code, _ = run(tmp_path, "periodic", {"matrix": [[1, 1], [0, 1]]})
    assert code == 2
    code, _ = run(tmp_path, "render", {"stage": "missing.json"})
    assert code == 2
    code, _ = run(tmp_path, "mixing", {"observable": "sin"})
    assert code == 2


def test_usage_errors(tmp_path):
    assert cli.main([]) == 2
    assert cli.main(["periodic"]) == 2
    assert cli.main(["periodic", "--seed", "-1", "--out", str(tmp_path)]) == 2
    assert cli.main(["periodic", "--seed", str(2**64), "--out", str(tmp_path)]) == 2
    assert cli.main(["frobnicate", "--out", str(tmp_path)]) == 2


def test_verdict_failure_exit_code(tmp_path):
    # a tolerance nobody can meet turns the Birkhoff verdict into a failure
    cfg = dict(SMALL["mixing"], birkhoff_tol=1e-12)
    code, out = run(tmp_path, "mixing", cfg)
    assert code == 1
    assert not json.loads((out / "mixing.json").read_text())["ok"]


def test_config_round_trip():
    for name, cls in cli.COMMANDS.items():
        cfg = cli.parse_config(cls, json.dumps(SMALL[name]))
        again = cli.parse_config(cls, cli.dumps(cli.to_dict(cfg)))
        assert again == cfg


@pytest.mark.parametrize("command", ["periodic", "build", "mixing"])
def test_reruns_are_byte_identical(tmp_path, command):
    _, a = run(tmp_path, command, SMALL[command], out="a")
    _, b = run(tmp_path, command, SMALL[command], out="b")
    assert digest(a) == digest(b)


def test_spec_small(tmp_path):
    code, out = run(tmp_path, "spec", SMALL["spec"])
    rep = json.loads((out / "spec.json").read_text())
    assert code == (0 if rep["ok"] else 1)
    assert rep["saddle"]["worked_instance"]["m"] == 3
    assert (out / "visits.csv").exists() and (out / "adversarial_defects.csv").exists()

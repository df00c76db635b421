import json

import pytest

from qnav import cli

TINY = """environment: env3x3
model: {family: DDQN_MLP, hidden: [8, 8]}
training: {max_steps: 200, warmup_transitions: 100}
runs: 2
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY)
    return p


def test_train_writes_run_files(tiny, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["train", "--config", str(tiny), "--seed", "3", "--out", str(out)]) == 0
    run_dir = out / "env3x3_DDQN_MLP_8x8_seed3"
    names = sorted(p.name for p in run_dir.iterdir())
    assert names == ["checkpoint.json", "config.yaml", "curve.csv", "learning_curve.png", "run.csv"]
    assert "seed=3" in capsys.readouterr().out


def test_sweep_then_evaluate(tiny, tmp_path, capsys):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", str(tiny), "--runs", "1", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "family,size,params,successes,runs,mean_best10_steps"
    assert lines[1].startswith("DDQN_MLP,8;8,131,") and lines[1].endswith(",1,NA")
    for name in ("summary.csv", "summary.json", "learning_curves.png", "curves/env3x3_DDQN_MLP_8x8.csv"):
        assert (out / name).is_file()

    ck = out / "env3x3_DDQN_MLP_8x8" / "run_000_checkpoint.json"
    assert cli.main(["evaluate", "--checkpoint", str(ck), "--episodes", "3"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["world"] == "env3x3" and result["episodes"] == 3
    assert result["final_event"] in ("goal", "collision", "timeout")


def test_spectrum_command(tmp_path, capsys):
    assert cli.main(["spectrum", "--layers", "2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "frequency,real,imag" and len(out) == 1 + 12 + 1
    assert float(out[-1].rsplit(" ", 1)[1]) < 1e-10
    assert (tmp_path / "spectrum_L2.png").is_file() and (tmp_path / "spectrum_L2.csv").is_file()


def test_worlds_listing(capsys):
    assert cli.main(["worlds", "--no-plan"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1:] == ["env3x3,3,1,10.5,NA,NA", "env4x4,4,2,11,NA,NA", "env5x5,5,3,10,NA,NA"]


def test_invalid_world_file(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("extent: 3\n")
    assert cli.main(["worlds", str(bad)]) == 1
    assert "missing keys" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("environment: env3x3\nmodel: {family: QUANTUM}\nruns: 0\n")
    assert cli.main(["train", "--config", str(p)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 2 and all(line.startswith(str(p)) for line in err)


def test_bad_override_and_missing_checkpoint(tiny, tmp_path, capsys):
    assert cli.main(["sweep", "--config", str(tiny), "--runs", "0"]) == 2
    assert "runs must be >= 1" in capsys.readouterr().err
    assert cli.main(["evaluate", "--checkpoint", str(tmp_path / "none.json")]) == 1


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2

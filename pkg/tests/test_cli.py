import json
import subprocess
import sys
from pathlib import Path

import pytest

from concept_marl.cli import main
from concept_marl.config import RunConfig, load_config
from concept_marl.env import ConfigError

CONFIG_INI = """
[env]
max_steps = 50           # short episodes for tests
n_per_team = 2
[attackers]
noise_scale = 0.05
[loss]
gamma = 0.98
[whitening]
t = 2
[policy]
kind = hard
[trainer]
n_envs = 4
batch_size = 320
minibatch_size = 80
seq_len = 20
epochs = 2
total_steps = 320
[shift]
accel_scale = 0.7
rot_scale = 0.6
obs_noise = 0.02
latency = 1
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(CONFIG_INI)
    return path


def test_load_config_sections(config_file):
    rc = load_config(config_file)
    assert rc.env.max_steps == 50
    assert rc.attackers.noise_scale == 0.05
    assert rc.loss.gamma == 0.98
    assert rc.trainer.batch_size == 320
    assert rc.shift.accel_scale == 0.7
    assert rc.policy.kind == "hard"


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[env]\nwarp_speed = 9\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_config_round_trip_and_fingerprint(config_file):
    rc = load_config(config_file)
    again = RunConfig.from_json(rc.to_json())
    assert again.fingerprint() == rc.fingerprint()
    assert RunConfig().fingerprint() != rc.fingerprint()


def test_cli_train_eval_round_trip(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--seed", "1",
                 "--out", str(out)]) == 0
    captured = json.loads(capsys.readouterr().out)
    ckpt = captured["last_checkpoint"]
    assert Path(ckpt).exists()
    assert Path(captured["metrics_path"]).exists()

    report_path = tmp_path / "report.json"
    log_path = tmp_path / "frames.ndjson"
    assert main(["eval", "--checkpoint", ckpt, "--episodes", "4",
                 "--report", str(report_path), "--log", str(log_path),
                 "--log-episodes", "1"]) == 0
    report = json.loads(report_path.read_text())
    assert report["episodes"] == 4
    assert 0.0 <= report["win_rate"] <= 1.0
    assert log_path.exists()
    records = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert records[0]["type"] == "log_header"
    assert records[0]["schema"]["mode"] == "hard"
    assert records[1]["t"] == 0


def test_cli_eval_with_intervention_and_shift(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    main(["train", "--config", str(config_file), "--seed", "2", "--out", str(out)])
    ckpt = json.loads(capsys.readouterr().out)["last_checkpoint"]
    assert main(["eval", "--checkpoint", ckpt, "--episodes", "2",
                 "--intervene", "all", "--shift", "default"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert sorted(report["intervention_subset"]) == [
        "orientation", "position", "range", "strategy", "target"
    ]
    assert report["shift"]["accel_scale"] == 0.7


def test_cli_probe(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    main(["train", "--config", str(config_file), "--seed", "3", "--out", str(out)])
    ckpt = json.loads(capsys.readouterr().out)["last_checkpoint"]
    report_path = tmp_path / "probe.json"
    assert main(["probe", "--kind", "force_range", "--checkpoint", ckpt,
                 "--episodes", "2", "--report", str(report_path)]) == 0
    result = json.loads(report_path.read_text())
    assert result["probe"] == "force_range"


def test_cli_replay(tmp_path, capsys):
    from concept_marl.framelog import write_frames

    log = tmp_path / "log.ndjson"
    write_frames(log, [{"t": 0, "x": 1.25}, {"t": 1, "x": -2.5}])
    assert main(["replay", "--log", str(log), "--speed", "1000"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [json.loads(x)["t"] for x in lines] == [0, 1]


def test_cli_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "concept_marl", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    for sub in ("train", "eval", "serve", "replay", "ablate", "probe"):
        assert sub in proc.stdout


def test_cli_ablate(config_file, tmp_path, capsys):
    spec = tmp_path / "ablation.json"
    spec.write_text(json.dumps({
        "subsets": [["range", "strategy", "target"]],
        "eval_episodes": 2,
        "trainer": {"total_steps": 320},
    }))
    report_path = tmp_path / "table.json"
    assert main(["ablate", "--spec", str(spec), "--config", str(config_file),
                 "--out", str(tmp_path / "runs"), "--report", str(report_path)]) == 0
    table = json.loads(report_path.read_text())
    assert table["rows"][0]["j"] == 9

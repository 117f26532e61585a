import json
import subprocess
import sys

import pytest

from sgddpg.cli import main

TRAIN = ["train", "--steps", "400", "--train.eval_interval", "200", "--train.eval_episodes", "1",
         "--agent.hidden", "16", "--gp.capacity", "40"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_train_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, stderr = run(capsys, *TRAIN, "--out", str(out), "--checkpoint-interval", "200")
    assert code == 0
    summary = json.loads(stdout)
    assert summary["steps"] == 400 and summary["config"]["gp.capacity"] == 40
    assert json.loads((out / "summary.json").read_text()) == summary
    assert (out / "metrics.csv").is_file() and (out / "final.json").is_file()
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == \
        ["step_00000200.json", "step_00000400.json"]
    assert "eval return" in stderr


def test_train_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, *TRAIN, "--seed", "3", "--out", str(tmp_path / name))[0] == 0
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train.seed": 5, "gp.capacity": 30}))
    code, stdout, _ = run(capsys, *TRAIN[:3], "--config", str(cfg), "--gp.capacity", "20",
                          "--vanilla", "--out", str(tmp_path / "r"))
    assert code == 0
    conf = json.loads(stdout)["config"]
    assert conf["train.seed"] == 5 and conf["gp.capacity"] == 20 and conf["train.vanilla"]


@pytest.mark.parametrize("argv", [
    ["train", "--gp.mode", "bogus"],
    ["train", "--beta", "sideways"],
    ["train", "--init-trajectory", "/no/such/file.csv"],
    ["train", "--config", "/no/such/config.json"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    code, stdout, stderr = run(capsys, *argv, "--out", str(tmp_path / "r"))
    assert code == 2 and stdout == "" and "error" in stderr


def test_unwritable_out_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run(capsys, *TRAIN, "--out", str(blocker / "sub"))[0] == 2


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--no-such-flag"])
    assert exc.value.code == 2


def test_eval_and_corrupt_checkpoint(tmp_path, capsys):
    assert run(capsys, *TRAIN, "--out", str(tmp_path / "r"))[0] == 0
    code, stdout, _ = run(capsys, "eval", str(tmp_path / "r/final.json"), "--episodes", "2")
    doc = json.loads(stdout)
    assert code == 0 and doc["episodes"] == 2 and doc["step"] == 400
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run(capsys, "eval", str(bad))[0] == 2


def test_record(tmp_path, capsys):
    path = tmp_path / "demo.csv"
    code, stdout, _ = run(capsys, "record", "--out", str(path), "--steps", "300")
    assert code == 0 and json.loads(stdout)["rows"] == 300
    assert len(path.read_text().splitlines()) == 301
    low = json.loads(run(capsys, "record", "--out", str(tmp_path / "l.csv"), "--steps", "1000",
                         "--quality", "low")[1])
    high = json.loads(run(capsys, "record", "--out", str(tmp_path / "h.csv"), "--steps", "1000")[1])
    assert high["return"] > low["return"]
    assert run(capsys, "record", "--out", str(tmp_path / "missing/dir/x.csv"))[0] == 2


def test_record_from_policy(tmp_path, capsys):
    assert run(capsys, *TRAIN, "--out", str(tmp_path / "r"))[0] == 0
    code, stdout, _ = run(capsys, "record", "--out", str(tmp_path / "p.csv"), "--steps", "200",
                          "--policy", str(tmp_path / "r/final.json"))
    assert code == 0 and json.loads(stdout)["source"].endswith("final.json")


def test_gp_selftest(capsys):
    code, stdout, stderr = run(capsys, "gp-selftest", "--trials", "40")
    doc = json.loads(stdout)
    assert code == 0 and doc["passed"] and len(doc["checks"]) == len(stderr.strip().splitlines())


def test_gp_selftest_detects_fault(capsys):
    code, stdout, _ = run(capsys, "gp-selftest", "--trials", "40", "--inject-fault")
    assert code == 1 and not json.loads(stdout)["passed"]


def test_inject_fault_hidden_from_help(capsys):
    with pytest.raises(SystemExit):
        main(["gp-selftest", "--help"])
    assert "inject" not in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sgddpg", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gp-selftest" in proc.stdout


def test_train_from_config_file_rows(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gp.capacity": 50, "agent.hidden": 16}))
    out = tmp_path / "r"
    assert run(capsys, "train", "--config", str(cfg), "--seed", "7", "--steps", "1000",
               "--out", str(out))[0] == 0
    rows = (out / "metrics.csv").read_text().splitlines()[1:]
    assert sum(r.startswith("train,") for r in rows) >= 5


def test_eval_repeatable(tmp_path, capsys):
    assert run(capsys, *TRAIN, "--out", str(tmp_path / "r"))[0] == 0
    first = run(capsys, "eval", str(tmp_path / "r/final.json"), "--seed", "4")[1]
    second = run(capsys, "eval", str(tmp_path / "r/final.json"), "--seed", "4")[1]
    assert first == second

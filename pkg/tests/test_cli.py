import json
import os

import pytest

from trajaudit.cli import main


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _gen(tmp_path, kind, seed=7, episodes=60, horizon=10, name=None, **extra):
    out = tmp_path / (name or kind)
    argv = ["gen", kind, "--episodes", str(episodes), "-T", str(horizon),
            "--seed", str(seed), "--out", str(out)]
    for flag, value in extra.items():
        argv += [f"--{flag}", str(value)]
    assert main(argv) == 0
    return out


def _config(tmp_path, scenarios, seed=11, perms=5, **kw):
    cfg = {
        "seed": seed,
        "output_dir": str(tmp_path / "out"),
        "permutations": perms,
        "scenarios": scenarios,
    }
    cfg.update(kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_gen_deterministic(tmp_path):
    a = _gen(tmp_path, "lagged-follower", name="a")
    b = _gen(tmp_path, "lagged-follower", name="b")
    assert _read(a / "episodes.jsonl") == _read(b / "episodes.jsonl")
    assert _read(a / "manifest.json") == _read(b / "manifest.json")


def test_gen_rejects_bad_lag(tmp_path, capsys):
    code = main(["gen", "lagged-follower", "--episodes", "5", "-T", "3",
                 "--seed", "1", "--lag", "3", "--out", str(tmp_path / "x")])
    assert code == 2
    assert "lag" in capsys.readouterr().err


def test_audit_end_to_end_and_determinism(tmp_path):
    ds1 = _gen(tmp_path, "lagged-follower")
    ds2 = _gen(tmp_path, "convention-pair")
    cfg = _config(tmp_path, [
        {"name": "lagged-follower", "runs": [{"dataset": str(ds1)}]},
        {"name": "convention-pair", "runs": [{"dataset": str(ds2)}]},
    ])
    assert main(["audit", "--config", str(cfg), "--jobs", "1"]) == 0
    out = tmp_path / "out"
    report = _read(out / "audit_report.md")
    v1 = json.loads(_read(out / "lagged-follower.verdict.json"))
    assert v1["temporal_coordination"] is True
    assert v1["synchronous_coordination"] is False
    v2 = json.loads(_read(out / "convention-pair.verdict.json"))
    assert v2["synchronous_coordination"] is True
    assert v2["temporal_coordination"] is False
    assert v1["memory_benefit"] is None

    # Re-run: byte-identical outputs.
    assert main(["audit", "--config", str(cfg), "--jobs", "1"]) == 0
    assert _read(out / "audit_report.md") == report

    # Parallel execution merges identically.
    assert main(["audit", "--config", str(cfg), "--jobs", "2"]) == 0
    assert _read(out / "audit_report.md") == report


def test_audit_missing_dataset_names_path(tmp_path, capsys):
    cfg = _config(tmp_path, [
        {"name": "x", "runs": [{"dataset": str(tmp_path / "nowhere")}]},
    ])
    assert main(["audit", "--config", str(cfg)]) == 2
    assert "nowhere" in capsys.readouterr().err


def test_audit_requires_seed(tmp_path, capsys):
    ds = _gen(tmp_path, "independent")
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "output_dir": str(tmp_path / "out"),
        "scenarios": [{"name": "independent", "runs": [{"dataset": str(ds)}]}],
    }))
    assert main(["audit", "--config", str(path)]) == 2
    assert "seed" in capsys.readouterr().err


def test_audit_isolates_corrupt_scenario(tmp_path, capsys):
    good = _gen(tmp_path, "convention-pair")
    bad = _gen(tmp_path, "independent")
    episodes = bad / "episodes.jsonl"
    lines = episodes.read_text().splitlines()
    obj = json.loads(lines[0])
    obj["action"] = 99
    lines[0] = json.dumps(obj)
    episodes.write_text("\n".join(lines) + "\n")

    cfg = _config(tmp_path, [
        {"name": "good", "runs": [{"dataset": str(good)}]},
        {"name": "bad", "runs": [{"dataset": str(bad)}]},
    ])
    code = main(["audit", "--config", str(cfg), "--jobs", "1"])
    assert code == 2
    assert (tmp_path / "out" / "good.verdict.json").exists()
    assert not (tmp_path / "out" / "bad.verdict.json").exists()
    err = capsys.readouterr().err
    assert "bad" in err and "action out of range" in err


def test_audit_memory_rule_with_paired_returns(tmp_path):
    runs = []
    for seed in range(1, 6):
        ff = _gen(tmp_path, "memory-copy", seed=100 + seed, name=f"ff{seed}",
                  architecture="FF")
        rnn = _gen(tmp_path, "memory-copy", seed=100 + seed, name=f"rnn{seed}",
                   architecture="RNN")
        runs.append({"dataset": str(ff), "returns": [0.0]})
        runs.append({"dataset": str(rnn), "returns": [float(seed)]})
    cfg = _config(tmp_path, [{"name": "memory-copy", "runs": runs}])
    assert main(["audit", "--config", str(cfg), "--jobs", "1"]) == 0
    verdict = json.loads(_read(tmp_path / "out" / "memory-copy.verdict.json"))
    assert verdict["memory_benefit"] is True
    assert verdict["evidence"]["memory"]["p_value"] == pytest.approx(1 / 32)


def test_perturb_cli(tmp_path):
    ds = _gen(tmp_path, "reactive-copy")
    out0 = tmp_path / "noise0"
    assert main(["perturb", str(ds), "--scale", "0", "--seed", "3",
                 "--out", str(out0)]) == 0
    assert _read(out0 / "episodes.jsonl") == _read(ds / "episodes.jsonl")
    out5 = tmp_path / "noise5"
    assert main(["perturb", str(ds), "--scale", "0.5", "--seed", "3",
                 "--out", str(out5)]) == 0
    assert _read(out5 / "episodes.jsonl") != _read(ds / "episodes.jsonl")


def test_perturb_scale_out_of_range(tmp_path, capsys):
    ds = _gen(tmp_path, "reactive-copy")
    code = main(["perturb", str(ds), "--scale", "0.6", "--seed", "3",
                 "--out", str(tmp_path / "x")])
    assert code == 2
    assert "scale" in capsys.readouterr().err


def test_quantile_null_flag_accepted(tmp_path):
    ds = _gen(tmp_path, "independent", episodes=40, horizon=8)
    cfg = _config(tmp_path, [{"name": "independent", "runs": [{"dataset": str(ds)}]}])
    assert main(["audit", "--config", str(cfg), "--quantile-null", "--jobs", "1"]) == 0


def test_json_report_and_history_flag(tmp_path):
    ds = _gen(tmp_path, "lagged-follower", episodes=60, horizon=10)
    cfg = _config(tmp_path, [{"name": "lf", "runs": [{"dataset": str(ds)}]}])
    assert main(["audit", "--config", str(cfg), "--format", "json",
                 "--history", "window:2", "--jobs", "1"]) == 0
    doc = json.loads(_read(tmp_path / "out" / "audit_report.json"))
    assert doc["scenarios"][0]["scenario"] == "lf"
    assert doc["scenarios"][0]["temporal_coordination"] is True
    assert not (tmp_path / "out" / "audit_report.md").exists()


def test_bad_history_mode_rejected(tmp_path, capsys):
    ds = _gen(tmp_path, "independent", episodes=10, horizon=5)
    cfg = _config(tmp_path, [{"name": "independent", "runs": [{"dataset": str(ds)}]}])
    assert main(["audit", "--config", str(cfg), "--history", "sliding"]) == 2
    assert "history" in capsys.readouterr().err

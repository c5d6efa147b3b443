import json
from pathlib import Path

import numpy as np
import pytest

from voxevo.cli import ConfigError, aggregate, main, parse_config

TINY_CONFIG = {
    "methods": ["gat-local-transfer"],
    "task": "walker_lite",
    "seeds": [1],
    "evo": {
        "population_size": 2,
        "generations": 1,
        "elite_count": 1,
        "bounds": [2, 2],
        "episode_length": 16,
    },
    "ppo": {"steps_per_batch": 16, "total_updates": 1, "minibatch_size": 16},
}


def write_config(tmp_path, overrides=None, **extra):
    cfg = json.loads(json.dumps(TINY_CONFIG))
    cfg["output_dir"] = str(tmp_path / "out")
    if overrides:
        cfg.update(overrides)
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path, Path(cfg["output_dir"])


def test_smoke_run_produces_output_tree(tmp_path, capsys):
    config_path, out = write_config(tmp_path)
    assert main(["run", str(config_path)]) == 0
    run_dir = out / "gat-local-transfer" / "seed_1"
    assert (run_dir / "generations.csv").is_file()
    assert (run_dir / "events.jsonl").is_file()
    assert (run_dir / "best.npz").is_file()
    assert (run_dir / "best_genome.txt").is_file()
    assert (run_dir / "best_morphology.svg").is_file()
    assert list((run_dir / "training").glob("individual_*.csv"))
    agg = out / "aggregate"
    assert (agg / "gat-local-transfer.csv").is_file()
    assert (agg / "fitness.svg").is_file()
    rows = (agg / "gat-local-transfer.csv").read_text().splitlines()
    assert rows[0] == "generation,mean_best,std_best"
    assert float(rows[1].split(",")[2]) == 0.0  # single run: std is zero


def test_run_twice_byte_identical(tmp_path):
    config_path, out = write_config(tmp_path)
    assert main(["run", str(config_path), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(config_path), "--out", str(tmp_path / "b")]) == 0
    for rel in [
        "gat-local-transfer/seed_1/generations.csv",
        "gat-local-transfer/seed_1/events.jsonl",
        "aggregate/gat-local-transfer.csv",
        "aggregate/fitness.svg",
    ]:
        a = (tmp_path / "a" / rel).read_bytes()
        b = (tmp_path / "b" / rel).read_bytes()
        assert a == b, rel


def test_aggregate_arithmetic(tmp_path):
    # two seeds with best-fitness curves [1,2] and [3,4] -> mean [2,3], std [1,1]
    method_dir = tmp_path / "mlp-scratch"
    for seed, curve in ((1, [1.0, 2.0]), (2, [3.0, 4.0])):
        d = method_dir / f"seed_{seed}"
        d.mkdir(parents=True)
        lines = ["generation,best_fitness,mean_fitness,elite_ids"]
        for g, v in enumerate(curve, start=1):
            lines.append(f"{g},{v},{v},0")
        (d / "generations.csv").write_text("\n".join(lines) + "\n")
    aggregate(tmp_path)
    rows = (tmp_path / "aggregate" / "mlp-scratch.csv").read_text().splitlines()[1:]
    parsed = [tuple(float(x) for x in r.split(",")) for r in rows]
    assert parsed == [(1.0, 2.0, 1.0), (2.0, 3.0, 1.0)]


def test_invalid_json_exits_2_with_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "methods": [,]\n}\n')
    assert main(["run", str(path)]) == 2
    err = capsys.readouterr().err
    assert "config error at line 2" in err


def test_unknown_method_exits_2(tmp_path, capsys):
    path, _ = write_config(tmp_path, overrides={"methods": ["gat-mega-transfer"]})
    assert main(["run", str(path)]) == 2
    assert "gat-mega-transfer" in capsys.readouterr().err


def test_unknown_option_reports_line(tmp_path, capsys):
    path, _ = write_config(tmp_path, turbo=True)
    assert main(["run", str(path)]) == 2
    err = capsys.readouterr().err
    assert "turbo" in err and "config error at line" in err


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json")]) == 2


def test_bad_ppo_value_exits_2(tmp_path):
    path, _ = write_config(tmp_path, overrides={"ppo": {"clip_eps": -1.0}})
    assert main(["run", str(path)]) == 2


def test_parse_config_round_trip(tmp_path):
    path, out = write_config(tmp_path)
    cfg = parse_config(path.read_text())
    assert cfg.methods == ("gat-local-transfer",)
    assert cfg.seeds == (1,)
    assert cfg.evo.population_size == 2
    assert cfg.ppo.total_updates == 1


def test_replay_reproduces_recorded_return(tmp_path, capsys):
    config_path, out = write_config(tmp_path)
    assert main(["run", str(config_path)]) == 0
    run_dir = out / "gat-local-transfer" / "seed_1"
    replay_dir = tmp_path / "replay"
    code = main(
        [
            "replay",
            str(run_dir / "best.npz"),
            str(run_dir / "best_genome.txt"),
            "--task",
            "walker_lite",
            "--out",
            str(replay_dir),
            "--every",
            "4",
        ]
    )
    assert code == 0
    meta = json.loads(
        bytes(np.load(run_dir / "best.npz")["__meta__"]).decode()
    )["meta"]
    replayed = float((replay_dir / "replay_return.txt").read_text())
    assert replayed == meta["eval_return"]
    frames = sorted(replay_dir.glob("frame_*.svg"))
    assert len(frames) == int(np.ceil(16 / 4))
    assert (replay_dir / "trajectory.csv").read_text().splitlines()[0] == "step,reward,com_x,com_y"


def test_replay_identical_frames_on_rerun(tmp_path):
    config_path, out = write_config(tmp_path)
    assert main(["run", str(config_path)]) == 0
    run_dir = out / "gat-local-transfer" / "seed_1"
    args = [
        "replay",
        str(run_dir / "best.npz"),
        str(run_dir / "best_genome.txt"),
        "--task",
        "walker_lite",
    ]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    for f1 in sorted((tmp_path / "r1").iterdir()):
        f2 = tmp_path / "r2" / f1.name
        assert f1.read_bytes() == f2.read_bytes(), f1.name


def test_replay_key_mismatch_exits_2(tmp_path, capsys):
    config_path, out = write_config(tmp_path)
    assert main(["run", str(config_path)]) == 0
    run_dir = out / "gat-local-transfer" / "seed_1"
    other_genome = tmp_path / "other.txt"
    other_genome.write_text("1 1\n3\n")
    code = main(
        [
            "replay",
            str(run_dir / "best.npz"),
            str(other_genome),
            "--task",
            "walker_lite",
            "--out",
            str(tmp_path / "r"),
        ]
    )
    assert code == 2


def test_aggregate_missing_dir_exits_1(tmp_path, capsys):
    assert main(["aggregate", str(tmp_path / "empty")]) == 1


def test_config_error_carries_line_attribute():
    with pytest.raises(ConfigError) as info:
        parse_config("not json")
    assert info.value.line >= 1


def test_inline_founder_genome_in_config(tmp_path):
    founder = "2 2\n13\n22"
    path, out = write_config(
        tmp_path, overrides={"evo": dict(TINY_CONFIG["evo"], founders=[founder])}
    )
    assert main(["run", str(path)]) == 0
    events_path = out / "gat-local-transfer" / "seed_1" / "events.jsonl"
    first_birth = json.loads(events_path.read_text().splitlines()[0])
    assert first_birth["event"] == "birth"
    assert first_birth["genome"] == founder

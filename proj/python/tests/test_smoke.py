import json
import os
from pathlib import Path

import pytest

import ddl

ROOT = Path(os.environ.get("DDL_SOURCE_DIR", Path(__file__).resolve().parents[2]))
MAZE9 = str(ROOT / "mazes" / "smaze9.txt")


def test_environment_and_bfs():
    name, states, actions, deterministic = ddl.make_environment("corridor:5")
    assert states == 5 and actions == 5 and deterministic
    assert ddl.bfs_distances("corridor:5", 4) == [4.0, 3.0, 2.0, 1.0, 0.0]
    goal = ddl.Trainer(ddl.TrainerConfig(overrides={"env": MAZE9})).resolve_goal("8,7")
    assert ddl.bfs_distances(MAZE9, goal)[0] == 27.0


def test_config_errors_are_value_errors():
    with pytest.raises(ValueError, match="gamma"):
        ddl.TrainerConfig(overrides={"gamma": "1.5"})
    with pytest.raises(ValueError):
        ddl.TrainerConfig(overrides={"no_such_key": "1"})


def test_train_evaluate_and_heatmap():
    cfg = ddl.TrainerConfig(overrides={"env": MAZE9, "total_env_steps": "30000", "N_pi": "10"})
    trainer = ddl.Trainer(cfg)
    metrics = trainer.run().splitlines()
    assert trainer.env_steps == 30000
    assert json.loads(metrics[-1])["env_steps"] == 30000
    goal = trainer.goal
    result = trainer.evaluate(goal, 10)
    assert result.episodes == 10
    assert result.success_rate == 1.0
    rows = trainer.heatmap(goal).splitlines()
    assert len(rows) == 9
    states, mse = trainer.distance_error(goal)
    assert states > 0 and mse >= 0.0


def test_shipped_config_resolves_relative_paths():
    cfg = ddl.TrainerConfig(str(ROOT / "configs" / "smaze15_ddlfp.cfg"), {"total_env_steps": "12000"})
    trainer = ddl.Trainer(cfg, ROOT / "configs")
    trainer.run()
    assert trainer.queries_used == 2


def test_heatmap_needs_a_grid():
    trainer = ddl.Trainer(ddl.TrainerConfig(overrides={"env": "pathological:0.1", "total_env_steps": "200"}))
    trainer.run()
    with pytest.raises(NotImplementedError):
        trainer.heatmap(4)


def test_branch_analysis_crossover():
    rows, crossover = ddl.branch_analysis([0.1, 0.5])
    assert crossover == pytest.approx(1 - (1 - 0.99**2) / (0.99 * 20), rel=1e-12)
    assert all(r.greedy == 0 for r in rows)
    assert rows[0].cumulative == 1


def test_verify_suites():
    assert "appendixB" in ddl.suite_names()
    passed, lines = ddl.verify("appendixB", seeds=5)
    assert passed
    assert json.loads(lines[-1])["summary"] is True


def test_cli_exit_codes():
    code, out, _ = ddl.run_cli(["verify", "--suite", "gradcheck", "--seeds", "3"])
    assert code == 0 and json.loads(out.splitlines()[-1])["passed"]
    code, _, err = ddl.run_cli(["train", "--set", "gamma=1.5"])
    assert code == 1 and "gamma" in err

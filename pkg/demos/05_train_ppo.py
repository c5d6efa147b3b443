"""
PPO training of one controller
==============================

Trains a graph-attention actor/critic on a fixed body with the clipped
surrogate objective: collect whole episodes, estimate advantages with GAE,
take norm-clipped gradient steps. Fitness is the best episodic return seen
during training. Expect a couple of minutes.
"""
import csv
from pathlib import Path

import numpy as np

from voxevo import PpoConfig, TaskSpec, build_body, deserialize, rollout, train_individual
from voxevo.graph import FeatureMode
from voxevo.policy import ZeroPolicy, init_policy
from voxevo.ppo import evaluate_policy

out = Path(__file__).parent / "out"
out.mkdir(parents=True, exist_ok=True)

genome = deserialize("2 2\n21\n32")
task = TaskSpec("walker_lite", 256)
body = build_body(genome)

noop_return, _ = rollout(genome, ZeroPolicy(body.actuator_count), task,
                         rng=np.random.default_rng(0))
print(f"no-op settle return (baseline): {noop_return:+.5f}")

params = init_policy(body.actuator_keys, FeatureMode.LOCAL_TRANSFER, "gat",
                     np.random.default_rng(1))
log_rows = []
params, best = train_individual(
    genome, params, task, PpoConfig(total_updates=20),
    np.random.default_rng(2), log=log_rows.append,
)
greedy, _, _ = evaluate_policy(genome, params, task)

with open(out / "training_log.csv", "w", newline="") as fh:
    writer = csv.DictWriter(fh, fieldnames=list(log_rows[0]))
    writer.writeheader()
    writer.writerows(log_rows)

print(f"best episodic return during training: {best:+.5f}")
print(f"greedy (mean-action) return after training: {greedy:+.5f}")
print(f"per-update log in {out/'training_log.csv'}")

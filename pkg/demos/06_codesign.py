"""
Full co-design loop
===================

Morphology and controller evolve together: newborns train with PPO, the top
half survives untouched, dead slots refill with mutated elite children that
inherit their parent's weights through the topology-consistent mapping.
A small run (population 6, four generations) takes a few minutes.
"""
from pathlib import Path

import numpy as np

from voxevo import EvoConfig, MutationConfig, PpoConfig, run, serialize
from voxevo.render import fitness_plot_svg, morphology_svg

out = Path(__file__).parent / "out" / "codesign"
out.mkdir(parents=True, exist_ok=True)

evo = EvoConfig(
    population_size=6,
    generations=4,
    elite_count=3,
    bounds=(3, 3),
    episode_length=128,
    mutation=MutationConfig(per_cell_rate=0.1),
    seed=11,
)
ppo = PpoConfig(steps_per_batch=256, total_updates=4, epochs=3)

events = []
result = run(evo, ppo_cfg=ppo, sink=events.append)

print("generation | best fitness | mean fitness")
for rec in result.history:
    print(f"{rec.generation:10d} | {rec.best_fitness:12.4f} | {rec.mean_fitness:12.4f}")

births = [e for e in events if e["event"] == "birth" and e["parent_id"] is not None]
matched = sum(e["matched_actuators"] for e in births)
fresh = sum(e["new_actuators"] for e in births)
print(f"\n{len(births)} inheritance events: {matched} actuator rows reused, {fresh} fresh")

print(f"\nchampion (id {result.best.id}, fitness {result.best.fitness:.4f}):")
print(serialize(result.best.genome))
(out / "champion.svg").write_text(morphology_svg(result.best.genome))

curve = np.array([rec.best_fitness for rec in result.history])
(out / "fitness.svg").write_text(
    fitness_plot_svg({"gat-local-transfer": (curve, np.zeros_like(curve))})
)
print(f"artifacts in {out}/")

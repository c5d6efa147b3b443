"""
Voxel genomes
=============

A robot's body plan is a small grid of typed voxels: rigid, soft, horizontal
actuator, vertical actuator, or empty. This script builds a genome by hand,
mutates it a few times, and renders each stage to SVG.
"""
from pathlib import Path

import numpy as np

from voxevo import MutationConfig, deserialize, mutate, serialize, validate
from voxevo.render import morphology_svg

out = Path(__file__).parent / "out" / "morphology"
out.mkdir(parents=True, exist_ok=True)

# a 4x3 walker: rigid spine, soft belly, actuators at the corners
genome = deserialize(
    "4 3\n"
    "1111\n"
    "2222\n"
    "3243"
)
ok, reason = validate(genome)
print(f"hand-built genome valid: {ok} ({reason})")
print(serialize(genome))

(out / "gen_0.svg").write_text(morphology_svg(genome))

rng = np.random.default_rng(7)
cfg = MutationConfig(per_cell_rate=0.15)
for step in range(1, 6):
    genome = mutate(genome, cfg, rng)
    ok, _ = validate(genome)
    assert ok  # mutation never emits an invalid body
    (out / f"gen_{step}.svg").write_text(morphology_svg(genome))
    print(f"after mutation {step}:")
    print(serialize(genome))

print(f"\nSVG renders written to {out}/")

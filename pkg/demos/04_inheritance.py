"""
Topology-consistent weight inheritance
======================================

When a mutation changes the body, the child's controller is assembled from
the parent's: attention layers and MLP hidden layers copy over in full,
output rows follow their actuators (matched by lattice coordinate and type),
new actuators get small fresh rows, and removed actuators' rows are dropped.
The critic's scalar head always survives.
"""
import numpy as np

from voxevo import (
    FeatureMode,
    MutationConfig,
    TaskSpec,
    build_body,
    build_graph,
    deserialize,
    map_weights,
    match,
    mutate,
    observe,
    reset,
    serialize,
)
from voxevo.inherit import scratch_init

rng = np.random.default_rng(3)
parent_genome = deserialize("3 3\n222\n131\n343")
child_genome = mutate(parent_genome, MutationConfig(per_cell_rate=0.25), rng)
print("parent:")
print(serialize(parent_genome))
print("child after mutation:")
print(serialize(child_genome))


def graph_of(genome):
    body = build_body(genome)
    return build_graph(body, observe(reset(body, TaskSpec("walker_lite", 16))), FeatureMode.LOCAL_TRANSFER)


parent_g, child_g = graph_of(parent_genome), graph_of(child_genome)
corr = match(parent_g, child_g)
print(f"\nactuators: {corr.matched_actuators} matched, "
      f"{corr.new_actuators} new, {corr.removed_actuators} removed")

parent = scratch_init(parent_g, "gat", rng)
child = map_weights(parent, corr, child_g, rng)

copied = np.array_equal(child.actor_gat.w_self, parent.actor_gat.w_self)
print(f"attention layer copied bit-exactly: {copied}")
for child_idx, parent_idx in enumerate(corr.actuator_map):
    row = child.actor_head.out_w[child_idx]
    if parent_idx is not None:
        same = np.array_equal(row, parent.actor_head.out_w[parent_idx])
        print(f"actuator {child_idx} at {child.actuator_keys[child_idx][0]}: "
              f"inherited row (bit-equal: {same})")
    else:
        print(f"actuator {child_idx} at {child.actuator_keys[child_idx][0]}: "
              f"fresh row, |w| = {np.abs(row).max():.4f} (small-gain init)")
print(f"critic head copied: {np.array_equal(child.critic_head.out_w, parent.critic_head.out_w)}")

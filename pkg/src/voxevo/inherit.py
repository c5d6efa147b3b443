"""Parent-to-child controller transfer across morphology mutations.

Correspondence matches child nodes and actuators to parent ones by exact
lattice coordinate (actuators additionally require equal voxel type, since a
horizontal actuator's learned output row drives horizontal springs).
``map_weights`` then copies every shared layer bit-exactly, copies output
rows for matched actuators, freshly initializes rows for new actuators, and
drops rows of removed ones; the critic's scalar head is always copied.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import FeatureMode, RobotGraph
from .policy import (
    DEFAULT_LOG_STD,
    KIND_GAT,
    KIND_MLP,
    GatLayerParams,
    MlpHeadParams,
    PolicyParams,
    _fresh_out_row,
    clone_params,
    init_policy,
)


@dataclass(frozen=True)
class Correspondence:
    """Child-to-parent index maps; None marks entries with no parent match."""

    node_map: tuple  # child node index -> parent node index | None
    actuator_map: tuple  # child actuator index -> parent actuator index | None
    parent_actuator_keys: tuple
    child_actuator_keys: tuple

    @property
    def matched_actuators(self) -> int:
        return sum(1 for m in self.actuator_map if m is not None)

    @property
    def new_actuators(self) -> int:
        return sum(1 for m in self.actuator_map if m is None)

    @property
    def removed_actuators(self) -> int:
        return len(self.parent_actuator_keys) - self.matched_actuators


def match(parent_g: RobotGraph, child_g: RobotGraph) -> Correspondence:
    """Spatial matching on the shared lattice frame."""
    parent_nodes = {key: i for i, key in enumerate(parent_g.node_keys)}
    node_map = tuple(parent_nodes.get(key) for key in child_g.node_keys)
    parent_acts = {key: i for i, key in enumerate(parent_g.actuator_keys)}
    actuator_map = tuple(parent_acts.get(key) for key in child_g.actuator_keys)
    return Correspondence(
        node_map=node_map,
        actuator_map=actuator_map,
        parent_actuator_keys=tuple(parent_g.actuator_keys),
        child_actuator_keys=tuple(child_g.actuator_keys),
    )


def _copy_gat(layer: GatLayerParams | None) -> GatLayerParams | None:
    if layer is None:
        return None
    return GatLayerParams(
        layer.w_self.copy(), layer.w_edge.copy(), layer.attn.copy(), layer.leaky_slope
    )


def _copy_hidden(head: MlpHeadParams) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(w.copy(), b.copy()) for w, b in head.hidden]


def map_weights(
    parent: PolicyParams,
    corr: Correspondence,
    child_g: RobotGraph,
    rng: np.random.Generator,
) -> PolicyParams:
    """Build child params from a parent; depends only on keys, never features."""
    if tuple(corr.child_actuator_keys) != tuple(child_g.actuator_keys):
        raise ValueError("correspondence does not describe this child graph")
    if parent.kind == KIND_GAT:
        return _map_gat(parent, corr, rng)
    if parent.kind == KIND_MLP:
        return _map_mlp(parent, corr, rng)
    raise ValueError(f"unknown policy kind {parent.kind!r}")


def _map_gat(
    parent: PolicyParams, corr: Correspondence, rng: np.random.Generator
) -> PolicyParams:
    fan_in = parent.actor_head.out_w.shape[1]
    rows, biases, log_stds = [], [], []
    for child_idx, parent_idx in enumerate(corr.actuator_map):
        if parent_idx is not None:
            rows.append(parent.actor_head.out_w[parent_idx].copy())
            biases.append(float(parent.actor_head.out_b[parent_idx]))
            log_stds.append(float(parent.actor_head.log_std[parent_idx]))
        else:
            rows.append(_fresh_out_row(rng, fan_in))
            biases.append(0.0)
            log_stds.append(DEFAULT_LOG_STD)
    actor_head = MlpHeadParams(
        hidden=_copy_hidden(parent.actor_head),
        out_w=np.array(rows),
        out_b=np.array(biases),
        log_std=np.array(log_stds),
    )
    critic_head = MlpHeadParams(
        hidden=_copy_hidden(parent.critic_head),
        out_w=parent.critic_head.out_w.copy(),
        out_b=parent.critic_head.out_b.copy(),
        log_std=None,
    )
    return PolicyParams(
        kind=KIND_GAT,
        feature_mode=parent.feature_mode,
        actuator_keys=tuple(corr.child_actuator_keys),
        actor_gat=_copy_gat(parent.actor_gat),
        actor_head=actor_head,
        critic_gat=_copy_gat(parent.critic_gat),
        critic_head=critic_head,
    )


def _map_mlp(
    parent: PolicyParams, corr: Correspondence, rng: np.random.Generator
) -> PolicyParams:
    """Flat-index transfer: output slot i is copied only when the parent's
    i-th actuator key equals the child's i-th actuator key."""
    child = clone_params(parent)
    child.actuator_keys = tuple(corr.child_actuator_keys)
    fan_in = parent.actor_head.out_w.shape[1]
    p_keys = corr.parent_actuator_keys
    c_keys = corr.child_actuator_keys
    for slot in range(parent.max_actuators):
        matched = (
            slot < len(p_keys)
            and slot < len(c_keys)
            and p_keys[slot] == c_keys[slot]
        )
        if not matched:
            child.actor_head.out_w[slot] = _fresh_out_row(rng, fan_in)
            child.actor_head.out_b[slot] = 0.0
            child.actor_head.log_std[slot] = DEFAULT_LOG_STD
    return child


def scratch_init(
    child_g: RobotGraph,
    kind: str,
    rng: np.random.Generator,
    mode: FeatureMode = FeatureMode.LOCAL_TRANSFER,
    bounds: tuple[int, int] = (5, 5),
) -> PolicyParams:
    """Fully fresh controller for a graph (no inheritance)."""
    return init_policy(tuple(child_g.actuator_keys), mode, kind, rng, bounds)

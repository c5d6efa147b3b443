import dataclasses

import numpy as np
from voxevo.graph import FeatureMode, build_graph, graph_hash
from voxevo.inherit import map_weights, match, scratch_init
from voxevo.morpho import MorphGenome, MutationConfig, VoxelType, mutate, random_genome
from voxevo.policy import (
    KIND_GAT,
    KIND_MLP,
    actor_forward,
    critic_forward,
    init_policy,
    mlp_baseline_forward,
    named_arrays,
)
from voxevo.sim import TaskSpec, build_body, observe, reset, step

E, R, S, H, V = (
    VoxelType.EMPTY,
    VoxelType.RIGID,
    VoxelType.SOFT,
    VoxelType.H_ACTUATOR,
    VoxelType.V_ACTUATOR,
)
WALKER = TaskSpec("walker_lite", 16)
MODE = FeatureMode.LOCAL_TRANSFER


def graph_for(genome):
    body = build_body(genome)
    return build_graph(body, observe(reset(body, WALKER)), MODE)


def random_observation_graph(genome, rng):
    body = build_body(genome)
    state = reset(body, WALKER)
    for _ in range(int(rng.integers(1, 10))):
        state, _ = step(state, rng.uniform(-1, 1, body.actuator_count))
    return build_graph(body, observe(state), MODE)


def test_match_identity():
    g = graph_for(MorphGenome(2, 2, (H, S, V, R)))
    corr = match(g, g)
    assert corr.node_map == tuple(range(g.node_count))
    assert corr.actuator_map == tuple(range(len(g.actuator_keys)))
    assert corr.matched_actuators == len(g.actuator_keys)
    assert corr.new_actuators == 0 and corr.removed_actuators == 0


def test_match_voxel_added_hand_case():
    # 1x2 -> 1x3 growth: the two new rightmost vertices have no parent
    parent = graph_for(MorphGenome(3, 1, (H, S, E)))
    child = graph_for(MorphGenome(3, 1, (H, S, S)))
    corr = match(parent, child)
    parent_keys = set(parent.node_keys)
    for child_idx, parent_idx in enumerate(corr.node_map):
        key = child.node_keys[child_idx]
        if key in parent_keys:
            assert parent.node_keys[parent_idx] == key
        else:
            assert parent_idx is None
    assert sum(1 for m in corr.node_map if m is None) == 2
    assert corr.actuator_map == (0,)


def test_match_actuator_type_flip_unmatched():
    parent = graph_for(MorphGenome(2, 1, (H, H)))
    child = graph_for(MorphGenome(2, 1, (H, V)))
    corr = match(parent, child)
    assert corr.actuator_map == (0, None)
    assert corr.matched_actuators == 1
    assert corr.new_actuators == 1
    assert corr.removed_actuators == 1


def test_match_is_injective():
    rng = np.random.default_rng(0)
    for _ in range(20):
        parent = graph_for(random_genome(rng, 4, 4))
        child = graph_for(random_genome(rng, 4, 4))
        corr = match(parent, child)
        matched = [m for m in corr.node_map if m is not None]
        assert len(matched) == len(set(matched))


def test_identity_inheritance_bit_exact():
    rng = np.random.default_rng(1)
    genome = random_genome(rng, 3, 3)
    g = graph_for(genome)
    parent = init_policy(g.actuator_keys, MODE, KIND_GAT, rng)
    child = map_weights(parent, match(g, g), g, rng)
    ref = dict(named_arrays(parent))
    for name, arr in named_arrays(child):
        np.testing.assert_array_equal(arr, ref[name], err_msg=name)
    assert graph_hash(g) == graph_hash(g)
    obs_g = random_observation_graph(genome, rng)
    np.testing.assert_array_equal(
        actor_forward(child, obs_g).mean, actor_forward(parent, obs_g).mean
    )
    assert critic_forward(child, obs_g) == critic_forward(parent, obs_g)


def test_removed_actuator_keeps_surviving_rows():
    rng = np.random.default_rng(2)
    parent_genome = MorphGenome(2, 1, (H, V))
    child_genome = MorphGenome(2, 1, (H, S))  # V actuator becomes soft
    pg, cg = graph_for(parent_genome), graph_for(child_genome)
    parent = init_policy(pg.actuator_keys, MODE, KIND_GAT, rng)
    child = map_weights(parent, match(pg, cg), cg, rng)
    assert child.actor_head.out_w.shape[0] == 1  # removed row is absent
    np.testing.assert_array_equal(child.actor_head.out_w[0], parent.actor_head.out_w[0])
    np.testing.assert_array_equal(child.actor_head.out_b[0], parent.actor_head.out_b[0])
    np.testing.assert_array_equal(child.actor_head.log_std[0], parent.actor_head.log_std[0])
    np.testing.assert_array_equal(
        child.critic_head.out_w, parent.critic_head.out_w
    )
    for (w, b), (pw, pb) in zip(child.actor_head.hidden, parent.actor_head.hidden):
        np.testing.assert_array_equal(w, pw)
        np.testing.assert_array_equal(b, pb)


def test_added_actuator_gets_fresh_row():
    rng = np.random.default_rng(3)
    parent_genome = MorphGenome(2, 1, (H, S))
    child_genome = MorphGenome(2, 1, (H, V))
    pg, cg = graph_for(parent_genome), graph_for(child_genome)
    parent = init_policy(pg.actuator_keys, MODE, KIND_GAT, rng)
    child = map_weights(parent, match(pg, cg), cg, rng)
    assert child.actor_head.out_w.shape[0] == 2
    np.testing.assert_array_equal(child.actor_head.out_w[0], parent.actor_head.out_w[0])
    fresh = child.actor_head.out_w[1]
    for row in parent.actor_head.out_w:
        assert not np.array_equal(fresh, row)


def test_critic_head_copied_for_every_inheritance():
    rng = np.random.default_rng(4)
    cfg = MutationConfig(per_cell_rate=0.3)
    parent_genome = random_genome(rng, 4, 4)
    for _ in range(25):
        child_genome = mutate(parent_genome, cfg, rng)
        pg, cg = graph_for(parent_genome), graph_for(child_genome)
        parent = init_policy(pg.actuator_keys, MODE, KIND_GAT, rng)
        child = map_weights(parent, match(pg, cg), cg, rng)
        np.testing.assert_array_equal(child.critic_head.out_w, parent.critic_head.out_w)
        np.testing.assert_array_equal(child.critic_head.out_b, parent.critic_head.out_b)
        np.testing.assert_array_equal(child.critic_gat.w_self, parent.critic_gat.w_self)
        parent_genome = child_genome


def test_map_weights_ignores_node_features():
    rng = np.random.default_rng(5)
    parent_genome = random_genome(rng, 3, 3)
    child_genome = mutate(parent_genome, MutationConfig(per_cell_rate=0.2), rng)
    pg, cg = graph_for(parent_genome), graph_for(child_genome)
    parent = init_policy(pg.actuator_keys, MODE, KIND_GAT, rng)
    corr = match(pg, cg)
    feature_rng = np.random.default_rng(6)
    cg_scrambled = dataclasses.replace(
        cg, node_features=feature_rng.standard_normal(cg.node_features.shape)
    )
    a = map_weights(parent, corr, cg, np.random.default_rng(7))
    b = map_weights(parent, corr, cg_scrambled, np.random.default_rng(7))
    ref = dict(named_arrays(a))
    for name, arr in named_arrays(b):
        np.testing.assert_array_equal(arr, ref[name], err_msg=name)


def test_map_weights_mlp_slot_alignment():
    rng = np.random.default_rng(8)
    parent_genome = MorphGenome(2, 2, (H, V, S, H))  # actuator slots: H, V, H
    child_genome = MorphGenome(2, 2, (H, S, S, H))  # slots: H, H -> slot 1 differs
    pg, cg = graph_for(parent_genome), graph_for(child_genome)
    parent = init_policy(pg.actuator_keys, MODE, KIND_MLP, rng)
    child = map_weights(parent, match(pg, cg), cg, rng)
    # slot 0: both have H at (0,0) -> copied
    np.testing.assert_array_equal(child.actor_head.out_w[0], parent.actor_head.out_w[0])
    # slot 1: parent V at (1,0) vs child H at (1,1) -> reinitialized
    assert not np.array_equal(child.actor_head.out_w[1], parent.actor_head.out_w[1])
    # hidden layers and critic copied wholesale
    for (w, _), (pw, _) in zip(child.actor_head.hidden, parent.actor_head.hidden):
        np.testing.assert_array_equal(w, pw)
    np.testing.assert_array_equal(child.critic_head.out_w, parent.critic_head.out_w)


def test_mlp_identity_inheritance_preserves_outputs():
    rng = np.random.default_rng(9)
    genome = random_genome(rng, 3, 3)
    g = graph_for(genome)
    parent = init_policy(g.actuator_keys, MODE, KIND_MLP, rng)
    child = map_weights(parent, match(g, g), g, rng)
    body = build_body(genome)
    obs = observe(reset(body, WALKER))
    np.testing.assert_array_equal(
        mlp_baseline_forward(child, obs).mean, mlp_baseline_forward(parent, obs).mean
    )


def test_map_weights_does_not_mutate_parent():
    rng = np.random.default_rng(10)
    genome = random_genome(rng, 3, 3)
    g = graph_for(genome)
    parent = init_policy(g.actuator_keys, MODE, KIND_GAT, rng)
    snapshot = [arr.copy() for _, arr in named_arrays(parent)]
    child = map_weights(parent, match(g, g), g, rng)
    child.actor_head.hidden[0][0][:] = 999.0
    child.actor_gat.w_self[:] = -999.0
    for (name, arr), ref in zip(named_arrays(parent), snapshot):
        np.testing.assert_array_equal(arr, ref, err_msg=name)


def test_scratch_init_determinism_and_shapes():
    rng_a = np.random.default_rng(11)
    rng_b = np.random.default_rng(11)
    rng_c = np.random.default_rng(12)
    g = graph_for(MorphGenome(2, 1, (H, V)))
    a = scratch_init(g, KIND_GAT, rng_a)
    b = scratch_init(g, KIND_GAT, rng_b)
    c = scratch_init(g, KIND_GAT, rng_c)
    ref = dict(named_arrays(a))
    for name, arr in named_arrays(b):
        np.testing.assert_array_equal(arr, ref[name])
    assert any(
        not np.array_equal(arr, ref[name]) for name, arr in named_arrays(c)
    )
    assert a.actor_head.out_w.shape[0] == len(g.actuator_keys)


def test_matched_head_preservation_bulk():
    rng = np.random.default_rng(13)
    cfg = MutationConfig(per_cell_rate=0.15)
    for _ in range(50):
        parent_genome = random_genome(rng, 4, 4)
        child_genome = mutate(parent_genome, cfg, rng)
        pg, cg = graph_for(parent_genome), graph_for(child_genome)
        parent = init_policy(pg.actuator_keys, MODE, KIND_GAT, rng)
        corr = match(pg, cg)
        child = map_weights(parent, corr, cg, rng)
        for child_idx, parent_idx in enumerate(corr.actuator_map):
            if parent_idx is not None:
                np.testing.assert_array_equal(
                    child.actor_head.out_w[child_idx],
                    parent.actor_head.out_w[parent_idx],
                )
            else:
                for row in parent.actor_head.out_w:
                    assert not np.array_equal(child.actor_head.out_w[child_idx], row)

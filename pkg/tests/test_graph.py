import numpy as np

from voxevo.graph import (
    FeatureMode,
    build_graph,
    build_structure,
    dump_edges,
    graph_hash,
    permute_graph,
)
from voxevo.morpho import MorphGenome, VoxelType, random_genome
from voxevo.sim import TaskSpec, build_body, observe, reset

E, R, S, H, V = (
    VoxelType.EMPTY,
    VoxelType.RIGID,
    VoxelType.SOFT,
    VoxelType.H_ACTUATOR,
    VoxelType.V_ACTUATOR,
)

WALKER = TaskSpec("walker_lite", 16)


def graph_for(genome, mode=FeatureMode.LOCAL_TRANSFER):
    body = build_body(genome)
    obs = observe(reset(body, WALKER))
    return build_graph(body, obs, mode)


def test_single_voxel_edge_count():
    g = graph_for(MorphGenome(1, 1, (H,)))
    assert g.node_count == 4
    # 4 adjacent undirected pairs * 2 directions + 4 self-loops
    assert g.edge_count == 12
    self_loops = (g.edge_src == g.edge_dst).sum()
    assert self_loops == 4


def test_self_loop_feature_is_zero():
    g = graph_for(MorphGenome(1, 1, (H,)))
    loops = g.edge_src == g.edge_dst
    np.testing.assert_array_equal(g.edge_features[loops], 0.0)


def test_edge_antisymmetry():
    g = graph_for(random_genome(np.random.default_rng(0), 3, 3))
    feats = {(int(s), int(d)): tuple(f) for s, d, f in zip(g.edge_src, g.edge_dst, g.edge_features)}
    for (s, d), f in feats.items():
        assert feats[(d, s)] == (-f[0], -f[1])


def test_edges_connect_lattice_adjacent_only():
    g = graph_for(random_genome(np.random.default_rng(1), 4, 4))
    for s, d in zip(g.edge_src, g.edge_dst):
        (c1, r1), (c2, r2) = g.node_keys[int(s)], g.node_keys[int(d)]
        assert abs(c1 - c2) + abs(r1 - r2) in (0, 1)


def test_node_count_matches_body():
    rng = np.random.default_rng(2)
    for _ in range(10):
        genome = random_genome(rng, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        body = build_body(genome)
        g = build_graph(body, observe(reset(body, WALKER)), FeatureMode.LOCAL_TRANSFER)
        assert g.node_count == body.point_count


def test_global_transfer_rows_identical():
    g = graph_for(random_genome(np.random.default_rng(3), 3, 3), FeatureMode.GLOBAL_TRANSFER)
    np.testing.assert_array_equal(g.node_features, np.tile(g.node_features[0], (g.node_count, 1)))


def test_global_transfer_per_node_block_rank_one():
    g = graph_for(random_genome(np.random.default_rng(4), 3, 3), FeatureMode.GLOBAL_TRANSFER)
    assert np.linalg.matrix_rank(g.node_features[:, 4:]) <= 1


def test_local_transfer_rest_rows_differ_only_in_position():
    # uniform-material body at rest: same histogram, zero velocity
    g = graph_for(MorphGenome(2, 1, (H, H)))
    rows = g.node_features
    np.testing.assert_array_equal(rows[:, :4], np.tile(rows[0, :4], (g.node_count, 1)))
    np.testing.assert_array_equal(rows[:, 6:8], 0.0)  # velocities
    assert len({tuple(r) for r in rows[:, 4:6]}) == g.node_count  # positions differ


def test_graph_hash_ignores_node_order():
    g = graph_for(random_genome(np.random.default_rng(5), 3, 3))
    perm = np.random.default_rng(6).permutation(g.node_count)
    assert graph_hash(g) == graph_hash(permute_graph(g, perm))


def test_graph_hash_detects_extra_voxel():
    a = graph_for(MorphGenome(2, 1, (H, E)))
    b = graph_for(MorphGenome(2, 1, (H, S)))
    assert graph_hash(a) != graph_hash(b)


def test_graph_hash_detects_actuator_type_flip():
    a = graph_for(MorphGenome(1, 1, (H,)))
    b = graph_for(MorphGenome(1, 1, (V,)))
    assert graph_hash(a) != graph_hash(b)


def test_graph_hash_ignores_features():
    genome = MorphGenome(2, 1, (H, S))
    a = graph_for(genome, FeatureMode.LOCAL_TRANSFER)
    b = graph_for(genome, FeatureMode.GLOBAL_TRANSFER)
    assert graph_hash(a) == graph_hash(b)


def test_structure_matches_graph_hash():
    genome = random_genome(np.random.default_rng(7), 3, 2)
    body = build_body(genome)
    assert graph_hash(build_structure(body)) == graph_hash(graph_for(genome))


def test_edges_sorted_by_destination():
    g = graph_for(random_genome(np.random.default_rng(8), 3, 3))
    assert (np.diff(g.edge_dst) >= 0).all()


def test_dump_edges_fixture_format():
    g = graph_for(MorphGenome(1, 1, (H,)))
    lines = dump_edges(g).splitlines()
    assert len(lines) == g.edge_count
    assert lines[0] == "(0, 0) -> (0, 0) (0, 0)"
    assert "(1, 0) -> (0, 0) (-1, 0)" in lines

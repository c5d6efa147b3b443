"""Robot graphs: lattice-vertex nodes, adjacency edges, feature assembly.

Nodes are the body's point masses in the same order. Directed edges join
lattice-adjacent vertices in both directions, plus one self-loop per node;
edge features are lattice offsets (dx, dy) with y up. Node features carry
the observation in one of two layouts: per-node (local transfer) or the
node-mean broadcast to every node (global transfer).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .sim import GLOBAL_FEATURES, NODE_FEATURES, Observation, RobotBody

FEATURE_DIM = GLOBAL_FEATURES + NODE_FEATURES


class FeatureMode(str, Enum):
    GLOBAL_TRANSFER = "global_transfer"
    LOCAL_TRANSFER = "local_transfer"


@dataclass(frozen=True)
class RobotGraph:
    node_keys: tuple[tuple[int, int], ...]  # lattice (col, row) per node
    node_features: np.ndarray  # (N, FEATURE_DIM)
    edge_src: np.ndarray  # (E,) int
    edge_dst: np.ndarray  # (E,) int, non-decreasing
    edge_features: np.ndarray  # (E, 2) lattice offsets
    actuator_keys: tuple  # ((col, row), VoxelType) in canonical order

    @property
    def node_count(self) -> int:
        return len(self.node_keys)

    @property
    def edge_count(self) -> int:
        return self.edge_src.shape[0]


@dataclass(frozen=True)
class GraphStructure:
    """Feature-independent part of a graph; fixed for a given body."""

    node_keys: tuple[tuple[int, int], ...]
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_features: np.ndarray
    actuator_keys: tuple


def build_structure(body: RobotBody) -> GraphStructure:
    index = {k: i for i, k in enumerate(body.node_keys)}
    src, dst, feats = [], [], []
    # edges grouped by destination so attention segments are contiguous
    for i, (c, r) in enumerate(body.node_keys):
        incoming = [i]  # self-loop
        for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            neighbor = index.get((c + dc, r + dr))
            if neighbor is not None:
                incoming.append(neighbor)
        for s in sorted(incoming):
            sc, sr = body.node_keys[s]
            src.append(s)
            dst.append(i)
            feats.append((c - sc, -(r - sr)))  # dy points up
    return GraphStructure(
        node_keys=body.node_keys,
        edge_src=np.array(src, dtype=np.int64),
        edge_dst=np.array(dst, dtype=np.int64),
        edge_features=np.array(feats, dtype=np.float64),
        actuator_keys=body.actuator_keys,
    )


def feature_matrix(obs: Observation, mode: FeatureMode) -> np.ndarray:
    """(N, 12) node feature rows: global block then per-node block."""
    n = obs.node_feats.shape[0]
    if mode == FeatureMode.GLOBAL_TRANSFER:
        local = np.tile(obs.node_feats.mean(axis=0), (n, 1))
    else:
        local = obs.node_feats
    return np.concatenate([np.tile(obs.global_feats, (n, 1)), local], axis=1)


def build_graph(body: RobotBody, obs: Observation, mode: FeatureMode) -> RobotGraph:
    if obs.node_feats.shape[0] != body.point_count:
        raise ValueError("observation does not match body")
    s = build_structure(body)
    return RobotGraph(
        node_keys=s.node_keys,
        node_features=feature_matrix(obs, mode),
        edge_src=s.edge_src,
        edge_dst=s.edge_dst,
        edge_features=s.edge_features,
        actuator_keys=s.actuator_keys,
    )


def graph_from_structure(s: GraphStructure, features: np.ndarray) -> RobotGraph:
    return RobotGraph(
        node_keys=s.node_keys,
        node_features=features,
        edge_src=s.edge_src,
        edge_dst=s.edge_dst,
        edge_features=s.edge_features,
        actuator_keys=s.actuator_keys,
    )


def graph_hash(g: RobotGraph | GraphStructure) -> str:
    """Canonical topology key: equal iff node-key set, edge set (in key
    space), and actuator key sequence are equal. Features are excluded."""
    nodes = sorted(g.node_keys)
    edges = sorted(
        (g.node_keys[int(s)], g.node_keys[int(d)])
        for s, d in zip(g.edge_src, g.edge_dst)
    )
    actuators = [(tuple(coord), int(vtype)) for coord, vtype in g.actuator_keys]
    blob = repr((nodes, edges, actuators)).encode()
    return hashlib.sha256(blob).hexdigest()


def permute_graph(g: RobotGraph, perm: np.ndarray) -> RobotGraph:
    """Relabel nodes so new node ``perm[i]`` is old node ``i``; edges are
    re-sorted by destination. Used by equivariance tests."""
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    new_keys = tuple(g.node_keys[int(inv[i])] for i in range(perm.size))
    src = perm[g.edge_src]
    dst = perm[g.edge_dst]
    order = np.lexsort((src, dst))
    return RobotGraph(
        node_keys=new_keys,
        node_features=g.node_features[inv],
        edge_src=src[order],
        edge_dst=dst[order],
        edge_features=g.edge_features[order],
        actuator_keys=g.actuator_keys,
    )


def dump_edges(g: RobotGraph | GraphStructure) -> str:
    """Edge list as text, one "src_key -> dst_key (dx, dy)" line per edge."""
    lines = []
    for s, d, f in zip(g.edge_src, g.edge_dst, g.edge_features):
        lines.append(
            f"{g.node_keys[int(s)]} -> {g.node_keys[int(d)]} "
            f"({f[0]:g}, {f[1]:g})"
        )
    return "\n".join(lines)

"""2D mass-spring soft-body simulator for voxel robots.

Voxels become shared lattice vertices (point masses) joined by edge and
diagonal springs. Actuator voxels rescale the rest length of their
axis-aligned springs from a continuous command in [-1, 1]. Integration is
semi-implicit Euler with gravity, ground contact at y=0 (normal clamp plus
Coulomb-style friction), and per-spring damping.

World frame: x right, y up, ground at y=0. Lattice vertex (col, row) sits at
(col * edge, (grid_height - row) * edge) so the bottom of the grid rests on
the ground.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .morpho import MorphGenome, VoxelType, validate

WALKER_LITE = "walker_lite"
PUSHER_LITE = "pusher_lite"
TASK_NAMES = (WALKER_LITE, PUSHER_LITE)

AXIS_H = 0
AXIS_V = 1
AXIS_D = 2

#: rest-length scale factor bounds for actuated springs
ACTUATION_MIN = 0.6
ACTUATION_MAX = 1.6

GLOBAL_FEATURES = 4
NODE_FEATURES = 8


@dataclass(frozen=True)
class SimConfig:
    """Physical constants; defaults chosen to stay stable at dt=0.01."""

    voxel_edge: float = 0.1
    voxel_mass: float = 0.25
    stiffness_rigid: float = 400.0
    stiffness_soft: float = 80.0
    stiffness_actuator: float = 150.0
    damping: float = 2.0
    friction: float = 0.8
    gravity: float = 9.8
    dt: float = 0.01
    episode_length: int = 256
    contact_stiffness: float = 400.0
    box_gap: float = 0.1

    def stiffness_for(self, vtype: VoxelType) -> float:
        if vtype == VoxelType.RIGID:
            return self.stiffness_rigid
        if vtype == VoxelType.SOFT:
            return self.stiffness_soft
        return self.stiffness_actuator


DEFAULT_SIM = SimConfig()


@dataclass(frozen=True)
class TaskSpec:
    name: str
    episode_length: int = 256

    def __post_init__(self):
        if self.name not in TASK_NAMES:
            raise ValueError(f"unknown task {self.name!r}; expected one of {TASK_NAMES}")
        if self.episode_length < 0:
            raise ValueError("episode_length must be non-negative")


@dataclass
class RobotBody:
    """Static structure built from one genome.

    Vertices are deduplicated lattice corners of non-empty voxels, ordered by
    (row, col). Springs are deduplicated voxel edges plus two diagonals per
    voxel. ``actuator_keys`` is the canonical row-major actuator ordering.
    """

    positions: np.ndarray  # (P, 2) rest positions, meters
    masses: np.ndarray  # (P,)
    spring_i: np.ndarray  # (S,) int
    spring_j: np.ndarray  # (S,) int
    rest: np.ndarray  # (S,)
    stiffness: np.ndarray  # (S,)
    damping: np.ndarray  # (S,)
    axis: np.ndarray  # (S,) int: AXIS_H / AXIS_V / AXIS_D
    actuated_by: np.ndarray  # (S,) int actuator index, -1 if passive
    node_keys: tuple[tuple[int, int], ...]  # lattice (col, row) per vertex
    actuator_keys: tuple[tuple[tuple[int, int], VoxelType], ...]
    type_histogram: np.ndarray  # (P, 4) normalized incident voxel types

    @property
    def point_count(self) -> int:
        return self.positions.shape[0]

    @property
    def actuator_count(self) -> int:
        return len(self.actuator_keys)


def _voxel_corners(c: int, r: int) -> tuple[tuple[int, int], ...]:
    return ((c, r), (c + 1, r), (c, r + 1), (c + 1, r + 1))


def build_body(genome: MorphGenome, cfg: SimConfig = DEFAULT_SIM) -> RobotBody:
    """Assemble point masses and springs for a valid genome."""
    ok, reason = validate(genome)
    if not ok:
        raise ValueError(f"invalid genome: {reason}")

    occupied = genome.occupied()
    keys = sorted({corner for cell in occupied for corner in _voxel_corners(*cell)},
                  key=lambda k: (k[1], k[0]))
    index = {k: i for i, k in enumerate(keys)}
    n = len(keys)

    positions = np.zeros((n, 2))
    for (c, r), i in index.items():
        positions[i] = (c * cfg.voxel_edge, (genome.height - r) * cfg.voxel_edge)

    masses = np.zeros(n)
    hist = np.zeros((n, 4))
    for c, r in occupied:
        vtype = genome.cell(c, r)
        for corner in _voxel_corners(c, r):
            masses[index[corner]] += cfg.voxel_mass / 4.0
            hist[index[corner], int(vtype) - 1] += 1.0
    hist /= hist.sum(axis=1, keepdims=True)

    # springs: dict keyed by vertex index pair, so shared edges collapse;
    # the stiffer incident material wins on a shared edge. Rest lengths are
    # measured from the build pose so it is an exact equilibrium.
    springs: dict[tuple[int, int], list] = {}

    def add_spring(a, b, k, ax):
        key = (min(a, b), max(a, b))
        entry = springs.get(key)
        if entry is None:
            length = float(np.sqrt(((positions[a] - positions[b]) ** 2).sum()))
            springs[key] = [length, k, ax, -1]
        else:
            entry[1] = max(entry[1], k)

    for c, r in occupied:
        k = cfg.stiffness_for(genome.cell(c, r))
        tl, tr, bl, br = (index[p] for p in _voxel_corners(c, r))
        add_spring(tl, tr, k, AXIS_H)
        add_spring(bl, br, k, AXIS_H)
        add_spring(tl, bl, k, AXIS_V)
        add_spring(tr, br, k, AXIS_V)
        add_spring(tl, br, k, AXIS_D)
        add_spring(tr, bl, k, AXIS_D)

    # actuators claim their axis-aligned springs in row-major order;
    # a spring already claimed stays with the earlier actuator
    actuator_keys = tuple(genome.actuators())
    for a_idx, ((c, r), vtype) in enumerate(actuator_keys):
        tl, tr, bl, br = (index[p] for p in _voxel_corners(c, r))
        if vtype == VoxelType.H_ACTUATOR:
            pairs = ((tl, tr), (bl, br))
        else:
            pairs = ((tl, bl), (tr, br))
        for a, b in pairs:
            entry = springs[(min(a, b), max(a, b))]
            if entry[3] < 0:
                entry[3] = a_idx

    items = sorted(springs.items())
    spring_i = np.array([ij[0] for ij, _ in items], dtype=np.int64)
    spring_j = np.array([ij[1] for ij, _ in items], dtype=np.int64)
    rest = np.array([e[0] for _, e in items])
    stiff = np.array([e[1] for _, e in items])
    axis = np.array([e[2] for _, e in items], dtype=np.int64)
    act = np.array([e[3] for _, e in items], dtype=np.int64)

    return RobotBody(
        positions=positions,
        masses=masses,
        spring_i=spring_i,
        spring_j=spring_j,
        rest=rest,
        stiffness=stiff,
        damping=np.full(len(items), cfg.damping),
        axis=axis,
        actuated_by=act,
        node_keys=tuple(keys),
        actuator_keys=actuator_keys,
        type_histogram=hist,
    )


@dataclass
class SimState:
    """Dynamic state of one episode; spring arrays include task objects."""

    body: RobotBody
    task: TaskSpec
    pos: np.ndarray  # (P_total, 2)
    vel: np.ndarray  # (P_total, 2)
    masses: np.ndarray  # (P_total,)
    spring_i: np.ndarray
    spring_j: np.ndarray
    rest: np.ndarray
    stiffness: np.ndarray
    damping: np.ndarray
    actuated_by: np.ndarray
    robot_points: int
    t: int = 0
    terminal: bool = False

    def robot_com(self) -> np.ndarray:
        m = self.masses[: self.robot_points]
        return (self.pos[: self.robot_points] * m[:, None]).sum(axis=0) / m.sum()

    def robot_com_velocity(self) -> np.ndarray:
        m = self.masses[: self.robot_points]
        return (self.vel[: self.robot_points] * m[:, None]).sum(axis=0) / m.sum()

    def box_com(self) -> np.ndarray:
        if self.pos.shape[0] == self.robot_points:
            raise ValueError("state has no box")
        return self.pos[self.robot_points :].mean(axis=0)

    def kinetic_energy(self) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(0.5 * (self.masses * (self.vel ** 2).sum(axis=1)).sum())


def reset(body: RobotBody, task: TaskSpec, cfg: SimConfig = DEFAULT_SIM) -> SimState:
    """Initial state: robot at its lattice rest pose; PusherLite adds a box."""
    pos = body.positions.copy()
    vel = np.zeros_like(pos)
    masses = body.masses.copy()
    spring_i, spring_j = body.spring_i, body.spring_j
    rest, stiff, damp = body.rest, body.stiffness, body.damping
    act = body.actuated_by

    if task.name == PUSHER_LITE:
        edge = cfg.voxel_edge
        x0 = float(body.positions[:, 0].max()) + cfg.box_gap
        corners = np.array(
            [[x0, edge], [x0 + edge, edge], [x0, 0.0], [x0 + edge, 0.0]]
        )
        base = body.point_count
        pos = np.vstack([pos, corners])
        vel = np.zeros_like(pos)
        masses = np.concatenate([masses, np.full(4, cfg.voxel_mass / 4.0)])
        pairs = [(0, 1), (2, 3), (0, 2), (1, 3), (0, 3), (1, 2)]
        lengths = [
            float(np.sqrt(((corners[a] - corners[b]) ** 2).sum())) for a, b in pairs
        ]
        spring_i = np.concatenate([spring_i, [base + a for a, _ in pairs]])
        spring_j = np.concatenate([spring_j, [base + b for _, b in pairs]])
        rest = np.concatenate([rest, lengths])
        stiff = np.concatenate([stiff, np.full(6, cfg.stiffness_rigid)])
        damp = np.concatenate([damp, np.full(6, cfg.damping)])
        act = np.concatenate([act, np.full(6, -1, dtype=np.int64)])

    return SimState(
        body=body,
        task=task,
        pos=pos,
        vel=vel,
        masses=masses,
        spring_i=spring_i,
        spring_j=spring_j,
        rest=rest,
        stiffness=stiff,
        damping=damp,
        actuated_by=act,
        robot_points=body.point_count,
    )


def _box_contact_forces(state: SimState, forces: np.ndarray, cfg: SimConfig) -> None:
    """Penalty contact pushing robot points out of the box's bounding square."""
    box = state.pos[state.robot_points :]
    lo = box.min(axis=0)
    hi = box.max(axis=0)
    robot = state.pos[: state.robot_points]
    inside = (
        (robot[:, 0] > lo[0]) & (robot[:, 0] < hi[0])
        & (robot[:, 1] > lo[1]) & (robot[:, 1] < hi[1])
    )
    if not inside.any():
        return
    idx = np.flatnonzero(inside)
    depths = np.stack(
        [
            robot[idx, 0] - lo[0],  # push out left
            hi[0] - robot[idx, 0],  # push out right
            robot[idx, 1] - lo[1],  # push out down
            hi[1] - robot[idx, 1],  # push out up
        ],
        axis=1,
    )
    face = depths.argmin(axis=1)
    depth = depths[np.arange(idx.size), face]
    normals = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    push = cfg.contact_stiffness * depth[:, None] * normals[face]
    forces[idx] += push
    # equal and opposite reaction spread over the four box vertices
    forces[state.robot_points :] -= push.sum(axis=0) / 4.0


def actuation_factors(state: SimState, actions: np.ndarray) -> np.ndarray:
    """Per-spring rest-length scale: clip(1 + 0.5*u, 0.6, 1.6) on actuated
    springs, 1 on passive ones."""
    actions = np.asarray(actions, dtype=np.float64)
    factor = np.ones_like(state.rest)
    mask = state.actuated_by >= 0
    if mask.any():
        factor[mask] = np.clip(
            1.0 + 0.5 * actions[state.actuated_by[mask]], ACTUATION_MIN, ACTUATION_MAX
        )
    return factor


def step(
    state: SimState,
    actions: np.ndarray | None = None,
    dt: float | None = None,
    cfg: SimConfig = DEFAULT_SIM,
) -> tuple[SimState, float]:
    """Advance one semi-implicit Euler step; returns (new state, reward).

    Omitted actions mean neutral commands (all zeros).
    """
    if actions is None:
        actions = np.zeros(state.body.actuator_count)
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (state.body.actuator_count,):
        raise ValueError(
            f"expected {state.body.actuator_count} actions, got shape {actions.shape}"
        )
    if dt is None:
        dt = cfg.dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.terminal:
        raise ValueError("cannot step a terminal state")

    pos, vel = state.pos, state.vel
    i, j = state.spring_i, state.spring_j

    # overflow here is handled by the terminal flag, so silence the warnings
    with np.errstate(over="ignore", invalid="ignore"):
        rest_eff = state.rest * actuation_factors(state, actions)

        delta = pos[j] - pos[i]
        length = np.sqrt((delta ** 2).sum(axis=1))
        safe = np.maximum(length, 1e-12)
        direction = delta / safe[:, None]
        rel_vel = ((vel[j] - vel[i]) * direction).sum(axis=1)
        scalar = state.stiffness * (length - rest_eff) + state.damping * rel_vel
        pull = direction * scalar[:, None]

        n = pos.shape[0]
        forces = np.zeros_like(pos)
        if i.size:
            forces[:, 0] = np.bincount(
                i, weights=pull[:, 0], minlength=n
            ) - np.bincount(j, weights=pull[:, 0], minlength=n)
            forces[:, 1] = np.bincount(
                i, weights=pull[:, 1], minlength=n
            ) - np.bincount(j, weights=pull[:, 1], minlength=n)
        forces[:, 1] -= cfg.gravity * state.masses

        if state.pos.shape[0] > state.robot_points:
            _box_contact_forces(state, forces, cfg)

        # ground contact: normal force cancels downward push, then Coulomb
        # friction clamped so it can stop but never reverse tangential motion
        contact = pos[:, 1] <= 0.0
        if contact.any():
            c = np.flatnonzero(contact)
            normal = np.maximum(0.0, -forces[c, 1])
            forces[c, 1] += normal
            m_c = state.masses[c]
            stop_force = -forces[c, 0] - m_c * vel[c, 0] / dt
            limit = cfg.friction * normal
            forces[c, 0] += np.clip(stop_force, -limit, limit)

        new_vel = vel + forces / state.masses[:, None] * dt
        new_pos = pos + new_vel * dt

    below = new_pos[:, 1] < 0.0
    if below.any():
        new_pos[below, 1] = 0.0
        new_vel[below, 1] = np.maximum(new_vel[below, 1], 0.0)

    finite = np.isfinite(new_pos).all() and np.isfinite(new_vel).all()
    new_state = SimState(
        body=state.body,
        task=state.task,
        pos=new_pos,
        vel=new_vel,
        masses=state.masses,
        spring_i=state.spring_i,
        spring_j=state.spring_j,
        rest=state.rest,
        stiffness=state.stiffness,
        damping=state.damping,
        actuated_by=state.actuated_by,
        robot_points=state.robot_points,
        t=state.t + 1,
        terminal=not finite,
    )
    if not finite:
        return new_state, 0.0

    if state.task.name == WALKER_LITE:
        reward = float(new_state.robot_com()[0] - state.robot_com()[0])
    else:
        reward = float(new_state.box_com()[0] - state.box_com()[0])
    return new_state, reward


@dataclass(frozen=True)
class Observation:
    """Sensor snapshot: 4 global features plus 8 features per vertex.

    global: [com velocity x, com velocity y, orientation angle, task feature]
    per node: [pos - com (2), velocity (2), incident voxel type histogram (4)]
    """

    global_feats: np.ndarray
    node_feats: np.ndarray


def _orientation(points: np.ndarray) -> float:
    """Principal-axis angle of the vertex cloud: 0.5*atan2(2Sxy, Sxx-Syy)."""
    with np.errstate(over="ignore", invalid="ignore"):
        centered = points - points.mean(axis=0)
        sxx = float((centered[:, 0] ** 2).mean())
        syy = float((centered[:, 1] ** 2).mean())
        sxy = float((centered[:, 0] * centered[:, 1]).mean())
    return 0.5 * math.atan2(2.0 * sxy, sxx - syy)


def observe(state: SimState) -> Observation:
    if state.terminal:
        raise ValueError("cannot observe a terminal state")
    n = state.robot_points
    com = state.robot_com()
    com_vel = state.robot_com_velocity()
    angle = _orientation(state.pos[:n])
    if state.task.name == WALKER_LITE:
        task_feat = float(com[0])
    else:
        task_feat = float(state.box_com()[0] - com[0])
    global_feats = np.array([com_vel[0], com_vel[1], angle, task_feat])
    node_feats = np.concatenate(
        [state.pos[:n] - com, state.vel[:n], state.body.type_histogram], axis=1
    )
    return Observation(global_feats=global_feats, node_feats=node_feats)


def rollout(
    genome: MorphGenome,
    policy,
    task: TaskSpec,
    episode_length: int | None = None,
    rng: np.random.Generator | None = None,
    cfg: SimConfig = DEFAULT_SIM,
):
    """Run one episode; returns (total return, RolloutBuffer).

    ``policy`` must expose ``actuator_count`` and
    ``act(obs, rng) -> (action, log_prob, value, features)``.
    """
    from .ppo import RolloutBuffer  # RolloutBuffer is owned by the ppo module

    body = build_body(genome, cfg)
    if policy.actuator_count != body.actuator_count:
        raise ValueError(
            f"policy has {policy.actuator_count} actuator outputs but body "
            f"has {body.actuator_count} actuators"
        )
    if episode_length is None:
        episode_length = task.episode_length
    if rng is None:
        rng = np.random.default_rng(0)

    buffer = RolloutBuffer()
    state = reset(body, task, cfg)
    total = 0.0
    for k in range(episode_length):
        obs = observe(state)
        action, log_prob, value, feats = policy.act(obs, rng)
        state, reward = step(state, np.clip(action, -1.0, 1.0), cfg.dt, cfg)
        total += reward
        done = state.terminal or k == episode_length - 1
        buffer.append(obs, feats, action, reward, value, log_prob, done)
        if state.terminal:
            buffer.failed = True
            break
    buffer.episode_returns.append(total)
    return total, buffer


def trajectory_rows(states: list[SimState], rewards: list[float]) -> list[dict]:
    """Per-step CSV rows (step, reward, com_x, com_y) for trajectory dumps."""
    rows = []
    for k, (s, r) in enumerate(zip(states, rewards)):
        com = s.robot_com()
        rows.append(
            {"step": k, "reward": r, "com_x": float(com[0]), "com_y": float(com[1])}
        )
    return rows

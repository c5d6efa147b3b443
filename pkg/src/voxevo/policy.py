"""Actor/critic policies: graph-attention networks and the flat MLP baseline.

The GAT policy runs one attention round over the robot graph, mean-pools node
embeddings, and feeds a fixed-shape MLP head whose output layer has one row
per actuator (actor) or a single scalar row (critic). The MLP baseline
flattens the observation, zero-padded to the largest morphology in the design
space. Actions are diagonal Gaussians with a state-independent log-std.

All forward passes run through the autodiff ops so the same code path serves
rollouts (no tape) and PPO updates (inside a tape).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import (
    FEATURE_DIM,
    FeatureMode,
    GraphStructure,
    RobotGraph,
    build_structure,
    feature_matrix,
    graph_from_structure,
)
from .sim import GLOBAL_FEATURES, NODE_FEATURES, Observation, RobotBody

GAT_HIDDEN = 32
HEAD_HIDDEN = (64, 64)
LEAKY_SLOPE = 0.2
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
DEFAULT_LOG_STD = -0.5
OUT_GAIN = 0.01  # small-gain output rows keep newborn behavior near inherited

KIND_GAT = "gat"
KIND_MLP = "mlp"

CHECKPOINT_VERSION = 1

_LN_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GatLayerParams:
    """One attention round: shapes depend only on feature/hidden widths."""

    w_self: np.ndarray  # (FEATURE_DIM, H)
    w_edge: np.ndarray  # (2, H)
    attn: np.ndarray  # (2H, 1)
    leaky_slope: float = LEAKY_SLOPE


@dataclass
class MlpHeadParams:
    """Shared hidden layers plus a per-row output layer.

    Actor heads carry one output row per actuator plus a log-std entry per
    actuator; critic heads carry a single scalar row and no log-std.
    """

    hidden: list[tuple[np.ndarray, np.ndarray]]  # [(W (in, out), b (out,)), ...]
    out_w: np.ndarray  # (rows, last_hidden)
    out_b: np.ndarray  # (rows,)
    log_std: np.ndarray | None = None  # (rows,)


@dataclass
class PolicyParams:
    kind: str  # KIND_GAT | KIND_MLP
    feature_mode: FeatureMode
    actuator_keys: tuple  # ((col, row), VoxelType) canonical order
    actor_gat: GatLayerParams | None
    actor_head: MlpHeadParams
    critic_gat: GatLayerParams | None
    critic_head: MlpHeadParams
    obs_width: int | None = None  # MLP: padded flat observation width
    max_actuators: int | None = None  # MLP: output slot count

    @property
    def actuator_count(self) -> int:
        return len(self.actuator_keys)


@dataclass(frozen=True)
class ActionDistribution:
    """Diagonal Gaussian over actuator commands; log-std clamped to bounds."""

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(-1)
        )
        object.__setattr__(
            self,
            "log_std",
            np.clip(
                np.asarray(self.log_std, dtype=np.float64).reshape(-1),
                LOG_STD_MIN,
                LOG_STD_MAX,
            ),
        )


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    # keep parameters C-contiguous: BLAS results are layout-sensitive at the
    # bit level, and inheritance copies must reproduce parent outputs exactly
    return np.ascontiguousarray(gain * q[:rows, :cols])


def init_gat_layer(rng: np.random.Generator, hidden: int = GAT_HIDDEN) -> GatLayerParams:
    return GatLayerParams(
        w_self=_orthogonal(rng, FEATURE_DIM, hidden, 1.0),
        w_edge=_orthogonal(rng, 2, hidden, 1.0),
        attn=_orthogonal(rng, 2 * hidden, 1, 1.0),
    )


def _fresh_out_row(rng: np.random.Generator, fan_in: int) -> np.ndarray:
    return _orthogonal(rng, 1, fan_in, OUT_GAIN)[0]


def init_head(
    rng: np.random.Generator,
    in_dim: int,
    out_rows: int,
    with_log_std: bool,
    hidden_sizes: tuple[int, ...] = HEAD_HIDDEN,
) -> MlpHeadParams:
    hidden = []
    width = in_dim
    for h in hidden_sizes:
        hidden.append((_orthogonal(rng, width, h, 1.0), np.zeros(h)))
        width = h
    return MlpHeadParams(
        hidden=hidden,
        out_w=_orthogonal(rng, out_rows, width, OUT_GAIN),
        out_b=np.zeros(out_rows),
        log_std=np.full(out_rows, DEFAULT_LOG_STD) if with_log_std else None,
    )


def mlp_obs_width(bounds: tuple[int, int]) -> int:
    w, h = bounds
    return GLOBAL_FEATURES + NODE_FEATURES * (w + 1) * (h + 1)


def init_policy(
    actuator_keys: tuple,
    mode: FeatureMode,
    kind: str,
    rng: np.random.Generator,
    bounds: tuple[int, int] = (5, 5),
) -> PolicyParams:
    """Fresh actor and critic with independent parameters."""
    if kind == KIND_GAT:
        return PolicyParams(
            kind=kind,
            feature_mode=mode,
            actuator_keys=tuple(actuator_keys),
            actor_gat=init_gat_layer(rng),
            actor_head=init_head(rng, GAT_HIDDEN, len(actuator_keys), True),
            critic_gat=init_gat_layer(rng),
            critic_head=init_head(rng, GAT_HIDDEN, 1, False),
        )
    if kind == KIND_MLP:
        width = mlp_obs_width(bounds)
        max_act = bounds[0] * bounds[1]
        return PolicyParams(
            kind=kind,
            feature_mode=mode,
            actuator_keys=tuple(actuator_keys),
            actor_gat=None,
            actor_head=init_head(rng, width, max_act, True),
            critic_gat=None,
            critic_head=init_head(rng, width, 1, False),
            obs_width=width,
            max_actuators=max_act,
        )
    raise ValueError(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------------------
# tensor-level forward cores (shared by rollout and training paths)


def _gat_tensors(layer: GatLayerParams) -> dict:
    return {
        "w_self": ad.Tensor(layer.w_self),
        "w_edge": ad.Tensor(layer.w_edge),
        "attn": ad.Tensor(layer.attn),
    }


def _head_tensors(head: MlpHeadParams) -> dict:
    return {
        "hidden": [(ad.Tensor(w), ad.Tensor(b)) for w, b in head.hidden],
        "out_w": ad.Tensor(head.out_w),
        "out_b": ad.Tensor(head.out_b),
        "log_std": ad.Tensor(head.log_std) if head.log_std is not None else None,
    }


@dataclass(frozen=True)
class GatPlan:
    """Edge index arrays plus precomputed reduction metadata for one graph
    topology (optionally replicated across a minibatch)."""

    src: np.ndarray
    dst: np.ndarray
    edge_features: np.ndarray
    node_count: int
    dst_starts: np.ndarray
    src_scatter: tuple
    dst_scatter: tuple


def make_plan(g, batch: int = 1) -> GatPlan:
    """Build a GatPlan from anything with edge_src/edge_dst/edge_features and
    node_keys (RobotGraph or GraphStructure); edges stay grouped by
    destination when replicated, so attention segments remain contiguous."""
    n0 = len(g.node_keys)
    n = n0 * batch
    src, dst, edge_feats = g.edge_src, g.edge_dst, g.edge_features
    src_scatter = ad.BlockScatterPlan(src, n0, batch)
    dst_scatter = ad.BlockScatterPlan(dst, n0, batch)
    if batch > 1:
        offsets = np.repeat(np.arange(batch) * n0, src.shape[0])
        src = np.tile(src, batch) + offsets
        dst = np.tile(dst, batch) + offsets
        edge_feats = np.tile(edge_feats, (batch, 1))
    return GatPlan(
        src=src,
        dst=dst,
        edge_features=edge_feats,
        node_count=n,
        dst_starts=ad._segment_starts(dst),
        src_scatter=src_scatter,
        dst_scatter=dst_scatter,
    )


def gat_embed_t(ts: dict, feats: ad.Tensor, plan: GatPlan, slope: float = LEAKY_SLOPE) -> ad.Tensor:
    """One attention round over (possibly batched) graphs.

    Per directed edge (i -> j): message m = leaky_relu(x_i W_self + e_ij W_edge),
    logit = a . concat(x_j W_self, m), attention softmax over each node's
    incoming edges, embedding h_j = tanh(sum alpha * m).
    """
    h = ts["w_self"].shape[1]
    projected = ad.matmul(feats, ts["w_self"])
    msg = ad.leaky_relu(
        ad.add(
            ad.gather_rows(projected, plan.src, plan.src_scatter),
            ad.matmul(ad.Tensor(plan.edge_features), ts["w_edge"]),
        ),
        slope,
    )
    attn_self = ad.gather_rows(ts["attn"], np.arange(h))
    attn_msg = ad.gather_rows(ts["attn"], np.arange(h, 2 * h))
    logits = ad.add(
        ad.matmul(ad.gather_rows(projected, plan.dst, plan.dst_scatter), attn_self),
        ad.matmul(msg, attn_msg),
    )
    alpha = ad.segment_softmax(logits, plan.dst, plan.dst_starts)
    return ad.tanh(
        ad.scatter_add_rows(ad.mul(msg, alpha), plan.dst, plan.node_count, plan.dst_scatter)
    )


def head_apply_t(ts: dict, x: ad.Tensor) -> ad.Tensor:
    """Hidden layers with tanh, then the linear output rows (no squash)."""
    h = x
    for w, b in ts["hidden"]:
        h = ad.tanh(ad.add(ad.matmul(h, w), b))
    return ad.add(ad.matmul(h, ad.transpose(ts["out_w"])), ts["out_b"])


# ---------------------------------------------------------------------------
# single-graph operations


def gat_forward(layer: GatLayerParams, g: RobotGraph) -> np.ndarray:
    """(node_count, H) embeddings for one graph."""
    out = gat_embed_t(
        _gat_tensors(layer), ad.Tensor(g.node_features), make_plan(g), layer.leaky_slope
    )
    return out.values


def pool(embeddings: np.ndarray) -> np.ndarray:
    """Arithmetic mean over node rows."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[0] < 1:
        raise ValueError("pool requires at least one node")
    return embeddings.mean(axis=0)


def _check_keys(params: PolicyParams, g: RobotGraph) -> None:
    if tuple(params.actuator_keys) != tuple(g.actuator_keys):
        raise ValueError("policy actuator keys do not match graph actuator keys")


def _gat_head_out(gat_ts, head_ts, feats, plan, slope) -> np.ndarray:
    emb = gat_embed_t(gat_ts, ad.Tensor(feats), plan, slope)
    return head_apply_t(head_ts, ad.mean_rows(emb)).values


def _gat_head_out_fast(
    gat: GatLayerParams, head: MlpHeadParams, feats: np.ndarray, plan: GatPlan
) -> np.ndarray:
    """Tape-free mirror of _gat_head_out for rollouts.

    Operations replicate the tensor path step for step (same reductions, same
    order) so results are bit-identical; a test enforces the equivalence.
    """
    h = gat.w_self.shape[1]
    projected = feats @ gat.w_self
    pre = projected[plan.src] + plan.edge_features @ gat.w_edge
    msg = np.where(pre > 0, pre, gat.leaky_slope * pre)
    logits = projected[plan.dst] @ gat.attn[:h] + msg @ gat.attn[h:]
    starts = plan.dst_starts
    counts = np.diff(np.concatenate([starts, [logits.shape[0]]]))
    rep = np.repeat(np.arange(starts.size), counts)
    seg_max = np.maximum.reduceat(logits, starts, axis=0)
    e = np.exp(np.minimum(logits - seg_max[rep], 700.0))
    denom = np.add.reduceat(e, starts, axis=0)
    alpha = e / denom[rep]
    agg = plan.dst_scatter.apply(msg * alpha)
    x = np.tanh(agg).mean(axis=0, keepdims=True)
    for w, b in head.hidden:
        x = np.tanh(x @ w + b.reshape(1, -1))
    return x @ head.out_w.T + head.out_b.reshape(1, -1)


def actor_forward(params: PolicyParams, g: RobotGraph) -> ActionDistribution:
    _check_keys(params, g)
    if params.kind != KIND_GAT:
        raise ValueError("actor_forward expects a GAT policy")
    out = _gat_head_out(
        _gat_tensors(params.actor_gat),
        _head_tensors(params.actor_head),
        g.node_features,
        make_plan(g),
        params.actor_gat.leaky_slope,
    )
    return ActionDistribution(mean=np.tanh(out[0]), log_std=params.actor_head.log_std)


def critic_forward(params: PolicyParams, g: RobotGraph) -> float:
    _check_keys(params, g)
    if params.kind != KIND_GAT:
        raise ValueError("critic_forward expects a GAT policy")
    out = _gat_head_out(
        _gat_tensors(params.critic_gat),
        _head_tensors(params.critic_head),
        g.node_features,
        make_plan(g),
        params.critic_gat.leaky_slope,
    )
    return float(out[0, 0])


def flatten_observation(obs: Observation, pad_to: int) -> np.ndarray:
    """Global block then per-node rows in vertex order, zero-padded."""
    flat = np.concatenate([obs.global_feats, obs.node_feats.reshape(-1)])
    if flat.size > pad_to:
        raise ValueError(
            f"observation width {flat.size} exceeds pad width {pad_to}"
        )
    return np.concatenate([flat, np.zeros(pad_to - flat.size)])


def mlp_baseline_forward(
    params: PolicyParams,
    obs: Observation,
    head: str = "actor",
    pad_to: int | None = None,
):
    """Flat-observation forward; returns ActionDistribution or scalar value."""
    if params.kind != KIND_MLP:
        raise ValueError("mlp_baseline_forward expects an MLP policy")
    if pad_to is None:
        pad_to = params.obs_width
    x = ad.Tensor(flatten_observation(obs, pad_to))
    if head == "actor":
        out = head_apply_t(_head_tensors(params.actor_head), x)
        a = params.actuator_count
        return ActionDistribution(
            mean=np.tanh(out.values[0, :a]), log_std=params.actor_head.log_std[:a]
        )
    if head == "critic":
        out = head_apply_t(_head_tensors(params.critic_head), x)
        return float(out.values[0, 0])
    raise ValueError(f"unknown head {head!r}")


# ---------------------------------------------------------------------------
# diagonal Gaussian algebra


def sample(
    dist: ActionDistribution, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Draw an action; returns (clamped action, log-prob of the raw draw)."""
    std = np.exp(dist.log_std)
    raw = dist.mean + std * rng.standard_normal(dist.mean.shape)
    return np.clip(raw, -1.0, 1.0), log_prob(dist, raw)


def log_prob(dist: ActionDistribution, action: np.ndarray) -> float:
    action = np.asarray(action, dtype=np.float64).reshape(-1)
    z = (action - dist.mean) * np.exp(-dist.log_std)
    return float(
        -0.5 * (z ** 2).sum() - dist.log_std.sum() - 0.5 * dist.mean.size * _LN_2PI
    )


def entropy(dist: ActionDistribution) -> float:
    return float((0.5 * (_LN_2PI + 1.0) + dist.log_std).sum())


# ---------------------------------------------------------------------------
# controller: binds params to one body for rollouts


class Controller:
    """Evaluates a policy on a fixed body; exposes the rollout protocol.

    Uses the tape-free fast forward with a graph plan built once per body;
    in-place parameter updates (PPO) are picked up automatically.
    """

    def __init__(self, params: PolicyParams, body: RobotBody):
        if tuple(params.actuator_keys) != tuple(body.actuator_keys):
            raise ValueError("policy actuator keys do not match body")
        self.params = params
        self.body = body
        self.structure: GraphStructure = build_structure(body)
        self._plan = make_plan(self.structure) if params.kind == KIND_GAT else None

    @property
    def actuator_count(self) -> int:
        return self.params.actuator_count

    def _features(self, obs: Observation) -> np.ndarray:
        if self.params.kind == KIND_GAT:
            return feature_matrix(obs, self.params.feature_mode)
        return flatten_observation(obs, self.params.obs_width)

    def _from_features(self, feats: np.ndarray) -> tuple[ActionDistribution, float]:
        p = self.params
        if p.kind == KIND_GAT:
            out = _gat_head_out_fast(p.actor_gat, p.actor_head, feats, self._plan)
            dist = ActionDistribution(np.tanh(out[0]), p.actor_head.log_std)
            vout = _gat_head_out_fast(p.critic_gat, p.critic_head, feats, self._plan)
            return dist, float(vout[0, 0])
        x = feats.reshape(1, -1)
        for w, b in p.actor_head.hidden:
            x = np.tanh(x @ w + b.reshape(1, -1))
        out = x @ p.actor_head.out_w.T + p.actor_head.out_b.reshape(1, -1)
        n_act = p.actuator_count
        dist = ActionDistribution(np.tanh(out[0, :n_act]), p.actor_head.log_std[:n_act])
        x = feats.reshape(1, -1)
        for w, b in p.critic_head.hidden:
            x = np.tanh(x @ w + b.reshape(1, -1))
        value = float((x @ p.critic_head.out_w.T + p.critic_head.out_b.reshape(1, -1))[0, 0])
        return dist, value

    def distributions(self, obs: Observation) -> tuple[ActionDistribution, float]:
        return self._from_features(self._features(obs))

    def act(self, obs: Observation, rng: np.random.Generator):
        feats = self._features(obs)
        dist, value = self._from_features(feats)
        action, logp = sample(dist, rng)
        return action, logp, value, feats

    def mean_action(self, obs: Observation) -> np.ndarray:
        dist, _ = self.distributions(obs)
        return dist.mean


class ZeroPolicy:
    """No-op controller used as the settle baseline oracle."""

    def __init__(self, actuator_count: int):
        self.actuator_count = actuator_count

    def act(self, obs, rng):
        action = np.zeros(self.actuator_count)
        return action, 0.0, 0.0, None

    def mean_action(self, obs):
        return np.zeros(self.actuator_count)


# ---------------------------------------------------------------------------
# parameter traversal, cloning, checkpoints


def _head_arrays(prefix: str, head: MlpHeadParams) -> list[tuple[str, np.ndarray]]:
    items = []
    for i, (w, b) in enumerate(head.hidden):
        items.append((f"{prefix}.h{i}.w", w))
        items.append((f"{prefix}.h{i}.b", b))
    items.append((f"{prefix}.out.w", head.out_w))
    items.append((f"{prefix}.out.b", head.out_b))
    if head.log_std is not None:
        items.append((f"{prefix}.log_std", head.log_std))
    return items


def named_arrays(params: PolicyParams) -> list[tuple[str, np.ndarray]]:
    """Stable (name, array) listing of every parameter matrix."""
    items = []
    for comp, gat, head in (
        ("actor", params.actor_gat, params.actor_head),
        ("critic", params.critic_gat, params.critic_head),
    ):
        if gat is not None:
            items.append((f"{comp}.gat.w_self", gat.w_self))
            items.append((f"{comp}.gat.w_edge", gat.w_edge))
            items.append((f"{comp}.gat.attn", gat.attn))
        items.extend(_head_arrays(f"{comp}.head", head))
    return items


def clone_params(params: PolicyParams) -> PolicyParams:
    def clone_head(h: MlpHeadParams) -> MlpHeadParams:
        return MlpHeadParams(
            hidden=[(w.copy(), b.copy()) for w, b in h.hidden],
            out_w=h.out_w.copy(),
            out_b=h.out_b.copy(),
            log_std=None if h.log_std is None else h.log_std.copy(),
        )

    def clone_gat(g: GatLayerParams | None) -> GatLayerParams | None:
        if g is None:
            return None
        return GatLayerParams(g.w_self.copy(), g.w_edge.copy(), g.attn.copy(), g.leaky_slope)

    return PolicyParams(
        kind=params.kind,
        feature_mode=params.feature_mode,
        actuator_keys=tuple(params.actuator_keys),
        actor_gat=clone_gat(params.actor_gat),
        actor_head=clone_head(params.actor_head),
        critic_gat=clone_gat(params.critic_gat),
        critic_head=clone_head(params.critic_head),
        obs_width=params.obs_width,
        max_actuators=params.max_actuators,
    )


def save_checkpoint(path, params: PolicyParams, meta: dict | None = None) -> None:
    """Write all matrices plus JSON metadata to an .npz; bit-exact round trip."""
    arrays = {name: arr for name, arr in named_arrays(params)}
    header = {
        "version": CHECKPOINT_VERSION,
        "kind": params.kind,
        "feature_mode": params.feature_mode.value,
        "actuator_keys": [
            [int(c), int(r), int(t)] for (c, r), t in params.actuator_keys
        ],
        "obs_width": params.obs_width,
        "max_actuators": params.max_actuators,
        "meta": meta or {},
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode(), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    from .morpho import VoxelType

    with np.load(path) as data:
        header = json.loads(bytes(data["__meta__"]).decode())
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        arrays = {k: data[k] for k in data.files if k != "__meta__"}

    def read_head(prefix: str, with_log_std: bool) -> MlpHeadParams:
        hidden = []
        i = 0
        while f"{prefix}.h{i}.w" in arrays:
            hidden.append((arrays[f"{prefix}.h{i}.w"], arrays[f"{prefix}.h{i}.b"]))
            i += 1
        return MlpHeadParams(
            hidden=hidden,
            out_w=arrays[f"{prefix}.out.w"],
            out_b=arrays[f"{prefix}.out.b"],
            log_std=arrays[f"{prefix}.log_std"] if with_log_std else None,
        )

    def read_gat(comp: str) -> GatLayerParams | None:
        if f"{comp}.gat.w_self" not in arrays:
            return None
        return GatLayerParams(
            w_self=arrays[f"{comp}.gat.w_self"],
            w_edge=arrays[f"{comp}.gat.w_edge"],
            attn=arrays[f"{comp}.gat.attn"],
        )

    params = PolicyParams(
        kind=header["kind"],
        feature_mode=FeatureMode(header["feature_mode"]),
        actuator_keys=tuple(
            ((c, r), VoxelType(t)) for c, r, t in header["actuator_keys"]
        ),
        actor_gat=read_gat("actor"),
        actor_head=read_head("actor.head", True),
        critic_gat=read_gat("critic"),
        critic_head=read_head("critic.head", False),
        obs_width=header["obs_width"],
        max_actuators=header["max_actuators"],
    )
    return params, header["meta"]

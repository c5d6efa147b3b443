"""PPO training of a single individual's actor/critic on its task.

Collects whole episodes with the current policy, computes GAE advantages,
then runs clipped-surrogate minibatch updates with plain gradient descent
under a global gradient-norm clip. Fitness is the best episodic return
observed across training.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import sim as simulator
from .graph import GraphStructure
from .morpho import MorphGenome
from .policy import (
    KIND_GAT,
    LOG_STD_MAX,
    LOG_STD_MIN,
    Controller,
    PolicyParams,
    _gat_tensors,
    _head_tensors,
    gat_embed_t,
    head_apply_t,
    make_plan,
)
from .sim import DEFAULT_SIM, Observation, SimConfig, TaskSpec

#: fitness assigned when simulation or optimization produces non-finite values
FAILED_FITNESS = -1e9

_LN_2PI = float(np.log(2.0 * np.pi))


@dataclass
class RolloutBuffer:
    """Trajectories recorded under one parameter snapshot.

    ``feats`` holds the featurized observation the policy consumed (node
    feature matrix for GAT, padded flat vector for MLP); actions are the
    clamped commands sent to the simulator.
    """

    observations: list[Observation] = field(default_factory=list)
    feats: list[np.ndarray] = field(default_factory=list)
    actions: list[np.ndarray] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    episode_returns: list[float] = field(default_factory=list)
    failed: bool = False

    def append(self, obs, feats, action, reward, value, log_prob, done):
        self.observations.append(obs)
        self.feats.append(feats)
        self.actions.append(np.asarray(action, dtype=np.float64))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.log_probs.append(float(log_prob))
        self.dones.append(bool(done))

    def extend(self, other: "RolloutBuffer"):
        self.observations.extend(other.observations)
        self.feats.extend(other.feats)
        self.actions.extend(other.actions)
        self.rewards.extend(other.rewards)
        self.values.extend(other.values)
        self.log_probs.extend(other.log_probs)
        self.dones.extend(other.dones)
        self.episode_returns.extend(other.episode_returns)
        self.failed = self.failed or other.failed

    def __len__(self):
        return len(self.rewards)


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    learning_rate: float = 1e-2  # plain SGD under a 0.5 norm clip needs a larger step than Adam-style 3e-4
    epochs: int = 4
    minibatch_size: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    steps_per_batch: int = 1024
    total_updates: int = 30
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if not 0 < self.gamma <= 1 or not 0 < self.lam <= 1:
            raise ValueError("gamma and lam must lie in (0, 1]")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ValueError("epochs and minibatch_size must be positive")
        if self.steps_per_batch < 0 or self.total_updates < 0:
            raise ValueError("steps_per_batch and total_updates must be >= 0")


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    normalize: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation.

    ``values`` has length T+1 (bootstrap appended for non-terminal batch
    ends). Returns are computed from raw advantages; when ``normalize`` is
    set the returned advantages are standardized over the batch.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    t_len = rewards.shape[0]
    if values.shape[0] != t_len + 1:
        raise ValueError("values must include one bootstrap entry (length T+1)")
    adv = np.zeros(t_len)
    last = 0.0
    for t in range(t_len - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    returns = adv + values[:t_len]
    if normalize and t_len > 0:
        adv = (adv - adv.mean()) / max(float(adv.std()), 1e-8)
    return adv, returns


# ---------------------------------------------------------------------------
# batched loss


def _tensor_tree(params: PolicyParams):
    """Tensors wrapping the parameter arrays plus (array, tensor) leaf pairs."""
    tree = {"actor_head": _head_tensors(params.actor_head),
            "critic_head": _head_tensors(params.critic_head)}
    leaves = []
    if params.kind == KIND_GAT:
        tree["actor_gat"] = _gat_tensors(params.actor_gat)
        tree["critic_gat"] = _gat_tensors(params.critic_gat)
        for gat, ts in (
            (params.actor_gat, tree["actor_gat"]),
            (params.critic_gat, tree["critic_gat"]),
        ):
            leaves.extend(
                [(gat.w_self, ts["w_self"]), (gat.w_edge, ts["w_edge"]), (gat.attn, ts["attn"])]
            )
    for head, ts in (
        (params.actor_head, tree["actor_head"]),
        (params.critic_head, tree["critic_head"]),
    ):
        for (w, b), (wt, bt) in zip(head.hidden, ts["hidden"]):
            leaves.extend([(w, wt), (b, bt)])
        leaves.extend([(head.out_w, ts["out_w"]), (head.out_b, ts["out_b"])])
        if head.log_std is not None:
            leaves.append((head.log_std, ts["log_std"]))
    return tree, leaves


def _batched_forward(
    params: PolicyParams,
    tree: dict,
    feats: np.ndarray,
    plan,
    batch: int,
):
    """Mean (B,A), clamped log-std (1,A), value (B,1) tensors for a minibatch."""
    n_act = params.actuator_count
    if params.kind == KIND_GAT:
        block = feats.shape[0] // batch
        feats_t = ad.Tensor(feats)
        emb_a = gat_embed_t(tree["actor_gat"], feats_t, plan)
        pooled_a = ad.mean_blocks(emb_a, block)
        mean = ad.tanh(head_apply_t(tree["actor_head"], pooled_a))
        emb_c = gat_embed_t(tree["critic_gat"], feats_t, plan)
        pooled_c = ad.mean_blocks(emb_c, block)
        value = head_apply_t(tree["critic_head"], pooled_c)
        log_std = ad.clip_values(tree["actor_head"]["log_std"], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std, value
    x = ad.Tensor(feats)
    out_full = head_apply_t(tree["actor_head"], x)
    select = np.zeros((params.max_actuators, n_act))
    select[:n_act, :n_act] = np.eye(n_act)
    select_t = ad.Tensor(select)
    mean = ad.tanh(ad.matmul(out_full, select_t))
    log_std = ad.clip_values(
        ad.matmul(tree["actor_head"]["log_std"], select_t), LOG_STD_MIN, LOG_STD_MAX
    )
    value = head_apply_t(tree["critic_head"], x)
    return mean, log_std, value


def _loss_tensors(
    mean: ad.Tensor,
    log_std: ad.Tensor,
    value: ad.Tensor,
    actions: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: PpoConfig,
):
    """Clipped-surrogate total loss plus per-minibatch stats."""
    n_act = actions.shape[1]
    actions_t = ad.Tensor(actions)
    adv_t = ad.Tensor(advantages.reshape(-1, 1))
    ret_t = ad.Tensor(returns.reshape(-1, 1))
    logp_old_t = ad.Tensor(logp_old.reshape(-1, 1))
    ones = ad.Tensor(np.ones((n_act, 1)))

    diff = ad.sub(actions_t, mean)
    inv_var = ad.exp(ad.mul(log_std, ad.Tensor(-2.0)))
    z2 = ad.mul(ad.mul(diff, diff), inv_var)
    logp = ad.add(
        ad.add(
            ad.mul(ad.matmul(z2, ones), ad.Tensor(-0.5)),
            ad.mul(ad.total_sum(log_std), ad.Tensor(-1.0)),
        ),
        ad.Tensor(-0.5 * n_act * _LN_2PI),
    )
    ratio = ad.exp(ad.sub(logp, logp_old_t))
    clipped = ad.clip_values(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surrogate = ad.minimum(ad.mul(ratio, adv_t), ad.mul(clipped, adv_t))
    policy_loss = ad.mul(ad.mean_rows(surrogate), ad.Tensor(-1.0))

    verr = ad.sub(value, ret_t)
    value_loss = ad.mean_rows(ad.mul(verr, verr))
    entropy_t = ad.add(
        ad.total_sum(log_std), ad.Tensor(0.5 * n_act * (_LN_2PI + 1.0))
    )
    total = ad.add(
        policy_loss,
        ad.sub(
            ad.mul(value_loss, ad.Tensor(cfg.value_coef)),
            ad.mul(entropy_t, ad.Tensor(cfg.entropy_coef)),
        ),
    )
    r = ratio.values
    stats = {
        "policy_loss": policy_loss.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy_t.item(),
        "clip_fraction": float(
            ((r < 1.0 - cfg.clip_eps) | (r > 1.0 + cfg.clip_eps)).mean()
        ),
    }
    return total, stats


def _buffer_arrays(buffer: RolloutBuffer, cfg: PpoConfig):
    rewards = np.array(buffer.rewards)
    values = np.concatenate([np.array(buffer.values), [0.0]])
    dones = np.array(buffer.dones, dtype=np.float64)
    advantages, returns = gae(rewards, values, dones, cfg.gamma, cfg.lam)
    actions = np.stack(buffer.actions)
    logp_old = np.array(buffer.log_probs)
    feats = np.stack(buffer.feats)
    return feats, actions, logp_old, advantages, returns


def ppo_update(
    params: PolicyParams,
    buffer: RolloutBuffer,
    cfg: PpoConfig,
    rng: np.random.Generator,
    structure: GraphStructure | None = None,
) -> dict | None:
    """One PPO update (epochs x minibatches) in place on ``params``.

    Returns averaged stats, or None when a non-finite loss aborted the
    update (the caller flags the individual's fitness as failed).
    """
    if params.kind == KIND_GAT and structure is None:
        raise ValueError("GAT updates require the graph structure")
    feats, actions, logp_old, advantages, returns = _buffer_arrays(buffer, cfg)
    t_len = len(buffer)
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0}
    steps = 0
    plans: dict[int, object] = {}
    for _ in range(cfg.epochs):
        perm = rng.permutation(t_len)
        for start in range(0, t_len, cfg.minibatch_size):
            idx = perm[start : start + cfg.minibatch_size]
            batch = idx.shape[0]
            plan = None
            if params.kind == KIND_GAT:
                mb_feats = feats[idx].reshape(-1, feats.shape[2])
                plan = plans.get(batch)
                if plan is None:
                    plan = plans[batch] = make_plan(structure, batch)
            else:
                mb_feats = feats[idx]
            tree, leaves = _tensor_tree(params)
            with ad.Tape() as tape:
                mean, log_std, value = _batched_forward(
                    params, tree, mb_feats, plan, batch
                )
                loss, stats = _loss_tensors(
                    mean,
                    log_std,
                    value,
                    actions[idx],
                    logp_old[idx],
                    advantages[idx],
                    returns[idx],
                    cfg,
                )
                if not np.isfinite(loss.values).all():
                    return None
                tape.backward(loss)
            grads = [
                t.grad if t.grad is not None else np.zeros_like(t.values)
                for _, t in leaves
            ]
            norm = float(np.sqrt(sum((g ** 2).sum() for g in grads)))
            scale = cfg.learning_rate * min(1.0, cfg.max_grad_norm / max(norm, 1e-12))
            for (arr, _), g in zip(leaves, grads):
                arr -= scale * g.reshape(arr.shape)
            for k in totals:
                totals[k] += stats[k]
            steps += 1
    return {k: v / max(steps, 1) for k, v in totals.items()}


def ppo_objective(
    params: PolicyParams,
    buffer: RolloutBuffer,
    cfg: PpoConfig,
    structure: GraphStructure | None = None,
) -> float:
    """Total loss of ``params`` on the full buffer, without updating."""
    feats, actions, logp_old, advantages, returns = _buffer_arrays(buffer, cfg)
    plan = None
    if params.kind == KIND_GAT:
        feats = feats.reshape(-1, feats.shape[2])
        plan = make_plan(structure, len(buffer))
    tree, _ = _tensor_tree(params)
    mean, log_std, value = _batched_forward(params, tree, feats, plan, len(buffer))
    loss, _ = _loss_tensors(
        mean, log_std, value, actions, logp_old, advantages, returns, cfg
    )
    return loss.item()


def evaluate_policy(
    genome: MorphGenome,
    params: PolicyParams,
    task: TaskSpec,
    sim_cfg: SimConfig = DEFAULT_SIM,
    collect_states: bool = False,
):
    """Deterministic greedy (mean-action) episode.

    Returns (return, states, rewards); states/rewards are empty lists unless
    ``collect_states`` is set. states[k] is the state *before* step k.
    """
    body = simulator.build_body(genome, sim_cfg)
    controller = Controller(params, body)
    state = simulator.reset(body, task, sim_cfg)
    total = 0.0
    states, rewards = [], []
    for _ in range(task.episode_length):
        if collect_states:
            states.append(state)
        obs = simulator.observe(state)
        action = controller.mean_action(obs)
        state, reward = simulator.step(state, action, sim_cfg.dt, sim_cfg)
        total += reward
        if collect_states:
            rewards.append(reward)
        if state.terminal:
            break
    return total, states, rewards


def train_individual(
    genome: MorphGenome,
    params: PolicyParams,
    task: TaskSpec,
    cfg: PpoConfig,
    rng: np.random.Generator,
    sim_cfg: SimConfig = DEFAULT_SIM,
    log=None,
) -> tuple[PolicyParams, float]:
    """Train one individual's controller; returns (params, best episodic return).

    ``log`` receives one dict per update with return and loss statistics.
    Simulator blow-ups or non-finite losses halt training with FAILED_FITNESS.
    """
    body = simulator.build_body(genome, sim_cfg)
    controller = Controller(params, body)  # fail fast on actuator mismatch

    if cfg.total_updates == 0:
        if cfg.steps_per_batch == 0:
            total, _, _ = evaluate_policy(genome, params, task, sim_cfg)
            return params, total
        buffer = RolloutBuffer()
        while len(buffer) < cfg.steps_per_batch:
            _, episode = simulator.rollout(genome, controller, task, None, rng, sim_cfg)
            buffer.extend(episode)
            if buffer.failed:
                return params, FAILED_FITNESS
        return params, max(buffer.episode_returns)

    best = -np.inf
    for update in range(cfg.total_updates):
        buffer = RolloutBuffer()
        while len(buffer) < cfg.steps_per_batch:
            _, episode = simulator.rollout(genome, controller, task, None, rng, sim_cfg)
            buffer.extend(episode)
            if buffer.failed:
                return params, FAILED_FITNESS
        best = max(best, max(buffer.episode_returns))
        stats = ppo_update(params, buffer, cfg, rng, structure=controller.structure)
        if stats is None:
            return params, FAILED_FITNESS
        if log is not None:
            log(
                {
                    "update": update,
                    "mean_return": float(np.mean(buffer.episode_returns)),
                    "best_return": float(best),
                    **stats,
                }
            )
    return params, float(best)

"""voxevo: co-design of voxel soft robots.

Mutation-only morphology evolution over a 2D mass-spring simulator, with
graph-attention (or flat MLP) actor/critic controllers trained by PPO and
transferred from parent to child through topology-consistent weight mapping.
"""

from .morpho import (
    MorphGenome,
    MutationConfig,
    VoxelType,
    deserialize,
    mutate,
    random_genome,
    serialize,
    validate,
)
from .sim import (
    Observation,
    RobotBody,
    SimConfig,
    SimState,
    TaskSpec,
    build_body,
    observe,
    reset,
    rollout,
    step,
)
from .graph import FeatureMode, RobotGraph, build_graph, build_structure, graph_hash
from .policy import (
    ActionDistribution,
    Controller,
    PolicyParams,
    actor_forward,
    critic_forward,
    entropy,
    gat_forward,
    load_checkpoint,
    log_prob,
    mlp_baseline_forward,
    pool,
    sample,
    save_checkpoint,
)
from .inherit import Correspondence, map_weights, match, scratch_init
from .ppo import (
    FAILED_FITNESS,
    PpoConfig,
    RolloutBuffer,
    evaluate_policy,
    gae,
    ppo_update,
    train_individual,
)
from .evolve import (
    EvoConfig,
    Individual,
    RunResult,
    generation_step,
    init_population,
    run,
)

__version__ = "0.1.0"

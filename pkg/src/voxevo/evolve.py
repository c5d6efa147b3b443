"""Generational co-design loop: train newborns, keep elites, refill by
mutation with controller inheritance (or scratch re-initialization).

Elites are never retrained and keep their fitness untouched, so the
per-generation best fitness is non-decreasing. Each individual trains with
an rng stream derived from (master seed, individual id), which keeps results
independent of training order.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .graph import FeatureMode, GraphStructure, build_structure, graph_hash
from .inherit import map_weights, match, scratch_init
from .morpho import (
    MorphGenome,
    MutationConfig,
    deserialize,
    mutate,
    random_genome,
    serialize,
)
from .policy import KIND_GAT, KIND_MLP, PolicyParams
from .ppo import PpoConfig, train_individual
from .sim import DEFAULT_SIM, WALKER_LITE, SimConfig, TaskSpec, build_body

INHERIT_TRANSFER = "transfer"
INHERIT_SCRATCH = "scratch"


@dataclass(frozen=True)
class EvoConfig:
    population_size: int = 8
    generations: int = 6
    elite_count: int | None = None  # default: ceil(population_size / 2)
    feature_mode: FeatureMode = FeatureMode.LOCAL_TRANSFER
    controller_kind: str = KIND_GAT
    inheritance: str = INHERIT_TRANSFER
    task: str = WALKER_LITE
    bounds: tuple[int, int] = (5, 5)
    mutation: MutationConfig = field(default_factory=MutationConfig)
    episode_length: int = 256
    seed: int = 0
    founders: tuple[str, ...] = ()  # inline genome texts seeding the population

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        m = self.elites
        if not 1 <= m < self.population_size:
            raise ValueError("elite_count must satisfy 1 <= m < population_size")
        if self.controller_kind not in (KIND_GAT, KIND_MLP):
            raise ValueError(f"unknown controller kind {self.controller_kind!r}")
        if self.inheritance not in (INHERIT_TRANSFER, INHERIT_SCRATCH):
            raise ValueError(f"unknown inheritance mode {self.inheritance!r}")
        if len(self.founders) > self.population_size:
            raise ValueError("more founder genomes than population slots")
        object.__setattr__(self, "founders", tuple(self.founders))

    @property
    def elites(self) -> int:
        if self.elite_count is not None:
            return self.elite_count
        return math.ceil(self.population_size / 2)

    def task_spec(self) -> TaskSpec:
        return TaskSpec(self.task, self.episode_length)


@dataclass
class Individual:
    id: int
    genome: MorphGenome
    graph_key: str
    params: PolicyParams
    fitness: float | None = None
    newborn: bool = True
    parent_id: int | None = None
    birth_generation: int = 0


@dataclass
class GenerationRecord:
    generation: int
    rows: list[dict]
    best_fitness: float
    mean_fitness: float
    elite_ids: list[int]


@dataclass
class RunResult:
    best: Individual
    history: list[GenerationRecord]
    population: list[Individual]


def genome_digest(genome: MorphGenome) -> str:
    return hashlib.sha256(serialize(genome).encode()).hexdigest()[:12]


def _structure_for(genome: MorphGenome, sim_cfg: SimConfig) -> GraphStructure:
    return build_structure(build_body(genome, sim_cfg))


def _training_rng(cfg: EvoConfig, individual_id: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, 7, individual_id])


def init_population(
    cfg: EvoConfig,
    rng: np.random.Generator,
    sim_cfg: SimConfig = DEFAULT_SIM,
    ids=None,
    sink=None,
) -> list[Individual]:
    """Founders: random valid genomes (or inline seeds from the config) with
    fresh controllers, all newborn."""
    ids = ids if ids is not None else count()
    seeded = [deserialize(text) for text in cfg.founders]
    for genome in seeded:
        if genome.width > cfg.bounds[0] or genome.height > cfg.bounds[1]:
            raise ValueError("founder genome exceeds the design-space bounds")
    population = []
    for slot in range(cfg.population_size):
        genome = seeded[slot] if slot < len(seeded) else random_genome(rng, *cfg.bounds)
        structure = _structure_for(genome, sim_cfg)
        params = scratch_init(
            structure, cfg.controller_kind, rng, cfg.feature_mode, cfg.bounds
        )
        ind = Individual(
            id=next(ids),
            genome=genome,
            graph_key=graph_hash(structure),
            params=params,
        )
        population.append(ind)
        if sink is not None:
            sink(
                {
                    "event": "birth",
                    "id": ind.id,
                    "parent_id": None,
                    "generation": 0,
                    "genome": serialize(genome),
                }
            )
    return population


def generation_step(
    population: list[Individual],
    cfg: EvoConfig,
    rng: np.random.Generator,
    *,
    ppo_cfg: PpoConfig | None = None,
    sim_cfg: SimConfig = DEFAULT_SIM,
    generation: int = 1,
    ids=None,
    sink=None,
    train_log=None,
) -> tuple[list[Individual], GenerationRecord]:
    """One generation: train newborns, select top-m elites, refill by mutation."""
    ppo_cfg = ppo_cfg or PpoConfig()
    ids = ids if ids is not None else count(max(ind.id for ind in population) + 1)
    task = cfg.task_spec()

    for ind in population:
        if not ind.newborn:
            continue  # elites retain fitness from the previous generation
        rows: list[dict] = []
        _, fitness = train_individual(
            ind.genome,
            ind.params,
            task,
            ppo_cfg,
            _training_rng(cfg, ind.id),
            sim_cfg,
            log=rows.append,
        )
        ind.fitness = fitness
        ind.newborn = False
        if train_log is not None:
            train_log(ind.id, rows)
        if sink is not None:
            sink(
                {
                    "event": "training_complete",
                    "id": ind.id,
                    "generation": generation,
                    "fitness": fitness,
                }
            )

    ranked = sorted(population, key=lambda ind: (-ind.fitness, ind.id))
    elites = ranked[: cfg.elites]
    elite_ids = [ind.id for ind in elites]
    if sink is not None:
        sink({"event": "selection", "generation": generation, "elite_ids": elite_ids})

    rows = [
        {
            "id": ind.id,
            "parent_id": ind.parent_id,
            "fitness": ind.fitness,
            "genome_hash": genome_digest(ind.genome),
        }
        for ind in population
    ]
    fitnesses = [ind.fitness for ind in population]
    record = GenerationRecord(
        generation=generation,
        rows=rows,
        best_fitness=max(fitnesses),
        mean_fitness=float(np.mean(fitnesses)),
        elite_ids=elite_ids,
    )

    new_population = list(elites)
    for _ in range(cfg.population_size - len(elites)):
        parent = elites[int(rng.integers(0, len(elites)))]
        child_genome = mutate(parent.genome, cfg.mutation, rng)
        child_structure = _structure_for(child_genome, sim_cfg)
        correspondence = match(_structure_for(parent.genome, sim_cfg), child_structure)
        if cfg.inheritance == INHERIT_TRANSFER:
            params = map_weights(parent.params, correspondence, child_structure, rng)
        else:
            params = scratch_init(
                child_structure, cfg.controller_kind, rng, cfg.feature_mode, cfg.bounds
            )
        child = Individual(
            id=next(ids),
            genome=child_genome,
            graph_key=graph_hash(child_structure),
            params=params,
            parent_id=parent.id,
            birth_generation=generation,
        )
        new_population.append(child)
        if sink is not None:
            sink(
                {
                    "event": "birth",
                    "id": child.id,
                    "parent_id": parent.id,
                    "generation": generation,
                    "genome": serialize(child_genome),
                    "matched_actuators": correspondence.matched_actuators,
                    "new_actuators": correspondence.new_actuators,
                    "removed_actuators": correspondence.removed_actuators,
                }
            )
    return new_population, record


def run(
    cfg: EvoConfig,
    ppo_cfg: PpoConfig | None = None,
    sim_cfg: SimConfig = DEFAULT_SIM,
    sink=None,
    train_log=None,
) -> RunResult:
    """Full co-design run; returns the best trained individual and history."""
    ppo_cfg = ppo_cfg or PpoConfig()
    rng = np.random.default_rng([cfg.seed, 11])
    ids = count()
    population = init_population(cfg, rng, sim_cfg, ids=ids, sink=sink)
    history = []
    for generation in range(1, cfg.generations + 1):
        population, record = generation_step(
            population,
            cfg,
            rng,
            ppo_cfg=ppo_cfg,
            sim_cfg=sim_cfg,
            generation=generation,
            ids=ids,
            sink=sink,
            train_log=train_log,
        )
        history.append(record)
    trained = [ind for ind in population if ind.fitness is not None]
    best = sorted(trained, key=lambda ind: (-ind.fitness, ind.id))[0]
    return RunResult(best=best, history=history, population=population)

"""
End-to-end procedure: demonstrations -> PCA fit -> discretizer -> projected learning.

All randomness descends from one master seed. ``child_seed(master, *path)``
derives an independent 64-bit seed from a counter path via numpy's
SeedSequence, using these paths:

    (0,)                 demonstration collection (levels, modes, actions)
    (1,)                 pretraining run for the epsilon_greedy_pretrained source
    (2, trial, 0)        level seeds and start modes of one training trial
    (2, trial, 1)        epsilon draws and tie-breaks of one training trial

Trial streams do not depend on ``k``, so a dimension sweep compares every
``k`` on the same level sequence.
"""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field

import numpy as np

from . import pca
from .learner import (
    Discretizer, EpisodeRecord, LearnerParams, QTable, StateEncoder, run_episode,
)
from .platformer import (
    FEATURE_NAMES, FEATURE_RANGES, MODES, N_ACTIONS, N_FEATURES, EnvConfig, LevelConfig,
    Platformer, generate_level,
)
from .platformer.level import SEED_MAX

DEMO_POLICIES = ("random", "epsilon_greedy_pretrained")


class ConfigError(ValueError):
    pass


class DegenerateDemonstrations(ValueError):
    pass


def child_seed(master: int, *path: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def child_rng(master: int, *path: int) -> random.Random:
    return random.Random(child_seed(master, *path))


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one projected-learning run depends on.

    ``k = None`` selects the full-state baseline: the learner keys on the
    raw integer observation instead of projected bins.
    """

    k: int | None = 4
    demo_episodes: int = 200
    demo_policy: str = "random"
    demo_pretrain_episodes: int = 200
    standardize: bool = True
    bins_per_dim: int = 20
    params: LearnerParams = field(default_factory=LearnerParams)
    episodes: int = 1500
    trials: int = 20
    seed: int = 0
    difficulty: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    level: LevelConfig = field(default_factory=LevelConfig)

    def __post_init__(self):
        if self.k is not None and not 1 <= self.k <= N_FEATURES:
            raise ConfigError(f"k must be in [1, {N_FEATURES}] or None, got {self.k}")
        if self.demo_episodes < 1:
            raise ConfigError(f"demo_episodes must be positive, got {self.demo_episodes}")
        if self.demo_policy not in DEMO_POLICIES:
            raise ConfigError(f"demo_policy must be one of {DEMO_POLICIES}")
        if self.bins_per_dim < 1:
            raise ConfigError("bins_per_dim must be positive")
        if self.episodes < 0 or self.trials < 1:
            raise ConfigError("episodes must be >= 0 and trials >= 1")
        if self.difficulty != 0:
            raise ConfigError("only difficulty 0 is supported")


@dataclass
class DemonstrationSet:
    observations: np.ndarray
    policy: str
    episodes: int
    level_seeds: list

    def validate(self):
        obs = self.observations
        if obs.ndim != 2 or obs.shape[1] != N_FEATURES:
            raise ValueError(f"expected n x {N_FEATURES} observations, got {obs.shape}")
        lo = np.array([r[0] for r in FEATURE_RANGES])
        hi = np.array([r[1] for r in FEATURE_RANGES])
        bad = (obs < lo) | (obs > hi)
        if bad.any():
            row = int(np.argwhere(bad)[0][0])
            raise ValueError(f"row {row} is outside the observation ranges: {obs[row]}")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(FEATURE_NAMES)
            writer.writerows(self.observations.astype(int).tolist())


class LevelStream:
    """Fresh level and start mode per episode, drawn from one rng."""

    def __init__(self, rng: random.Random, cfg: PipelineConfig):
        self.rng = rng
        self.cfg = cfg
        self.seeds: list = []

    def next(self):
        seed = self.rng.randint(0, SEED_MAX)
        mode = MODES[self.rng.randrange(len(MODES))]
        self.seeds.append(seed)
        return generate_level(seed, self.cfg.difficulty, self.cfg.level), mode


def _rollout(env, spec, mode, policy, rows):
    obs = env.reset(spec, mode)
    rows.append(obs)
    done = False
    steps = 0
    while not done:
        obs, _, done, _ = env.step(policy(obs))
        rows.append(obs)
        steps += 1
    return steps


def pretrain_raw(cfg: PipelineConfig, episodes: int, rng_path=(1,)) -> QTable:
    """Briefly train a full-state learner (used as a demonstration source)."""
    q = QTable(N_ACTIONS)
    rng = child_rng(cfg.seed, *rng_path)
    levels = LevelStream(rng, cfg)
    env = Platformer(cfg.env)
    encoder = StateEncoder(None, None)
    for _ in range(episodes):
        spec, mode = levels.next()
        run_episode(env, encoder, q, cfg.params, rng, reset_args=(spec, mode))
    return q


def collect_demonstrations(cfg: PipelineConfig, policy: str | None = None,
                           episodes: int | None = None) -> DemonstrationSet:
    """Roll out the demonstration policy and record every visited observation."""
    from .learner import select_action

    policy = policy or cfg.demo_policy
    episodes = cfg.demo_episodes if episodes is None else episodes
    if episodes < 1:
        raise ConfigError("need at least one demonstration episode")
    if policy not in DEMO_POLICIES:
        raise ConfigError(f"unknown demonstration policy {policy!r}")
    rng = child_rng(cfg.seed, 0)
    levels = LevelStream(rng, cfg)
    env = Platformer(cfg.env)
    if policy == "random":
        def act(obs):
            return rng.randrange(N_ACTIONS)
    else:
        q = pretrain_raw(cfg, cfg.demo_pretrain_episodes)

        def act(obs):
            return select_action(q, obs, cfg.params, rng)

    rows: list = []
    for _ in range(episodes):
        spec, mode = levels.next()
        _rollout(env, spec, mode, act, rows)
    demos = DemonstrationSet(np.array(rows, dtype=float), policy, episodes, list(levels.seeds))
    demos.validate()
    return demos


@dataclass
class BuiltPipeline:
    basis: pca.PrincipalBasis
    truncated: pca.TruncatedBasis
    discretizer: Discretizer
    demonstrations: DemonstrationSet

    def encoder(self, verify=False) -> StateEncoder:
        return StateEncoder(self.truncated, self.discretizer, verify=verify)


def fit_basis(demos: DemonstrationSet, standardize=True) -> pca.PrincipalBasis:
    obs = demos.observations
    if np.all(obs == obs[0]):
        raise DegenerateDemonstrations("all demonstration rows are identical")
    basis = pca.fit_pca(obs, standardize=standardize)
    if np.clip(basis.eigenvalues, 0, None).sum() <= 0.0:
        raise DegenerateDemonstrations("demonstrations have a zero variance spectrum")
    return basis


def discretizer_for(tb: pca.TruncatedBasis, demos: DemonstrationSet, bins_per_dim: int):
    return Discretizer.from_coords(pca.project_batch(tb, demos.observations), bins_per_dim)


def build_pipeline(cfg: PipelineConfig, demos: DemonstrationSet | None = None,
                   basis: pca.PrincipalBasis | None = None) -> BuiltPipeline:
    """Collect demonstrations (unless given), fit PCA once, truncate, set bin bounds."""
    if cfg.k is None:
        raise ConfigError("the full-state baseline has no projection to build")
    if demos is None:
        demos = collect_demonstrations(cfg)
    if basis is None:
        basis = fit_basis(demos, cfg.standardize)
    tb = pca.truncate(basis, cfg.k)
    return BuiltPipeline(basis, tb, discretizer_for(tb, demos, cfg.bins_per_dim), demos)


def train(cfg: PipelineConfig, encoder: StateEncoder, trial: int = 0,
          q: QTable | None = None, trace_hook=None) -> list:
    """Run ``cfg.episodes`` learning episodes on fresh levels; one record each."""
    levels = LevelStream(child_rng(cfg.seed, 2, trial, 0), cfg)
    rng = child_rng(cfg.seed, 2, trial, 1)
    env = Platformer(cfg.env)
    q = QTable(N_ACTIONS) if q is None else q
    records: list[EpisodeRecord] = []
    for _ in range(cfg.episodes):
        spec, mode = levels.next()
        records.append(run_episode(env, encoder, q, cfg.params, rng,
                                   reset_args=(spec, mode), trace_hook=trace_hook))
    return records


def make_encoder(cfg: PipelineConfig, built: BuiltPipeline | None, verify=False) -> StateEncoder:
    if cfg.k is None:
        return StateEncoder(None, None)
    return built.encoder(verify=verify)

# ## Learning on a 4-dimensional manifold
#
# Fit the basis once, then train Q(lambda) on binned 4-d projections for a
# few hundred episodes and compare with a random player.

import numpy as np

from manifold_rl.learner import QTable
from manifold_rl.pipeline import PipelineConfig, build_pipeline, train
from manifold_rl.platformer import Platformer, generate_level

cfg = PipelineConfig(k=4, episodes=400)
built = build_pipeline(cfg)
enc = built.encoder()
print("bin bounds", built.discretizer.lo.round(2), built.discretizer.hi.round(2))

q = QTable()
records = train(cfg, enc, q=q)
returns = np.array([r.total_return for r in records])
print("mean return per 100 episodes:", returns.reshape(-1, 100).mean(axis=1).round(1))
print("distinct manifold states visited:", len(q.rows))

# ### Twenty unseen levels, no further learning
#
# Evaluated with the training epsilon: a purely greedy player can get stuck
# in front of a wall when two situations share one bin.

import random
from collections import Counter

from manifold_rl.learner import run_episode

print(generate_level(424242).render())
rng = random.Random(0)
env = Platformer()
evals = [run_episode(env, enc, q, cfg.params, rng, learn=False,
                     reset_args=(generate_level(900_000 + i), ("small", "large", "fire")[i % 3]))
         for i in range(20)]
print("mean return", np.mean([r.total_return for r in evals]).round(1),
      Counter(r.cause for r in evals))

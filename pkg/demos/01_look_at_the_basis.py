# ## Fitting a principal basis to random play
#
# Collect demonstration observations from a uniform-random player, fit PCA
# and see which features each component leans on.

import numpy as np

from manifold_rl import pca
from manifold_rl.pipeline import PipelineConfig, collect_demonstrations, fit_basis
from manifold_rl.platformer import FEATURE_NAMES

np.set_printoptions(precision=2, suppress=True, linewidth=120)

cfg = PipelineConfig(demo_episodes=50)
demos = collect_demonstrations(cfg)
print(demos.observations.shape, "observations")

# ### Standardized (the default)

basis = fit_basis(demos, standardize=True)
print("eigenvalues", basis.eigenvalues)
print("cumulative", [round(pca.explained_variance_ratio(basis, k), 3) for k in range(1, 10)])

for j in range(4):
    col = np.abs(basis.w[:, j])
    top = np.argsort(-col)[:3]
    print(f"PC{j + 1}:", ", ".join(f"{FEATURE_NAMES[i]} {col[i]:.2f}" for i in top))

# ### Without standardization the wide-range enemy coordinates take over

raw = fit_basis(demos, standardize=False)
print(dict(zip(FEATURE_NAMES, np.abs(raw.w[:, 0]).round(2).tolist())))

# ### Round trip through the full basis is exact

tb = pca.truncate(basis, 9)
x = demos.observations[123]
print(x, pca.reconstruct(tb, pca.project(tb, x)).round(9))

# ## A small dimension sweep
#
# The same runner the CLI uses (``python -m manifold_rl sweep``), scaled
# down so it finishes in a couple of minutes. Writes CSVs and sweep.svg.
#
# Three trials of 300 episodes are noisy: single trials at the same k can
# differ by 600 points. A stable ordering needs about 20 trials of 1500.

from pathlib import Path

from manifold_rl import harness

here = Path(__file__).parent
out = here / "sweep_out"
result = harness.cmd_sweep(here / "desk.ini", out, {"trials": 3, "episodes": 300})

for k in result.dims:
    finals = result.final_means(k, window=100)
    print(f"k={harness.dim_label(k):>3}: last-100 mean {finals.mean():8.1f}  per trial {finals.round(0)}")
print("wrote", sorted(p.name for p in out.iterdir()))

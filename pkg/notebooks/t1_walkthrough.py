# ---
# jupytext:
#   formats: py:percent
#   text_representation:
#     extension: .py
#     format_name: percent
# ---

# %% [markdown]
# # T1 by hand and by DRSD
#
# T1 is the smallest bundled instance: one first-stage variable with cost 1,
# recourse `y >= w - x` at unit cost, and `w` uniform on {1, 3}. Under the true
# distribution x costs x + E[max(w - x, 0)]: flat at 2 on [0, 1], rising after.

# %%
import numpy as np

from drsd import AmbiguityConfig, DRLSParams, DRSDParams, run_drls, run_drsd
from drsd.cli import read_instance
from drsd.harness import ExperimentConfig, brute_force_dro, replicate

inst = read_instance("t1.json")
print(inst.name, inst.dx, inst.d_omega)

# %% [markdown]
# The brute-force oracle enumerates dual vertices and the extreme points of
# the ambiguity set, then grid-searches x. Cheap here.

# %%
for amb in (AmbiguityConfig.moment(1), AmbiguityConfig.wasserstein(0.5), AmbiguityConfig.wasserstein(1000.0)):
    x, v = brute_force_dro(inst, amb)
    print(f"{amb.label():24s} x={x[0]:.3f}  value={v:.4f}")

# %% [markdown]
# One DRSD run. The estimate it reports is an in-sample quantity, so it moves
# with the sample: with `n3` threes among `k` draws it equals 1 + 2 n3 / k.

# %%
rep = run_drsd(inst, AmbiguityConfig.moment(1), DRSDParams(seed=7))
print(rep.objective, rep.iterations, rep.counters)
print("1 + 2 * 136/256 =", 1 + 2 * 136 / 256)

# %% [markdown]
# Averaging over replications removes most of that noise.

# %%
res = replicate(ExperimentConfig(inst, "drsd", AmbiguityConfig.moment(1), DRSDParams(), reps=30))
print(f"mean {res.stats.objective:.4f} +- {res.stats.objective_hw:.4f}")

# %%
drls = run_drls(inst, AmbiguityConfig.wasserstein(0.5), DRLSParams(N=200, seed=3))
print(drls.label, drls.objective, np.round(drls.incumbent, 4))

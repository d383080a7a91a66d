# ---
# jupytext:
#   formats: py:percent
#   text_representation:
#     extension: .py
#     format_name: percent
# ---

# %% [markdown]
# # cap1000: DRSD against DR L-shaped
#
# A capacity-planning instance with 1000 scenarios. DRSD samples one scenario
# per iteration; DRLS-N fixes N draws up front and runs L-shaped on them.
# Takes a few minutes with 30 replications per row; lower `REPS` to skim.

# %%
from drsd import AmbiguityConfig, DRLSParams, DRSDParams
from drsd.cli import read_instance
from drsd.harness import ExperimentConfig, format_estimates_table, format_times_table, replicate

REPS = 30
inst = read_instance("cap1000.json")
amb = AmbiguityConfig.moment(2)

# %%
rows = [replicate(ExperimentConfig(inst, "drsd", amb, DRSDParams(), reps=REPS)).stats]
for N in (100, 500):
    rows.append(replicate(ExperimentConfig(inst, "drls", amb, DRLSParams(N=N), reps=REPS)).stats)

# %%
print(format_estimates_table(rows))
print()
print(format_times_table(rows))

# %% [markdown]
# The DRSD row should sit inside the DRLS-500 interval or overlap it. DRLS
# spends most of its time in subproblem solves (iterations x unique draws),
# DRSD in separation.

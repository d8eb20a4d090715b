# %% [markdown]
# Compare the four model variants (bend prior centred on 2000 or 2007,
# unweighted or tenure-weighted spatial effects) by posterior median
# deviance, p_V and DIC.  Smaller DIC is the better fit.

# %%
import numpy as np

from bentcable.assess import summarize
from bentcable.model import HyperConfig
from bentcable.sampler import run_chains
from bentcable.simulate import default_scenario, simulate_dataset
from bentcable.spatial import TENURE_WEIGHTED, UNWEIGHTED, build_weights

# %%
truth = default_scenario(seed=2, mode_spatial=TENURE_WEIGHTED)
panel, truth = simulate_dataset(truth, np.random.default_rng(7))

# %%
rows = []
for m2 in (2000.0, 2007.0):
    for mode in (UNWEIGHTED, TENURE_WEIGHTED):
        W = build_weights(truth.graph, panel.tenure, mode)
        samples = run_chains(panel, HyperConfig(m2_bend=m2, mode_spatial=mode), W,
                             n_chains=2, n_iter=2000, burn_in=1000, seed=3)
        rep = summarize(samples, panel)
        rows.append((m2, mode, rep.posterior_median_deviance, rep.p_v, rep.dic,
                     rep.summaries["Tbar"]["median"]))

# %%
print(f"{'m2':>6s} {'spatial':>16s} {'deviance':>10s} {'p_V':>8s} {'DIC':>10s} {'Tbar':>8s}")
for m2, mode, dev, pv, d, tb in rows:
    print(f"{m2:6.0f} {mode:>16s} {dev:10.2f} {pv:8.2f} {d:10.2f} {tb:8.2f}")

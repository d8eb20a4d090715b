# %% [markdown]
# The building blocks: the bent-cable kernel, its transition window, the
# double-log response and the land-tenure covariate.

# %%
import numpy as np

from bentcable.cable import (
    BendParams,
    bend_kernel,
    bend_kernel_derivative,
    bend_mean,
    tenure_covariate,
    transform_response,
    transition_window,
)

# %%
# A bend centred on 2003 with half-width 2: flat before 2001, slope one
# after 2005, quadratic in between.
years = np.arange(1996, 2011)
q = bend_kernel(years, tau=2003.0, gamma=2.0)
dq = bend_kernel_derivative(years, tau=2003.0, gamma=2.0)
for t, a, b in zip(years, q, dq):
    print(f"{t}  q={a:6.3f}  dq/dt={b:5.3f}")

# %%
# A full cable: slope 0.02 before the bend, 0.02 - 0.05 after it.
p = BendParams(alpha1=0.02, alpha2=-0.05, tau=2003.0, gamma=2.0)
print(transition_window(p))
print(np.round(bend_mean(years - 2001.0, BendParams(0.02, -0.05, 2.0, 2.0)), 4))

# %%
# Response: annual deforested share, log-transformed twice.
print(transform_response([120.0, 15.0, 0.4], [50_000.0, 50_000.0, 50_000.0]))

# %%
# Tenure: log10 ratio of freehold to leasehold shares, each offset by 0.01.
for name, free, lease in [("mostly freehold", 1.0, 0.0), ("mostly leasehold", 0.0, 1.0),
                          ("mixed", 0.465, 0.535)]:
    print(f"{name:17s} L = {tenure_covariate(free, lease):+.3f}")

# %% [markdown]
# A small phase-transition diagram printed as text (rows: delta, columns: rho).

# %%
import numpy as np

from cosparse import run_phase_diagrams

# %%
delta = np.array([0.2, 0.4, 0.6, 0.8])
rho = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
grids = run_phase_diagrams(2.0, 40, delta, rho, trials=5, seed=0)

# %%
for alg, grid in grids.items():
    print(alg)
    print("delta\\rho " + " ".join(f"{r:5.1f}" for r in rho))
    for i, dl in enumerate(delta):
        cells = " ".join("   - " if np.isnan(v) else f"{v:5.2f}" for v in grid.rates[i])
        print(f"{dl:9.1f} {cells}")

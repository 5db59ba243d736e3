# %% [markdown]
# Cosparse signals: operators, subspaces and how many measurements identify them.

# %%
import numpy as np

from cosparse import (
    PixelGraph,
    cosupport_of,
    finite_difference_2d,
    generate_cosparse_signal,
    kappa_brute_force,
    kappa_dif_bounds,
    kappa_general_position,
    random_tight_frame_operator,
    subspace_count_log2,
    subspace_dim_dif,
    uniqueness_verdict,
)

# %%
# A redundant analysis operator: 24 unit-norm rows in R^20 forming a tight frame
omega = random_tight_frame_operator(24, 20, seed=0)
A = omega.dense()
print(A.shape, np.allclose(A.T @ A, 24 / 20 * np.eye(20)))

# %%
# A signal orthogonal to 17 of the rows lives in a 3-dimensional subspace
sig = generate_cosparse_signal(omega, 17, seed=1)
z = omega.apply(sig.x)
print("cosparsity", sig.cosparsity)
print("smallest |coefficients|", np.sort(np.abs(z))[:18].round(12))

# %%
# In general position, l zero coefficients leave d - l degrees of freedom.
# With the cosupport known, m >= kappa measurements suffice; unknown, m >= 2 kappa.
kappa = kappa_general_position(20, 17)
for m in (2, 3, 5, 6):
    v = uniqueness_verdict(kappa, m)
    print(m, v.known, v.unknown)

# %%
# Finite differences on a lattice are far from general position: rows tied by
# cycles, so many zeros can still leave large piecewise-constant subspaces.
g = PixelGraph(4)
for l in range(5, 25, 3):
    lo, hi = kappa_dif_bounds(16, l)
    print(f"l={l:2d}  kappa={kappa_brute_force(g, l):2d}  bounds=[{lo:.2f}, {hi:.1f}]")

# %%
# A two-level image is cosparse: only the edges along its boundary are nonzero.
n = 32
img = np.zeros((n, n))
img[:16, :16] = 1.0
fd = finite_difference_2d(n)
cos = cosupport_of(fd, img.ravel())
print("rows", fd.p, "zeros", len(cos), "subspace dimension", subspace_dim_dif(fd.graph, cos))

# %%
# Unions of subspaces: a redundant analysis model has many more candidate
# subspaces than a synthesis model of the same dimension.
print(subspace_count_log2("synthesis", 400, 3))
print(subspace_count_log2("analysis", 400, 197))

# %% [markdown]
# Greedy analysis pursuit versus analysis l1, and the certificates that predict success.

# %%
import warnings

import numpy as np

from cosparse import (
    ConvergenceWarning,
    GapConfig,
    analysis_l1_solve,
    debias,
    erc_analysis,
    gap_one_step_check,
    gap_relation_residual,
    gap_solve,
    gaussian_measurement,
    generate_cosparse_signal,
    heuristic_row_l2,
    nsc_sampled,
    random_tight_frame_operator,
)

# %%
omega = random_tight_frame_operator(24, 20, seed=3)
M = gaussian_measurement(15, 20, seed=4)
sig = generate_cosparse_signal(omega, 18, seed=5)
y = M.apply(sig.x)

# %%
res = gap_solve(M, y, omega, GapConfig(t=1.0))
print(res.status, res.flags["stop_reason"], "iterations", res.iterations)
print("removed per iteration", [g.tolist() for g in res.trace])
print("relative error", res.relative_error(sig.x))

# %%
with warnings.catch_warnings():
    warnings.simplefilter("ignore", ConvergenceWarning)
    x_l1, info = analysis_l1_solve(M, y, omega, full_output=True)
print(info)
fit = debias(x_l1, omega, M, y)
print("l1 + debias relative error", fit.relative_error(sig.x))

# %%
# Certificates for this cosupport
for cert in (
    erc_analysis(omega, sig.cosupport, M),
    nsc_sampled(omega, sig.cosupport, M, n_samples=500, seed=0),
    heuristic_row_l2(omega, sig.cosupport, M),
    gap_relation_residual(omega, sig.cosupport, M, y, sig.x),
    gap_one_step_check(omega, sig.cosupport, M, sig.x),
):
    print(f"{cert.kind:13s} value={cert.value:.3g} threshold={cert.threshold} holds={cert.holds}")

# %%
# How often does the recovery certificate hold, and does GAP succeed when it does?
rng = np.random.default_rng(0)
held = ok = 0
for _ in range(100):
    s = int(rng.integers(2**31))
    om = random_tight_frame_operator(24, 20, s)
    Mi = gaussian_measurement(15, 20, s + 1)
    si = generate_cosparse_signal(om, int(rng.integers(17, 20)), s + 2)
    if erc_analysis(om, si.cosupport, Mi).holds:
        held += 1
        ok += gap_solve(Mi, Mi.apply(si.x), om).relative_error(si.x) < 1e-6
print(f"certificate held on {held}/100; GAP recovered {ok} of those")

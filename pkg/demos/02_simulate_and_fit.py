"""Simulate capture histories from the memory hazard and fit both models.

Generates one dataset at the reference configuration (20 individuals,
h0 = 1.65, sigma2 = 0.22, beta = 0.37, 12 days, 30 traps), fits the memory
and memoryless models, and compares parameters, abundance, and AIC. A
coarser mesh than production keeps this demo around a minute.
"""

import mscr

cfg = mscr.SimMscrConfig(n_individuals=20, h0=1.65, sigma2=0.22, beta=0.37,
                         T=12.0, seed=11, traps=mscr.default_trap_grid())
sim = mscr.simulate_mscr(cfg)
print(f"simulated: {sim.n_observed}/{cfg.n_individuals} individuals observed, "
      f"{sim.dataset.n_detections} detections")

mesh = mscr.build_mesh(cfg.traps, buffer=2.0, spacing=0.4)
print(f"fitting on a {mesh.size}-point mesh, B = 100 ...")

results = {}
for kind in (mscr.MSCR, mscr.SCR):
    results[kind] = mscr.fit(sim.dataset, kind, mesh, B=100)

print(f"\n{'':14s}{'truth':>10s}{mscr.MSCR:>18s}{mscr.SCR:>18s}")
truth = {"h0": cfg.h0, "sigma2": cfg.sigma2, "beta": cfg.beta, "N": 20}


def cell(fr, name):
    if name == "N":
        return f"{fr.N_hat:8.2f} ({fr.se_N:5.2f})"
    if name == "beta" and fr.kind == mscr.SCR:
        return f"{'--':>16s}"
    est = getattr(fr.params_hat, name)
    se = fr.se_params[name] if fr.se_params else float("nan")
    return f"{est:8.3f} ({se:5.3f})"


for name in ("h0", "sigma2", "beta", "N"):
    t = f"{truth[name]:10.2f}"
    print(f"{name:14s}{t}{cell(results[mscr.MSCR], name):>18s}"
          f"{cell(results[mscr.SCR], name):>18s}")

m, s = results[mscr.MSCR], results[mscr.SCR]
print(f"\nlog-likelihood: {m.loglik:.2f} vs {s.loglik:.2f}")
print(f"AIC:            {m.aic:.2f} vs {s.aic:.2f} "
      f"(delta = {s.aic - m.aic:.2f} in favor of the memory model)")
print(f"N 95% CI:       ({m.ci_N[0]:.2f}, {m.ci_N[1]:.2f}) vs "
      f"({s.ci_N[0]:.2f}, {s.ci_N[1]:.2f})")
print(f"converged:      {m.converged} / {s.converged}; "
      f"max |gradient| {m.max_abs_gradient:.2e} / {s.max_abs_gradient:.2e}")
print("\nnote the memoryless fit's inflated N: clustered revisits read as "
      "high detectability near the center, which it reconciles by shrinking "
      "sigma2 and overestimating abundance")

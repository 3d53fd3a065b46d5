"""Abundance estimation step by step.

Shows the pieces behind the reported N: the mesh-averaged detection
probability, the ratio estimate N = n / p, the two-part variance (delta
method through the parameter covariance plus a binomial term), and the
lognormal interval compared with the symmetric one.
"""

import mscr
from mscr.inference import ht_abundance, ht_variance, lognormal_ci_N, wald_ci_N
from mscr.likelihood import detect_prob

cfg = mscr.SimMscrConfig(n_individuals=20, h0=1.65, sigma2=0.22, beta=0.37,
                         T=12.0, seed=29, traps=mscr.default_trap_grid())
sim = mscr.simulate_mscr(cfg)
mesh = mscr.build_mesh(cfg.traps, buffer=2.0, spacing=0.4)
fr = mscr.fit(sim.dataset, mscr.MSCR, mesh, B=100)

n = fr.n_observed
p = fr.p_hat
print(f"observed individuals:      n = {n}")
print(f"detection probability:     p(theta_hat) = {p:.4f}")
print(f"abundance:                 N = n / p = {ht_abundance(n, p):.3f}")

binom = n * (1 - p) / p ** 2
var_full = ht_variance(n, fr.params_hat, fr.cov_log_params, mesh,
                       cfg.traps, sim.dataset.window)
print(f"\nvariance, binomial term:   {binom:.3f}")
print(f"variance, with delta term: {var_full:.3f} "
      f"(parameter uncertainty adds {var_full - binom:.3f})")

lo, hi = lognormal_ci_N(fr.N_hat, fr.var_N)
wlo, whi = wald_ci_N(fr.N_hat, fr.var_N)
print(f"\n95% lognormal interval:    ({lo:.2f}, {hi:.2f})   <- reported")
print(f"95% symmetric interval:    ({wlo:.2f}, {whi:.2f})")
print("the lognormal form respects N > 0 and is wider on the right, which "
      "matters at small n")

print("\nsensitivity of p to the hazard scale (all else fixed):")
for s2 in (0.15, 0.22, 0.3):
    params = fr.params_hat.with_values(sigma2=s2)
    print(f"  sigma2 = {s2:.2f}: p = "
          f"{detect_prob(params, cfg.traps, mesh, sim.dataset.window):.4f}")

"""Where does linearized BP become unstable for not-all-equal 3-SAT?

Prints lambda_L as the degree grows, the bisected critical degree, and a
Monte Carlo look at how perturbations grow on random trees.
"""

from pik import amplification_exact, amplification_mc, family, lambda_L, resolve_builtin
from pik.stability import threshold_scan

for d in (3, 4, 4.5, 5, 8, 16):
    print(f"d = {d:>4}: lambda_L = {lambda_L(resolve_builtin(f'nae3sat:{d}')):.4f}")

d_star = threshold_scan(family("nae3sat"), 1.0, 20.0)
print(f"\ncritical degree d* = {d_star:.5f}")

m = resolve_builtin("nae3sat:8")
print("\nperturbation growth on Galton-Watson trees at d = 8")
for ell in (2, 4, 6, 8):
    est = amplification_mc(m, ell, 50_000, rng=ell)
    exact = amplification_exact(m, ell)
    print(f"  depth {ell}: alpha^(1/l) = {est.rate:.4f} +- {est.rate_stderr:.4f}"
          f"   (exact {exact ** (1 / ell):.4f}, lambda_L {lambda_L(m):.4f})")
print("the per-level rate creeps toward lambda_L as the depth grows")

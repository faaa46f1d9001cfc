"""Top eigenvalue of the centered nonbacktracking power, null versus planted.

Asymptotically the null spectrum stays near sqrt(lambda_L)^s while planted
instances reach lambda_L^s.  At a few thousand vertices the null edge still
carries a polynomial factor of roughly (s + 1), which swamps the gap until s
is far larger than practical.  This script prints both curves side by side.
"""

import math

from pik import build_centered_operator, lambda_L, resolve_builtin, sample_null, sample_planted
from pik import top_eigenpair

n = 4000
m = resolve_builtin("nae3sat:8")
lam = lambda_L(m)
null = build_centered_operator(m, sample_null(m, n, rng=0))
planted = build_centered_operator(m, sample_planted(m, n, rng=0)[0])

print(f"lambda_L = {lam:.4f}, sqrt(lambda_L) = {math.sqrt(lam):.4f}")
print(" s   |null|    |planted|   (s+1) sqrt(lam)^s   lam^s")
for s in range(1, 7):
    a = abs(top_eigenpair(null, s, rng=s).value)
    b = abs(top_eigenpair(planted, s, rng=s).value)
    print(f"{s:>2} {a:9.3f} {b:11.3f} {(s + 1) * lam ** (s / 2):17.3f} {lam ** s:9.3f}")

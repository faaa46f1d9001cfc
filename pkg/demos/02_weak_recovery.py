"""Spectral weak recovery on a planted NAE-3-SAT instance.

Samples a planted instance at d = 16, runs the nonbacktracking power
method with its descent rule, and compares the best candidate overlap
against random unit vectors.  The same pipeline on a null instance
serves as a control.
"""

import math

from pik import best_overlap, random_overlap_quantile, resolve_builtin, weak_recover
from pik import sample_colors, sample_null, sample_planted

n = 5000
m = resolve_builtin("nae3sat:16")

inst, colors = sample_planted(m, n, rng=1)
out = weak_recover(inst, m, rng=1)
print(f"planted: m = {out.m}, descent path {out.path}, {len(out.candidates())} candidates")
print(f"  best overlap {best_overlap(out.vectors, inst, colors, m):.1f}"
      f"  (0.05 sqrt(n) = {0.05 * math.sqrt(n):.1f},"
      f" random 99% = {random_overlap_quantile(inst, colors, m, rng=0):.2f})")

null = sample_null(m, n, rng=2)
ref = sample_colors(m, null.types, rng=3)
out0 = weak_recover(null, m, rng=2)
print(f"null:    best overlap {best_overlap(out0.vectors, null, ref, m):.2f}"
      f"  (random 99% = {random_overlap_quantile(null, ref, m, rng=0):.2f})")

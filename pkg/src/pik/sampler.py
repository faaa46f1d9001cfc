"""Null and planted instance sampling plus structural accessors.

Sampling never enumerates the ``n^a`` candidate tuples.  For factor type
``i`` with ``N`` class-matching ordered tuples and a per-tuple ceiling
``p = phi_max / n^(a-1)``, the number of candidates is Binomial(N, p); that
many distinct tuples are drawn uniformly (colliding draws are redrawn) and
each is then kept with probability ``phi(colors) / phi_max``.  The result is
the exact independent-inclusion law.  When ``N`` exceeds the int64 range the
binomial is replaced by its Poisson limit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DensityExceedsOne, InvalidParams
from .model import ObservationModel

_BINOMIAL_MAX = 2 ** 62


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def spawn_seeds(seed, k: int):
    """``k`` independent child seed sequences of a root seed."""
    return np.random.SeedSequence(seed).spawn(k)


@dataclass(eq=False)
class FactorGraphInstance:
    """Bipartite factor graph with typed variables.

    ``groups[i]`` holds an (m_i, a_i) integer array, one row per observed
    factor of type ``i``.  Global factor ids enumerate groups in order.
    """

    n: int
    types: np.ndarray
    groups: list
    provenance: dict = field(default_factory=lambda: {"kind": "manual", "seed": None})

    def __post_init__(self):
        self.types = np.asarray(self.types, dtype=np.int64)
        self.groups = [np.asarray(g, dtype=np.int64).reshape(len(g), -1) if len(g)
                       else np.asarray(g, dtype=np.int64) for g in self.groups]

    @classmethod
    def from_factors(cls, model, n, types, factors, provenance=None):
        """Build from a list of ``(factor_type, tuple)`` pairs."""
        rows = [[] for _ in model.factors]
        for i, tup in factors:
            rows[i].append(tuple(tup))
        groups = [np.array(r, dtype=np.int64).reshape(len(r), f.arity)
                  for r, f in zip(rows, model.factors)]
        inst = cls(n, np.asarray(types), groups, provenance or {"kind": "manual", "seed": None})
        check_instance(inst, model)
        return inst

    @property
    def n_factors(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def factors(self):
        out = []
        for i, g in enumerate(self.groups):
            out.extend((i, tuple(int(v) for v in row)) for row in g)
        return out

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([len(g) for g in self.groups])])

    @cached_property
    def adjacency(self):
        """Per-variable list of ``(factor id, position)``."""
        adj = [[] for _ in range(self.n)]
        for i, g in enumerate(self.groups):
            base = self.offsets[i]
            for r, row in enumerate(g):
                for pos, v in enumerate(row):
                    adj[int(v)].append((int(base + r), pos))
        return adj

    def factor(self, fid: int):
        i = int(np.searchsorted(self.offsets, fid, side="right") - 1)
        return i, self.groups[i][fid - self.offsets[i]]


def check_instance(inst: FactorGraphInstance, model: ObservationModel) -> None:
    if len(inst.groups) != model.n_factors:
        raise InvalidParams("instance and model disagree on the number of factor types")
    if inst.types.shape != (inst.n,):
        raise InvalidParams("type assignment has the wrong length")
    for i, g in enumerate(inst.groups):
        f = model.factors[i]
        if len(g) == 0:
            continue
        if g.shape[1] != f.arity:
            raise InvalidParams(f"factor type {i}: tuples of width {g.shape[1]}, arity {f.arity}")
        if g.min() < 0 or g.max() >= inst.n:
            raise InvalidParams(f"factor type {i}: variable id out of range")
        if np.any(inst.types[g] != np.asarray(f.cls)):
            raise InvalidParams(f"factor type {i}: variable types do not match the class")
        s = np.sort(g, axis=1)
        if np.any(s[:, 1:] == s[:, :-1]):
            raise InvalidParams(f"factor type {i}: repeated variable inside a tuple")


def sample_types(model: ObservationModel, n: int, rng=None) -> np.ndarray:
    if n < 1:
        raise InvalidParams("n must be positive")
    rng = as_generator(rng)
    if model.n_types == 1:
        return np.zeros(n, dtype=np.int64)
    return rng.choice(model.n_types, size=n, p=model.type_dist).astype(np.int64)


def sample_colors(model: ObservationModel, types: np.ndarray, rng=None) -> np.ndarray:
    rng = as_generator(rng)
    colors = np.zeros(len(types), dtype=np.int64)
    for t in range(model.n_types):
        idx = np.flatnonzero(types == t)
        colors[idx] = rng.choice(model.q, size=idx.size, p=model.priors[t])
    return colors


def _tuple_count(cls, counts) -> int:
    """Number of ordered tuples of distinct variables with the given class."""
    need = {}
    for t in cls:
        need[t] = need.get(t, 0) + 1
    total = 1
    for t, r in need.items():
        avail = int(counts[t])
        for k in range(r):
            total *= max(avail - k, 0)
    return total


def _draw_count(rng, n_tuples: int, p: float) -> int:
    if n_tuples == 0 or p == 0:
        return 0
    if n_tuples <= _BINOMIAL_MAX:
        return int(rng.binomial(n_tuples, p))
    return int(rng.poisson(n_tuples * p))


def _distinct_tuples(rng, k: int, cls, pools) -> np.ndarray:
    """``k`` distinct ordered tuples, uniform among class-matching tuples."""
    arity = len(cls)
    kept = np.empty((0, arity), dtype=np.int64)
    while len(kept) < k:
        need = k - len(kept)
        draw = int(need * 1.1) + 8
        cols = [pools[t][rng.integers(0, len(pools[t]), size=draw)] for t in cls]
        cand = np.stack(cols, axis=1)
        if arity > 1:
            s = np.sort(cand, axis=1)
            cand = cand[np.all(s[:, 1:] != s[:, :-1], axis=1)]
        merged = np.concatenate([kept, cand])
        _, first = np.unique(merged, axis=0, return_index=True)
        first.sort()  # keep draw order so the first k survivors are uniform
        kept = merged[first]
    return kept[:k]


def _sample_factors(model, n, types, rng, colors=None):
    counts = np.bincount(types, minlength=model.n_types)
    pools = [np.flatnonzero(types == t) for t in range(model.n_types)]
    dbar = model.tables.avg_density
    groups = []
    for i, f in enumerate(model.factors):
        ceiling = f.phi_max if colors is not None else dbar[i]
        scale = float(n) ** (f.arity - 1)
        p = ceiling / scale
        if p > 1:
            raise DensityExceedsOne(
                f"factor {f.name!r}: inclusion probability {p:.3g} > 1 at n={n}")
        k = _draw_count(rng, _tuple_count(f.cls, counts), p)
        tuples = _distinct_tuples(rng, k, f.cls, pools) if k else np.empty((0, f.arity), np.int64)
        if colors is not None and len(tuples):
            accept = f.table[tuple(colors[tuples].T)] / f.phi_max
            tuples = tuples[rng.random(len(tuples)) < accept]
        order = np.lexsort(tuples.T[::-1]) if len(tuples) else np.arange(0)
        groups.append(tuples[order])
    return groups


def sample_planted(model: ObservationModel, n: int, rng=None):
    """Planted instance and its hidden coloring."""
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = as_generator(rng)
    types = sample_types(model, n, rng)
    colors = sample_colors(model, types, rng)
    groups = _sample_factors(model, n, types, rng, colors)
    inst = FactorGraphInstance(n, types, groups, {"kind": "planted", "seed": seed})
    return inst, colors


def sample_null(model: ObservationModel, n: int, rng=None) -> FactorGraphInstance:
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = as_generator(rng)
    types = sample_types(model, n, rng)
    groups = _sample_factors(model, n, types, rng)
    return FactorGraphInstance(n, types, groups, {"kind": "null", "seed": seed})


def degree_profile(instance: FactorGraphInstance, i: int, j: int) -> np.ndarray:
    """Per-variable count of type-``i`` factors holding that variable at slot ``j``."""
    g = instance.groups[i]
    if len(g) == 0:
        return np.zeros(instance.n, dtype=np.int64)
    return np.bincount(g[:, j], minlength=instance.n)


def _bipartite_csr(instance):
    """Adjacency of the bipartite graph; variables are 0..n-1, factors follow."""
    n = instance.n
    src, dst = [], []
    for i, g in enumerate(instance.groups):
        if len(g) == 0:
            continue
        fid = n + instance.offsets[i] + np.arange(len(g))
        for pos in range(g.shape[1]):
            src.append(g[:, pos])
            dst.append(fid)
    total = n + instance.n_factors
    if not src:
        return np.zeros(total + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    s = np.concatenate(src + dst)
    d = np.concatenate(dst + src)
    order = np.argsort(s, kind="stable")
    indptr = np.concatenate([[0], np.cumsum(np.bincount(s, minlength=total))])
    return indptr, d[order]


def ball_excess(indptr, nbrs, root: int, r: int) -> int:
    """Cyclomatic number of the radius-``r`` ball (induced subgraph) around ``root``."""
    dist = {root: 0}
    dq = deque([root])
    while dq:
        u = dq.popleft()
        if dist[u] == r:
            continue
        for w in nbrs[indptr[u]:indptr[u + 1]]:
            w = int(w)
            if w not in dist:
                dist[w] = dist[u] + 1
                dq.append(w)
    twice_edges = 0
    for u in dist:
        for w in nbrs[indptr[u]:indptr[u + 1]]:
            if int(w) in dist:
                twice_edges += 1
    # repeated (variable, factor) incidences cannot occur: tuples are distinct
    return twice_edges // 2 - len(dist) + 1


def bicycle_free(instance: FactorGraphInstance, r: int) -> bool:
    """True iff no radius-``r`` ball of the bipartite graph holds two independent cycles."""
    if r < 1:
        raise InvalidParams("r must be at least 1")
    indptr, nbrs = _bipartite_csr(instance)
    total = len(indptr) - 1
    for v in range(total):
        if indptr[v + 1] - indptr[v] < 2:
            continue  # a leaf's ball sits inside its neighbour's ball
        if ball_excess(indptr, nbrs, v, r) > 1:
            return False
    return True


# ------------------------------------------------------------ text round trip

def write_instance(inst: FactorGraphInstance, path) -> None:
    prov = inst.provenance or {}
    lines = [f"# n {inst.n} seed {prov.get('seed')} provenance {prov.get('kind', 'manual')}"]
    lines += [f"v {v} {int(t)}" for v, t in enumerate(inst.types)]
    for i, g in enumerate(inst.groups):
        lines += [f"f {i} " + " ".join(str(int(x)) for x in row) for row in g]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path, model: ObservationModel) -> FactorGraphInstance:
    n = None
    seed = None
    kind = "manual"
    types = {}
    facs = []
    with open(path) as fh:
        for raw in fh:
            tok = raw.split()
            if not tok:
                continue
            if tok[0] == "#":
                kv = dict(zip(tok[1::2], tok[2::2]))
                n = int(kv["n"])
                seed = None if kv.get("seed") in (None, "None") else int(kv["seed"])
                kind = kv.get("provenance", "manual")
            elif tok[0] == "v":
                types[int(tok[1])] = int(tok[2])
            elif tok[0] == "f":
                facs.append((int(tok[1]), tuple(int(x) for x in tok[2:])))
            else:
                raise InvalidParams(f"unrecognised line in instance file: {raw.strip()!r}")
    if n is None:
        raise InvalidParams("instance file lacks the '# n ...' header")
    type_arr = np.array([types.get(v, 0) for v in range(n)], dtype=np.int64)
    return FactorGraphInstance.from_factors(model, n, type_arr, facs,
                                            {"kind": kind, "seed": seed})


def write_colors(colors, path) -> None:
    np.savetxt(path, np.asarray(colors, dtype=np.int64), fmt="%d")


def read_colors(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, dtype=np.int64))


def random_small_instance(model: ObservationModel, n: int, n_factors: int, rng=None):
    """Uniformly chosen class-consistent factors; meant for oracle tests at tiny n."""
    rng = as_generator(rng)
    types = sample_types(model, n, rng)
    pools = [np.flatnonzero(types == t) for t in range(model.n_types)]
    facs = []
    for _ in range(50 * n_factors):
        if len(facs) >= n_factors:
            break
        i = int(rng.integers(model.n_factors))
        cls = model.factors[i].cls
        if any(len(pools[t]) == 0 for t in cls):
            continue
        tup = tuple(int(rng.choice(pools[t])) for t in cls)
        if len(set(tup)) == len(tup) and (i, tup) not in facs:
            facs.append((i, tup))
    return FactorGraphInstance.from_factors(model, n, types, facs)

"""Linearised BP stability: the L operator, its spectral radius and tree Monte Carlo.

L acts on block-diagonal matrices with one q x q block per variable type::

    L(M)[tau] = sum over (theta, out, in) with Cl(theta)_out = tau of
                rate(theta, out) * Tb_{theta,out|in} M[Cl(theta)_in] Tb*_{theta,out|in}

where ``rate(theta, out) = dbar_theta * prod_s T(Cl(theta)_s) / T(tau)`` is the
Poisson mean of type-theta factors holding a type-tau variable at slot
``out``, and ``Tb* = D_in Tb^T D_out^+`` is the adjoint for prior-weighted
inner products.  The same rates drive the Galton-Watson trees, so
``E[alpha_l] = sum_tau T(tau) Tr L^l(D)[tau]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, SubcriticalModel, TreeExplosion
from .model import ObservationModel, pinv_diag
from .sampler import as_generator

MAX_TREE_NODES = 10 ** 7


# ------------------------------------------------------------------ transitions

@dataclass(frozen=True)
class Transition:
    """One (theta, out, in) hop: the pair of matrices acting on a child block."""

    theta: int
    out: int
    inn: int
    tau_out: int
    tau_in: int
    rate: float
    fwd: np.ndarray  # Tb_{theta,out|in}
    adj: np.ndarray  # Tb*_{theta,out|in}


def slot_rate(model: ObservationModel, i: int, pos: int) -> float:
    """Poisson mean of type-``i`` factors holding a given variable at slot ``pos``."""
    f = model.factors[i]
    tau = f.cls[pos]
    dbar = model.tables.avg_density[i]
    if model.type_dist[tau] <= 0:
        return 0.0
    return float(dbar * np.prod(model.type_dist[list(f.cls)]) / model.type_dist[tau])


def transitions(model: ObservationModel):
    tab = model.tables
    out_list = []
    for i, f in enumerate(model.factors):
        if not tab.active(i):
            continue
        for out in range(f.arity):
            rate = slot_rate(model, i, out)
            if rate == 0:
                continue
            t_out = f.cls[out]
            for inn in range(f.arity):
                if inn == out:
                    continue
                t_in = f.cls[inn]
                tb = tab.centered(i, out, inn)
                adj = np.diag(model.priors[t_in]) @ tb.T @ pinv_diag(model.priors[t_out])
                out_list.append(Transition(i, out, inn, t_out, t_in, rate, tb, adj))
    return out_list


# ------------------------------------------------------------------- L operator

@dataclass
class LOperator:
    """Dense matrix of ``vec(M) -> vec(L(M))``; vec stacks blocks row-major."""

    n_types: int
    q: int
    matrix: np.ndarray
    model_ref: ObservationModel = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.n_types * self.q * self.q

    def apply(self, blocks: np.ndarray) -> np.ndarray:
        """Apply to an array of shape (|T|, q, q)."""
        out = self.matrix @ np.asarray(blocks, dtype=float).reshape(-1)
        return out.reshape(self.n_types, self.q, self.q)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)


def build_L(model: ObservationModel) -> LOperator:
    T, q = model.n_types, model.q
    mat = np.zeros((T * q * q, T * q * q))
    for tr in transitions(model):
        r0, c0 = tr.tau_out * q * q, tr.tau_in * q * q
        mat[r0:r0 + q * q, c0:c0 + q * q] += tr.rate * np.kron(tr.fwd, tr.adj.T)
    return LOperator(T, q, mat, model)


def lambda_L(model: ObservationModel) -> float:
    """Spectral radius of L via a dense eigensolver."""
    ev = build_L(model).eigenvalues()
    return float(np.max(np.abs(ev))) if ev.size else 0.0


def spectral_radius(L: LOperator, iters: int = 200, method: str = "auto") -> float:
    """Estimate the spectral radius from the orbit of the identity.

    ``method="root"`` returns ``||L^iters(I)||_F^(1/iters)`` exactly as
    defined; ``"ratio"`` returns the last one-step growth factor of the same
    orbit, which converges geometrically when the top eigenvalue is simple.
    ``"auto"`` uses the ratio when its last steps agree to 1e-13 relative
    and falls back to the root otherwise.  Every step is renormalised and
    magnitudes are accumulated in log space.
    """
    if iters < 16:
        raise ValueError("iters must be at least 16")
    X = np.tile(np.eye(L.q), (L.n_types, 1, 1))
    log_total = 0.0
    ratios = []
    for _ in range(iters):
        X = L.apply(X)
        nrm = np.linalg.norm(X)
        if nrm == 0 or not np.isfinite(nrm):
            return 0.0
        log_total += math.log(nrm)
        ratios.append(nrm)
        X /= nrm
    root = math.exp(log_total / iters)
    if method == "root":
        return root
    ratio = ratios[-1]
    if method == "ratio":
        return ratio
    spread = max(ratios[-4:]) - min(ratios[-4:])
    return ratio if spread <= 1e-13 * ratio else root


def choose_kappa(lam: float) -> float:
    if lam <= 1:
        raise SubcriticalModel(f"lambda_L = {lam:.6g} <= 1: spectral distinguisher not applicable")
    return (lam + math.sqrt(lam)) / 2


def threshold_scan(make_model, lo: float, hi: float, tol: float = 1e-6, max_iter: int = 200):
    """Bisection for the parameter at which ``lambda_L`` crosses 1.

    ``make_model`` maps the scanned parameter to a model; ``lambda_L`` is
    assumed monotone on ``[lo, hi]``.
    """
    f_lo = lambda_L(make_model(lo)) - 1
    f_hi = lambda_L(make_model(hi)) - 1
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"lambda_L - 1 has the same sign at both ends ({f_lo:+.4g}, {f_hi:+.4g})")
    a, b = lo, hi
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        f_mid = lambda_L(make_model(mid)) - 1
        if abs(f_mid) <= tol or b - a < 1e-15 * max(1.0, abs(mid)):
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            a, f_lo = mid, f_mid
        else:
            b = mid
    return 0.5 * (a + b)


# -------------------------------------------------------------- tree sampling

@dataclass
class TreeSample:
    """Galton-Watson tree stored level by level.

    ``var_types[k]`` are the variable types at depth ``k``.  For ``k >= 1``
    the arrays ``var_parent[k]`` and ``var_hop[k]`` give, per variable, the
    factor parent (index into factor level ``k-1``) and the index of its
    (theta, out, in) transition.  ``fac_parent[k]`` points factors of level
    ``k`` to their variable parent at depth ``k``.
    """

    var_types: list
    var_parent: list
    var_hop: list
    fac_parent: list
    fac_theta: list

    @property
    def depth(self) -> int:
        return len(self.var_types) - 1

    @property
    def size(self) -> int:
        return sum(len(v) for v in self.var_types) + sum(len(f) for f in self.fac_parent)


def _slot_table(model, trans):
    """Per variable type: the (theta, out) slots, their rates and hop indices."""
    table = {}
    for tau in range(model.n_types):
        slots = {}
        for h, tr in enumerate(trans):
            if tr.tau_out == tau:
                slots.setdefault((tr.theta, tr.out), (tr.rate, []))[1].append(h)
        keys = list(slots)
        table[tau] = (
            keys,
            np.array([slots[k][0] for k in keys]),
            [np.array(slots[k][1]) for k in keys],
        )
    return table


def sample_tree(model: ObservationModel, depth: int, rng=None, root_type=None,
                max_nodes: int = MAX_TREE_NODES, _trans=None) -> TreeSample:
    rng = as_generator(rng)
    trans = _trans if _trans is not None else transitions(model)
    slots = _slot_table(model, trans)
    if root_type is None:
        root_type = int(rng.choice(model.n_types, p=model.type_dist))
    var_types = [np.array([root_type])]
    var_parent, var_hop, fac_parent, fac_theta = [None], [None], [], []
    size = 1
    for _ in range(depth):
        cur = var_types[-1]
        f_par, f_th, v_par, v_hop = [], [], [], []
        n_fac = 0
        for tau in range(model.n_types):
            idx = np.flatnonzero(cur == tau)
            keys, rates, hops = slots[tau]
            if idx.size == 0 or not keys:
                continue
            counts = rng.poisson(rates, size=(idx.size, len(keys)))
            for s, (theta, _out) in enumerate(keys):
                c = counts[:, s]
                parents = np.repeat(idx, c)
                m = parents.size
                if m == 0:
                    continue
                fids = n_fac + np.arange(m)
                n_fac += m
                f_par.append(parents)
                f_th.append(np.full(m, theta))
                for h in hops[s]:
                    v_par.append(fids)
                    v_hop.append(np.full(m, h))
        size += n_fac + sum(len(p) for p in v_par)
        if size > max_nodes:
            raise TreeExplosion(f"tree exceeded {max_nodes} nodes")
        fp = np.concatenate(f_par) if f_par else np.zeros(0, np.int64)
        fac_parent.append(fp)
        fac_theta.append(np.concatenate(f_th) if f_th else np.zeros(0, np.int64))
        vp = np.concatenate(v_par) if v_par else np.zeros(0, np.int64)
        vh = np.concatenate(v_hop) if v_hop else np.zeros(0, np.int64)
        var_parent.append(vp)
        var_hop.append(vh)
        tin = np.array([tr.tau_in for tr in trans], dtype=np.int64)
        var_types.append(tin[vh] if vh.size else np.zeros(0, np.int64))
    return TreeSample(var_types, var_parent, var_hop, fac_parent, fac_theta)


def tree_path_trace(model: ObservationModel, tree: TreeSample, _trans=None) -> float:
    """Trace of the root block after pushing ``D_tau`` up from every leaf."""
    trans = _trans if _trans is not None else transitions(model)
    if not trans and tree.depth > 0:
        return 0.0
    fwd = np.array([t.fwd for t in trans]) if trans else None
    adj = np.array([t.adj for t in trans]) if trans else None
    D = np.array([np.diag(p) for p in model.priors])
    Y = D[tree.var_types[-1]]
    for k in range(tree.depth, 0, -1):
        hop = tree.var_hop[k]
        contrib = np.einsum("nij,njk,nkl->nil", fwd[hop], Y, adj[hop]) if hop.size else Y
        fac_y = np.zeros((len(tree.fac_parent[k - 1]), model.q, model.q))
        np.add.at(fac_y, tree.var_parent[k], contrib)
        Y = np.zeros((len(tree.var_types[k - 1]), model.q, model.q))
        np.add.at(Y, tree.fac_parent[k - 1], fac_y)
    return float(np.trace(Y[0]))


def amplification_exact(model: ObservationModel, ell: int) -> float:
    """``sum_tau T(tau) Tr L^ell(D)[tau]``, the mean of the tree statistic."""
    L = build_L(model)
    X = np.array([np.diag(p) for p in model.priors])
    for _ in range(ell):
        X = L.apply(X)
    return float(sum(w * np.trace(x) for w, x in zip(model.type_dist, X)))


@dataclass
class AmplificationEstimate:
    alpha: float
    stderr: float
    rate: float  # alpha ** (1 / ell)
    rate_stderr: float
    ell: int
    trials: int
    method: str


def _spine_block(model, trans, ell, trials, rng):
    """Per-trial unbiased estimates from one random root-to-leaf spine.

    Each spine variable draws the full Poisson offspring of its node, then
    descends into one grandchild chosen uniformly, multiplying the weight by
    the number of grandchildren.
    """
    q = model.q
    slots = _slot_table(model, trans)
    n_hops = len(trans)
    fwd = np.array([t.fwd for t in trans]) if n_hops else np.zeros((1, q, q))
    adj = np.array([t.adj for t in trans]) if n_hops else np.zeros((1, q, q))
    tin = np.array([t.tau_in for t in trans], dtype=np.int64) if n_hops else np.zeros(1, np.int64)
    cur = rng.choice(model.n_types, size=trials, p=model.type_dist)
    weight = np.ones(trials)
    chosen = np.zeros((ell, trials), dtype=np.int64)
    for lev in range(ell):
        for tau in range(model.n_types):
            idx = np.flatnonzero(cur == tau)
            keys, rates, hops = slots[tau]
            if idx.size == 0:
                continue
            if not keys:
                weight[idx] = 0.0
                continue
            counts = rng.poisson(rates, size=(idx.size, len(keys)))
            fan = np.array([len(h) for h in hops])
            grand = counts * fan
            total = grand.sum(axis=1)
            u = rng.random(idx.size) * total
            cum = np.cumsum(grand, axis=1)
            slot = np.minimum((cum <= u[:, None]).sum(axis=1), len(keys) - 1)
            pick = rng.integers(0, fan[slot])
            hop_of = np.array([hops[s][p] for s, p in zip(slot, pick)], dtype=np.int64)
            weight[idx] *= total
            chosen[lev, idx] = hop_of
        cur = tin[chosen[lev]]
    D = np.array([np.diag(p) for p in model.priors])
    Y = D[cur]
    for lev in range(ell - 1, -1, -1):
        h = chosen[lev]
        Y = np.einsum("nij,njk,nkl->nil", fwd[h], Y, adj[h])
    return weight * np.trace(Y, axis1=1, axis2=2)


def amplification_mc(model: ObservationModel, ell: int, trials: int, rng=None,
                     method: str = "spine", block: int = 20000, workers: int = 1):
    """Monte Carlo estimate of the amplification factor on Galton-Watson trees.

    ``method="tree"`` samples whole trees (feasible only for small expected
    sizes); ``"spine"`` samples the offspring along a single random path per
    trial, which has the same mean at O(ell) cost.  Trials are processed in
    fixed blocks with independent seeds, so results do not depend on the
    worker count.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    seed_seq = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(
        as_generator(rng).integers(2 ** 63))
    trans = transitions(model)
    sizes = [min(block, trials - s) for s in range(0, trials, block)]
    children = seed_seq.spawn(len(sizes))

    def run(args):
        size, ss = args
        g = np.random.default_rng(ss)
        if ell == 0:
            roots = g.choice(model.n_types, size=size, p=model.type_dist)
            return np.array([model.priors[t].sum() for t in roots])
        if not trans:
            return np.zeros(size)
        if method == "spine":
            return _spine_block(model, trans, ell, size, g)
        if method == "tree":
            return np.array([tree_path_trace(model, sample_tree(model, ell, g, _trans=trans),
                                             _trans=trans) for _ in range(size)])
        raise ValueError(f"unknown method {method!r}")

    jobs = list(zip(sizes, children))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    vals = np.concatenate(parts)
    alpha = math.fsum(vals) / trials
    se = float(np.std(vals, ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    if ell == 0:
        rate, rate_se = 1.0, 0.0
    elif alpha > 0:
        rate = alpha ** (1.0 / ell)
        rate_se = rate * se / (ell * alpha)
    else:
        rate, rate_se = 0.0, float("nan")
    return AmplificationEstimate(alpha, se, rate, rate_se, ell, trials, method)

"""Centered nonbacktracking powers, the H geometry and the spectral distinguisher.

Vectors over ``R^{nq}`` are indexed ``v * q + c``.  The operator
``A^(s)`` sums, over nonbacktracking walks ``u e_1 v_1 ... e_s w`` in the
complete factor graph, the product of the transition matrices
``Tb_{theta(e), idx_e(v_{t-1}) | idx_e(v_t)}`` weighted by the centered
indicators ``1[e in G] - p_e`` with ``p_e = dbar_theta / n^(a-1)``.

Matrix-free evaluation
----------------------
Write ``Y_t = A^(t) x`` and let ``s_t(u, e)`` collect the walks of length
``t`` leaving ``u`` through ``e``.  Then::

    s_t(u, e) = w_e * sum_{v in e, v != u} M_e(u, v) (Y_{t-1}[v] - s_{t-1}(v, e))
    Y_t[u]    = sum_{e ni u} s_t(u, e)

For factors present in the graph this recursion is run explicitly, once
with ``w = 1 - p`` and once with ``w = -p``.  The sum of the ``w = -p``
recursion over *all* potential factors unrolls to
``-sum_k p^k (M_e^k Y_{t-k})[u]`` and collapses, by counting completions
of each tuple, into a per-type q x q map of ``Y[u]`` plus a map of the
per-type sums of ``Y``.  Subtracting the present factors' ``w = -p`` share
gives the exact walk sum in O(s * nnz + s^2 * n q) per product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, eigsh

from .errors import DimensionMismatch, NoConvergence, SubcriticalModel, TooLargeForOracle
from .model import ObservationModel, detailed_balance_check
from .sampler import FactorGraphInstance, as_generator
from .stability import build_L, choose_kappa, spectral_radius


def default_s(n: int) -> int:
    return max(1, math.ceil(math.sqrt(math.log(n))))


def _falling(x: int, r: int) -> int:
    out = 1
    for k in range(r):
        out *= max(x - k, 0)
    return out


def _completions(cls, counts, fixed) -> int:
    """Ways to fill the positions not in ``fixed`` with distinct, unused, class-matching vertices."""
    avail = {t: int(counts[t]) for t in set(cls)}
    need = {}
    for pos, t in enumerate(cls):
        if pos in fixed:
            avail[t] -= 1
        else:
            need[t] = need.get(t, 0) + 1
    out = 1
    for t, r in need.items():
        out *= _falling(avail[t], r)
    return out


# --------------------------------------------------------------- H geometry

@dataclass
class HInnerProduct:
    diag: np.ndarray  # flattened, length n q

    @classmethod
    def build(cls, model: ObservationModel, instance: FactorGraphInstance) -> "HInnerProduct":
        h = model.priors[instance.types].copy()
        h[h <= 0] = 1.0
        return cls(h.reshape(-1))

    def inner(self, x, y) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.size != self.diag.size or y.size != self.diag.size:
            raise DimensionMismatch(f"expected vectors of length {self.diag.size}")
        return float(np.dot(x, y / self.diag))

    def norm(self, x) -> float:
        return math.sqrt(max(self.inner(x, x), 0.0))


def h_inner(hip: HInnerProduct, x, y) -> float:
    return hip.inner(x, y)


# ------------------------------------------------------------ the operator

@dataclass
class _Group:
    theta: int
    edges: np.ndarray  # (m, a)
    big: np.ndarray  # (a q, a q) block matrix of Tb, zero diagonal blocks
    p: float
    incidence: sp.csr_matrix  # (n, m a)


class CenteredNBOperator:
    """Implicit ``A^(s)`` for one instance; see the module docstring."""

    def __init__(self, model: ObservationModel, instance: FactorGraphInstance):
        self.model = model
        self.instance = instance
        self.n = instance.n
        self.q = model.q
        self.types = instance.types
        self.hip = HInnerProduct.build(model, instance)
        self.type_counts = np.bincount(self.types, minlength=model.n_types)
        tab = model.tables
        self.groups = []
        self._theta_big = {}
        for i, f in enumerate(model.factors):
            if not tab.active(i) or f.arity < 2:
                continue
            blk = tab.block(i)
            a, q = f.arity, self.q
            big = blk.transpose(0, 2, 1, 3).reshape(a * q, a * q)
            if not np.any(big):
                continue
            self._theta_big[i] = big
            e = instance.groups[i]
            if len(e) == 0:
                continue
            p = tab.avg_density[i] / float(self.n) ** (a - 1)
            m = len(e)
            inc = sp.csr_matrix(
                (np.ones(m * a), (e.reshape(-1), np.arange(m * a))), shape=(self.n, m * a))
            self.groups.append(_Group(i, e, big, p, inc))
        self._corr = []  # list over k of (G[tau] (T,q,q), R[tau,tau'] (T,T,q,q))
        self._powers = {i: [np.eye(b.shape[0])] for i, b in self._theta_big.items()}

    @property
    def dim(self) -> int:
        return self.n * self.q

    @property
    def is_zero(self) -> bool:
        return not self._theta_big

    def _correction(self, k: int):
        """Tables for the all-potential-factor term with exponent ``k`` (1-based)."""
        while len(self._corr) < k:
            kk = len(self._corr) + 1
            T, q = self.model.n_types, self.q
            G = np.zeros((T, q, q))
            R = np.zeros((T, T, q, q))
            for i, big in self._theta_big.items():
                pw = self._powers[i]
                while len(pw) <= kk:
                    pw.append(pw[-1] @ big)
                Ck = pw[kk]
                f = self.model.factors[i]
                a = f.arity
                pk = (self.model.tables.avg_density[i] / float(self.n) ** (a - 1)) ** kk
                for ia in range(a):
                    ta = f.cls[ia]
                    Caa = Ck[ia * q:(ia + 1) * q, ia * q:(ia + 1) * q]
                    G[ta] -= pk * _completions(f.cls, self.type_counts, {ia}) * Caa
                    for ib in range(a):
                        if ib == ia:
                            continue
                        tb = f.cls[ib]
                        Cab = Ck[ia * q:(ia + 1) * q, ib * q:(ib + 1) * q]
                        coef = pk * _completions(f.cls, self.type_counts, {ia, ib})
                        R[ta, tb] -= coef * Cab
                        if tb == ta:
                            G[ta] += coef * Cab  # v ranges over type tb minus u itself
            self._corr.append((G, R))
        return self._corr[k - 1]

    def _type_sums(self, Y):
        T = self.model.n_types
        if T == 1:
            return Y.sum(axis=0, keepdims=True)
        out = np.zeros((T,) + Y.shape[1:])
        np.add.at(out, self.types, Y)
        return out

    def powers(self, x, s: int):
        """``[A^(1) x, ..., A^(s) x]``, each shaped like ``x`` reshaped to (n, q, r)."""
        X = self._as_block(x)
        n, q, r = X.shape
        Ys = [X]
        sums = [self._type_sums(X)]
        states = [np.zeros((2, len(g.edges), g.edges.shape[1], q, r)) for g in self.groups]
        for t in range(1, s + 1):
            prev = Ys[-1]
            Y = np.zeros_like(X)
            for gi, g in enumerate(self.groups):
                m, a = g.edges.shape
                Z = prev[g.edges][None] - states[gi]  # (2, m, a, q, r)
                Z = Z.transpose(0, 1, 4, 2, 3).reshape(2, m, r, a * q)
                S = Z @ g.big.T
                S[0] *= 1.0 - g.p
                S[1] *= -g.p
                S = S.reshape(2, m, r, a, q).transpose(0, 1, 3, 4, 2)
                states[gi] = S
                diff = (S[0] - S[1]).reshape(m * a, q * r)
                Y += (g.incidence @ diff).reshape(n, q, r)
            if not self.is_zero:
                for k in range(1, t + 1):
                    G, R = self._correction(k)
                    Yp, Sp = Ys[t - k], sums[t - k]
                    Y += np.einsum("nij,njr->nir", G[self.types], Yp)
                    RS = np.einsum("abij,bjr->air", R, Sp)
                    Y += RS[self.types]
            Ys.append(Y)
            sums.append(self._type_sums(Y))
        return Ys[1:]

    def _as_block(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"expected leading dimension {self.dim}, got {x.shape[0]}")
        return x.reshape(self.n, self.q, -1)

    def apply(self, x, s: int):
        x = np.asarray(x, dtype=float)
        if s < 1:
            raise ValueError("s must be at least 1")
        return self.powers(x, s)[-1].reshape(x.shape)


def build_centered_operator(model, instance) -> CenteredNBOperator:
    return CenteredNBOperator(model, instance)


def apply_nb_power(op: CenteredNBOperator, s: int, x) -> np.ndarray:
    return op.apply(x, s)


# ----------------------------------------------------------------- oracle

def _potential_factors(model, instance):
    """Every class-matching ordered tuple of distinct vertices, per factor type."""
    out = {}
    for i, f in enumerate(model.factors):
        rows = [tup for tup in permutations(range(instance.n), f.arity)
                if all(instance.types[v] == t for v, t in zip(tup, f.cls))]
        out[i] = np.array(rows, dtype=np.int64).reshape(-1, f.arity)
    return out


def enumerate_nb_power(model: ObservationModel, instance: FactorGraphInstance, s: int,
                       max_n: int = 12, max_s: int = 4, max_arity: int = 3) -> np.ndarray:
    """Dense ``A^(s)`` from walks over every potential factor of the complete factor graph.

    Each potential factor carries its own weight ``1[e in G] - p_e`` and the
    walk recursion is run on all ``n q`` basis vectors at once; no counting
    shortcuts are used.
    """
    n, q = instance.n, model.q
    if n > max_n or s > max_s or any(f.arity > max_arity for f in model.factors):
        raise TooLargeForOracle(f"oracle limited to n <= {max_n}, s <= {max_s}, arity <= {max_arity}")
    tab = model.tables
    present = {i: {tuple(int(v) for v in row) for row in g} for i, g in enumerate(instance.groups)}
    factors = []
    for i, rows in _potential_factors(model, instance).items():
        f = model.factors[i]
        if not tab.active(i) or f.arity < 2:
            continue
        p = tab.avg_density[i] / float(n) ** (f.arity - 1)
        for tup in rows:
            tup = tuple(int(v) for v in tup)
            w = (1.0 if tup in present[i] else 0.0) - p
            factors.append((i, tup, w))
    dim = n * q
    X = np.eye(dim).reshape(n, q, dim)
    Y_prev = X
    state = {}
    for _ in range(s):
        Y = np.zeros_like(X)
        new_state = {}
        for fid, (i, tup, w) in enumerate(factors):
            for a, u in enumerate(tup):
                acc = np.zeros((q, dim))
                for b, v in enumerate(tup):
                    if b == a:
                        continue
                    back = state.get((fid, b), 0.0)
                    acc += tab.centered(i, a, b) @ (Y_prev[v] - back)
                acc *= w
                new_state[(fid, a)] = acc
                Y[u] += acc
        state = new_state
        Y_prev = Y
    return Y_prev.reshape(dim, dim)


def brute_force_walks(model, instance, s: int) -> np.ndarray:
    """Literal depth-first walk enumeration; exponential, for n of about 4."""
    n, q = instance.n, model.q
    if n > 5 or s > 3:
        raise TooLargeForOracle("brute-force walk enumeration limited to n <= 5, s <= 3")
    tab = model.tables
    present = {i: {tuple(int(v) for v in row) for row in g} for i, g in enumerate(instance.groups)}
    pot = []
    for i, rows in _potential_factors(model, instance).items():
        if not tab.active(i):
            continue
        p = tab.avg_density[i] / float(n) ** (model.factors[i].arity - 1)
        for tup in rows:
            tup = tuple(int(v) for v in tup)
            pot.append((i, tup, (1.0 if tup in present[i] else 0.0) - p))
    incident = [[(k, tup.index(u)) for k, (_, tup, _) in enumerate(pot) if u in tup]
                for u in range(n)]
    out = np.zeros((n * q, n * q))

    def walk(start, u, last, depth, mat):
        if depth == s:
            out[start * q:(start + 1) * q, u * q:(u + 1) * q] += mat
            return
        for k, a in incident[u]:
            if k == last:
                continue
            i, tup, w = pot[k]
            for b, v in enumerate(tup):
                if b != a:
                    walk(start, v, k, depth + 1, mat @ (w * tab.centered(i, a, b)))

    for u in range(n):
        walk(u, u, None, 0, np.eye(q))
    return out


# ---------------------------------------------------------------- eigensolver

@dataclass
class EigenResult:
    value: float
    vector: np.ndarray  # H-unit
    residual: float
    converged: bool
    matvecs: int


def top_eigenpair(op: CenteredNBOperator, s: int, hip: HInnerProduct | None = None,
                  iters: int = 300, tol: float = 1e-6, rng=None, method: str = "lanczos",
                  ncv: int = 20, raise_on_fail: bool = False) -> EigenResult:
    """Eigenvalue of largest magnitude of ``A^(s)`` (with sign) and its H-unit eigenvector.

    ``A^(s)`` is self-adjoint for ``<x, y>_H = x^T H^{-1} y``, so the work is
    done on the symmetric ``H^{-1/2} A H^{1/2}``.  ``method="lanczos"`` uses
    implicitly restarted Lanczos (``iters`` bounds the restarts);
    ``"power"`` runs plain power iteration in H geometry, normalising by the
    H norm and reading the sign off the Rayleigh quotient.  Without detailed
    balance the operator is not self-adjoint and the Lanczos path switches
    to Arnoldi, keeping the real part of the dominant eigenvalue.  ``residual`` is
    ``||A v - lambda v||_H``; ``tol`` is relative to ``|lambda|``.
    """
    hip = hip or op.hip
    rng = as_generator(rng)
    dim = op.dim
    hs = np.sqrt(hip.diag)
    count = [0]

    def sym(y):
        count[0] += 1
        return op.apply(hs * np.asarray(y).reshape(-1), s) / hs

    v0 = rng.standard_normal(dim)
    if op.is_zero or not np.any(sym(v0)):
        v = hs * v0
        v /= hip.norm(v)
        return EigenResult(0.0, v, 0.0, True, count[0])

    converged = True
    if method == "lanczos" and dim <= 64:
        # small problems: dense solve is exact and cheaper than ARPACK setup
        M = op.apply(np.diag(hs), s) / hs[:, None]
        count[0] += dim
        vals, vecs = np.linalg.eig(M)
        j = int(np.argmax(np.abs(vals)))
        lam, y = float(vals[j].real), np.real(vecs[:, j])
        y = y / np.linalg.norm(y)
    elif method == "lanczos":
        K = LinearOperator((dim, dim), matvec=sym, dtype=float)
        solver = eigsh if detailed_balance_check(op.model, tol=1e-9).holds else eigs
        try:
            vals, vecs = solver(K, k=1, which="LM", v0=v0, ncv=min(ncv, dim - 1),
                                maxiter=iters, tol=tol / 10)
            lam, y = float(vals[0].real), np.real(vecs[:, 0])
        except ArpackNoConvergence as exc:
            converged = False
            if len(exc.eigenvalues):
                j = int(np.argmax(np.abs(exc.eigenvalues)))
                lam, y = float(exc.eigenvalues[j].real), np.real(exc.eigenvectors[:, j])
            else:
                y = v0 / np.linalg.norm(v0)
                lam = float(y @ sym(y))
    elif method == "power":
        y = v0 / np.linalg.norm(v0)
        lam = 0.0
        for _ in range(iters):
            z = sym(y)
            lam = float(y @ z)
            nz = np.linalg.norm(z)
            if nz == 0:
                break
            res = np.linalg.norm(z - lam * y)
            y = z / nz
            if res <= tol * abs(lam):
                break
        lam = float(y @ sym(y))
    else:
        raise ValueError(f"unknown method {method!r}")

    v = hs * y
    v /= hip.norm(v)
    resid = hip.norm(op.apply(v, s) - lam * v)
    if resid > tol * max(abs(lam), 1e-300) * 10:
        converged = False
    result = EigenResult(lam, v, resid, converged, count[0])
    if not converged and raise_on_fail:
        raise NoConvergence(f"residual {resid:.3g} above tolerance", result)
    return result


# ---------------------------------------------------------------- distinguish

@dataclass
class Decision:
    label: str
    eigenvalue: float
    threshold: float  # kappa ** s
    s: int
    kappa: float
    lambda_L: float


def distinguish(instance, model_planted, s: int | None = None, kappa: float | None = None,
                rng=None, **eig_kw) -> Decision:
    """Threshold the top eigenvalue magnitude of ``A^(s)`` against ``kappa ** s``."""
    lam = spectral_radius(build_L(model_planted))
    if lam <= 1:
        raise SubcriticalModel(f"lambda_L = {lam:.6g} <= 1")
    if kappa is None:
        kappa = choose_kappa(lam)
    if s is None:
        s = default_s(instance.n)
    op = build_centered_operator(model_planted, instance)
    res = top_eigenpair(op, s, rng=rng, **eig_kw)
    thr = kappa ** s
    label = "planted" if abs(res.value) > thr else "null"
    return Decision(label, res.value, thr, s, kappa, lam)


# ------------------------------------------------------- block product helper

def nb_block_product(A, B, block: int):
    """Product of block matrices with the diagonal blocks of the result zeroed."""
    if A.shape[1] != B.shape[0] or A.shape[0] % block or B.shape[1] % block:
        raise DimensionMismatch("block dimensions do not conform")
    if A.shape[0] != B.shape[1]:
        raise DimensionMismatch("the block product needs a square result")
    C = A @ B
    nb = A.shape[0] // block
    ids = np.arange(A.shape[0]) // block
    if sp.issparse(C):
        C = sp.coo_matrix(C)
        keep = ids[C.row] != ids[C.col]
        return sp.csr_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=C.shape)
    C = np.array(C, dtype=float)
    for k in range(nb):
        C[k * block:(k + 1) * block, k * block:(k + 1) * block] = 0.0
    return C

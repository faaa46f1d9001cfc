"""Weak recovery from centered nonbacktracking powers, overlap scoring and
the easy-case tests for models without detailed balance.

The spectral routine works on a window ``[t_lo, t_hi]`` of walk lengths.
Starting from ``t = t_hi`` it computes the top eigenpair ``(Lambda_t^t, v_t)``
of ``A^(t)`` and checks

    ||A^(s) v_t||_H <= Lambda_t^s (1 + delta)^(t - s)    for t_lo <= s <= t.

On a violation at ``s`` it moves to ``t = s`` and repeats.  The accepted
``m`` yields ``w_l = A^(m - l) v_m`` for ``0 <= l <= C`` and the candidates
are the per-color slices of each ``w_l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DescentExhausted, DimensionMismatch, NotApplicable, SubcriticalModel
from .model import ObservationModel, detailed_balance_check, slot_color_rates
from .sampler import FactorGraphInstance, degree_profile
from .spectral import HInnerProduct, build_centered_operator, top_eigenpair
from .stability import build_L, spectral_radius

DEFAULT_C = 8
DEFAULT_T_RANGE = (4, 12)
_DESCENT_SLACK = 1e-6  # relative allowance for eigensolver residuals in the test at s = t


def build_g(instance: FactorGraphInstance, colors, model: ObservationModel) -> np.ndarray:
    """Concatenated one-hot color indicators, indexed ``v * q + c``."""
    colors = np.asarray(colors, dtype=np.int64)
    if colors.shape != (instance.n,):
        raise DimensionMismatch(f"expected {instance.n} colors, got shape {colors.shape}")
    g = np.zeros((instance.n, model.q))
    g[np.arange(instance.n), colors] = 1.0
    return g.reshape(-1)


@dataclass
class CenteredIndicator:
    tau: int
    alpha: int
    centered: np.ndarray  # 1[type = tau] (1[color = alpha] - P_tau(alpha))
    raw: np.ndarray  # 1[type = tau] 1[color = alpha]
    mean: np.ndarray  # 1[type = tau] P_tau(alpha)


def centered_indicators(instance: FactorGraphInstance, colors, model: ObservationModel):
    """All ``chi^{tau, alpha}`` targets as a list of :class:`CenteredIndicator`."""
    colors = np.asarray(colors, dtype=np.int64)
    out = []
    for tau in range(model.n_types):
        on = (instance.types == tau).astype(float)
        for alpha in range(model.q):
            raw = on * (colors == alpha)
            mean = on * model.priors[tau, alpha]
            out.append(CenteredIndicator(tau, alpha, raw - mean, raw, mean))
    return out


def correlation(u, chi):
    """``(<u, chi>, <u, chi> / (||u|| ||chi||))``; the second entry is 0 for a zero vector."""
    u = np.asarray(u, dtype=float).reshape(-1)
    chi = np.asarray(chi, dtype=float).reshape(-1)
    if u.size != chi.size:
        raise DimensionMismatch(f"lengths differ: {u.size} vs {chi.size}")
    ip = float(u @ chi)
    den = float(np.linalg.norm(u) * np.linalg.norm(chi))
    return ip, (ip / den if den > 0 else 0.0)


def best_overlap(vectors, instance, colors, model) -> float:
    """Largest ``|<u, chi^{tau,alpha}>|`` over candidate vectors and all targets."""
    targets = np.stack([c.centered for c in centered_indicators(instance, colors, model)])
    U = np.asarray(vectors, dtype=float).reshape(-1, instance.n)
    return float(np.abs(U @ targets.T).max()) if U.size else 0.0


def random_overlap_quantile(instance, colors, model, draws: int = 100, quantile: float = 0.99,
                            rng=None) -> float:
    """Quantile of the best overlap achieved by random Euclidean-unit vectors."""
    rng = np.random.default_rng(rng)
    U = rng.standard_normal((draws, instance.n))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    targets = np.stack([c.centered for c in centered_indicators(instance, colors, model)])
    per_draw = np.abs(U @ targets.T).max(axis=1)
    return float(np.quantile(per_draw, quantile))


# ------------------------------------------------------------ weak recovery

@dataclass
class RecoveryOutput:
    vectors: np.ndarray  # (C + 1, q, n); entry [l, beta] is u_{l, beta}
    m: int
    eigen: dict  # t -> (Lambda_t, v_t), only for the t values visited
    delta: float
    C: int
    t_range: tuple
    path: list = field(default_factory=list)  # visited t values, in order
    exhausted: bool = False

    def candidates(self):
        """Flat list of ``((l, beta), u)`` pairs, skipping zero slices."""
        out = []
        for l in range(self.vectors.shape[0]):
            for b in range(self.vectors.shape[1]):
                u = self.vectors[l, b]
                if np.any(u):
                    out.append(((l, b), u))
        return out


def default_delta(lam: float) -> float:
    return (lam ** 0.25 - 1.0) / 2.0


def descent_violations(op, v, lam_t: float, t: int, t_lo: int, delta: float, hip=None):
    """Values of ``s`` in ``[t_lo, t]`` breaking the descent inequality for ``v``."""
    hip = hip or op.hip
    ys = op.powers(v, t)
    bad = []
    for s in range(t_lo, t + 1):
        lhs = hip.norm(ys[s - 1])
        rhs = lam_t ** s * (1.0 + delta) ** (t - s)
        if lhs > rhs * (1.0 + _DESCENT_SLACK):
            bad.append(s)
    return bad


def weak_recover(instance: FactorGraphInstance, model: ObservationModel, delta: float | None = None,
                 C: int = DEFAULT_C, t_range=DEFAULT_T_RANGE, rng=None, strict: bool = False,
                 **eig_kw) -> RecoveryOutput:
    """Spectral weak recovery; see the module docstring for the procedure.

    With ``strict=True`` a failed descent raises :class:`DescentExhausted`
    (carrying the best-effort output); otherwise the flag ``exhausted`` is set.
    """
    t_lo, t_hi = (int(x) for x in t_range)
    if not 1 <= t_lo <= t_hi:
        raise ValueError(f"invalid t_range {t_range}")
    lam = spectral_radius(build_L(model))
    if delta is None:
        if lam <= 1:
            raise SubcriticalModel(f"lambda_L = {lam:.6g} <= 1")
        delta = default_delta(lam)
    if delta <= 0 or lam < (1.0 + delta) ** 4:
        raise SubcriticalModel(f"lambda_L = {lam:.6g} below (1 + delta)^4 with delta = {delta}")
    op = build_centered_operator(model, instance)
    if op.is_zero:
        raise SubcriticalModel("the centered operator vanishes for this model")
    rng = np.random.default_rng(rng)

    eigen = {}
    path = []
    t = t_hi
    exhausted = False
    while True:
        if t not in eigen:
            res = top_eigenpair(op, t, rng=rng, **eig_kw)
            eigen[t] = (abs(res.value) ** (1.0 / t), res.vector)
        path.append(t)
        lam_t, v = eigen[t]
        bad = descent_violations(op, v, lam_t, t, t_lo, delta)
        below = [s for s in bad if s < t]
        if not bad:
            break
        if not below:  # only s = t fails: eigenpair too inaccurate to certify
            exhausted = True
            break
        t = max(below)
    m = t

    q, n = model.q, instance.n
    v = eigen[m][1]
    ys = [v.reshape(n, q)] + [y.reshape(n, q) for y in op.powers(v, m)]
    vecs = np.zeros((C + 1, q, n))
    for ell in range(min(C, m) + 1):
        w = ys[m - ell]
        nw = np.linalg.norm(w)
        if nw == 0:
            continue
        wbar = w / nw
        for beta in range(q):
            col = wbar[:, beta]
            nc = np.linalg.norm(col)
            if nc > 0:
                vecs[ell, beta] = col / nc
    out = RecoveryOutput(vecs, m, eigen, float(delta), int(C), (t_lo, t_hi), path, exhausted)
    if exhausted and strict:
        raise DescentExhausted(f"no admissible m found (path {path})", out)
    return out


# ------------------------------------------------------------------ easy case

def _slot_type_factor(instance, model, i, j) -> float:
    """Probability-like factor ``prod_{k != j} n_{cls_k} / n`` for slot ``j`` of type ``i``."""
    counts = np.bincount(instance.types, minlength=model.n_types)
    f = model.factors[i]
    used = np.zeros(model.n_types, dtype=np.int64)
    used[f.cls[j]] += 1
    out = 1.0
    for k, t in enumerate(f.cls):
        if k == j:
            continue
        out *= max(counts[t] - used[t], 0) / instance.n
        used[t] += 1
    return out


def _rates(instance, model, i, j):
    """Null rate and planted per-color rates of the slot degree at ``(i, j)``."""
    scale = _slot_type_factor(instance, model, i, j)
    dbar = model.tables.avg_density[i]
    return dbar * scale, slot_color_rates(model, i, j) * scale


def _most_informative_slot(model: ObservationModel):
    """``(i, j)`` where the planted per-color rates differ the most from the mean density."""
    best, key = None, 0.0
    for i, f in enumerate(model.factors):
        for j in range(f.arity):
            prior = model.priors[f.cls[j]]
            rates = slot_color_rates(model, i, j)
            supp = prior > 0
            if not supp.any():
                continue
            spread = float(np.ptp(rates[supp])) if supp.sum() > 1 else 0.0
            gap = float(np.max(np.abs(rates[supp] - model.tables.avg_density[i])))
            score = max(spread, gap)
            if score > key:
                best, key = (i, j), score
    return best, key


@dataclass
class EasyDecision:
    label: str
    statistic: float  # sum over slot-j vertices of the squared slot degree
    expected_null: float
    expected_planted: float
    slot: tuple  # (factor type, position)


def easy_distinguish(instance: FactorGraphInstance, model: ObservationModel) -> EasyDecision:
    """Second-moment test on slot degrees for a model that breaks detailed balance."""
    if detailed_balance_check(model).holds:
        raise NotApplicable("detailed balance holds; use the spectral distinguisher")
    (i, j), _ = _most_informative_slot(model)
    f = model.factors[i]
    tau = f.cls[j]
    mu_null, mu_c = _rates(instance, model, i, j)
    n_tau = int(np.sum(instance.types == tau))
    prior = model.priors[tau]
    e_null = n_tau * (mu_null ** 2 + mu_null)
    e_plant = n_tau * float(np.sum(prior * (mu_c ** 2 + mu_c)))
    deg = degree_profile(instance, i, j)
    stat = float(np.sum(deg[instance.types == tau].astype(float) ** 2))
    label = "planted" if abs(stat - e_plant) < abs(stat - e_null) else "null"
    return EasyDecision(label, stat, e_null, e_plant, (i, j))


@dataclass
class EasyRecovery:
    vector: np.ndarray  # (n q,) one-hot guesses on classified vertices, zero elsewhere
    guesses: np.ndarray  # per-vertex color, -1 when unclassified
    slot: tuple
    colors_compared: tuple  # (c, c')


def easy_recover(instance: FactorGraphInstance, model: ObservationModel) -> EasyRecovery:
    """Poisson likelihood-ratio guess between the two most separated colors of one slot."""
    best = None
    for i, f in enumerate(model.factors):
        for j in range(f.arity):
            prior = model.priors[f.cls[j]]
            rates = slot_color_rates(model, i, j)
            supp = np.flatnonzero(prior > 0)
            if supp.size < 2:
                continue
            lo = supp[np.argmin(rates[supp])]
            hi = supp[np.argmax(rates[supp])]
            gap = rates[hi] - rates[lo]
            if gap > 0 and (best is None or gap > best[0]):
                best = (gap, i, j, int(lo), int(hi))
    if best is None:
        raise NotApplicable("all per-color slot rates coincide")
    _, i, j, c_lo, c_hi = best
    tau = model.factors[i].cls[j]
    _, mu = _rates(instance, model, i, j)
    deg = degree_profile(instance, i, j).astype(float)
    on = instance.types == tau

    def loglik(c):
        r = mu[c]
        if r <= 0:
            return np.where(deg == 0, 0.0, -np.inf)
        return deg * math.log(r) - r

    pick_hi = loglik(c_hi) > loglik(c_lo)  # ties go to the lower rate
    guesses = np.full(instance.n, -1, dtype=np.int64)
    guesses[on] = np.where(pick_hi[on], c_hi, c_lo)
    vec = np.zeros((instance.n, model.q))
    idx = np.flatnonzero(on)
    vec[idx, guesses[idx]] = 1.0
    return EasyRecovery(vec.reshape(-1), guesses, (i, j), (c_lo, c_hi))


def h_overlap(vector, instance: FactorGraphInstance, colors, model: ObservationModel) -> float:
    """Normalised H-inner product between the prior-centered guess and truth indicators.

    Vertices whose guess block is zero contribute nothing on the guess side.
    """
    x = np.asarray(vector, dtype=float)
    if x.size != instance.n * model.q:
        raise DimensionMismatch("guess vector has the wrong length")
    x = x.reshape(instance.n, model.q)
    prior = model.priors[instance.types]
    classified = x.sum(axis=1, keepdims=True) > 0
    xc = np.where(classified, x - prior, 0.0)
    yc = build_g(instance, colors, model).reshape(instance.n, model.q) - prior
    hip = HInnerProduct.build(model, instance)
    den = hip.norm(xc) * hip.norm(yc)
    return hip.inner(xc, yc) / den if den > 0 else 0.0

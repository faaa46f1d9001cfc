"""Belief propagation on factor-graph instances.

Messages live on half-edges ``(factor, position)``; for factor type ``i``
they are stored as arrays of shape (m_i, a_i, q).  A round first refreshes
every variable-to-factor message from the previous factor-to-variable
messages, then every factor-to-variable message from the fresh ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormalizer, SamePositionError
from .model import ObservationModel, centered_transition
from .sampler import FactorGraphInstance

_LETTERS = "abcdefghijklmnop"


@dataclass
class MessageSet:
    v2f: list  # per factor type: (m_i, a_i, q)
    f2v: list
    fallbacks: int = 0  # zero normalisers replaced by a default

    def copy(self) -> "MessageSet":
        return MessageSet([x.copy() for x in self.v2f], [x.copy() for x in self.f2v],
                          self.fallbacks)

    def max_change(self, other: "MessageSet") -> float:
        diffs = [np.abs(a - b).max() for a, b in zip(self.v2f + self.f2v, other.v2f + other.f2v)
                 if a.size]
        return float(max(diffs)) if diffs else 0.0


def _support_uniform(prior: np.ndarray) -> np.ndarray:
    s = (prior > 0).astype(float)
    return s / s.sum()


def init_trivial(instance: FactorGraphInstance, model: ObservationModel) -> MessageSet:
    q = model.q
    v2f, f2v = [], []
    for i, g in enumerate(instance.groups):
        f = model.factors[i]
        m = len(g)
        pv = np.empty((m, f.arity, q))
        pf = np.empty((m, f.arity, q))
        for pos, t in enumerate(f.cls):
            pv[:, pos] = model.priors[t]
            pf[:, pos] = _support_uniform(model.priors[t])
        v2f.append(pv)
        f2v.append(pf)
    return MessageSet(v2f, f2v)


def _normalise(raw: np.ndarray, fallback: np.ndarray, strict: bool):
    z = raw.sum(axis=-1, keepdims=True)
    bad = (z[..., 0] <= 0) | ~np.isfinite(z[..., 0])
    out = np.where(bad[..., None], 0.0, raw / np.where(bad[..., None], 1.0, z))
    nbad = int(bad.sum())
    if nbad:
        if strict:
            raise DegenerateNormalizer(f"{nbad} messages have zero normaliser")
        out[bad] = fallback[bad] if fallback.ndim == raw.ndim else fallback
    return out, nbad


def _incoming_products(instance, model, f2v):
    """Per variable: log of the product of all incoming factor messages and zero counts."""
    n, q = instance.n, model.q
    logsum = np.zeros((n, q))
    zeros = np.zeros((n, q))
    for g, msg in zip(instance.groups, f2v):
        if len(g) == 0:
            continue
        v = g.reshape(-1)
        m = msg.reshape(-1, q)
        pos = m > 0
        np.add.at(logsum, v, np.where(pos, np.log(np.where(pos, m, 1.0)), 0.0))
        np.add.at(zeros, v, ~pos)
    return logsum, zeros


def update_v2f(instance, model, f2v, strict=False):
    """Variable-to-factor messages: prior times all other incoming factor messages."""
    logsum, zeros = _incoming_products(instance, model, f2v)
    out = []
    flagged = 0
    for i, (g, msg) in enumerate(zip(instance.groups, f2v)):
        if len(g) == 0:
            out.append(msg.copy())
            continue
        pos = msg > 0
        ls = logsum[g] - np.where(pos, np.log(np.where(pos, msg, 1.0)), 0.0)
        zc = zeros[g] - (~pos)
        prior = model.priors[instance.types[g]]
        with np.errstate(divide="ignore"):
            ls = ls + np.log(prior)
        ls = np.where(zc > 0, -np.inf, ls)
        top = ls.max(axis=-1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        raw = np.exp(ls - top)
        res, nb = _normalise(raw, prior, strict)
        flagged += nb
        out.append(res)
    return out, flagged


def factor_messages(table: np.ndarray, incoming: np.ndarray) -> np.ndarray:
    """Unnormalised factor-to-variable messages for a batch of factors.

    ``incoming`` has shape (m, a, q); entry ``[:, u]`` of the result sums the
    table against every incoming message except the one at position ``u``.
    """
    m, a, q = incoming.shape
    out = np.empty_like(incoming)
    idx = _LETTERS[:a]
    for u in range(a):
        operands = [table]
        subs = [idx]
        for w in range(a):
            if w != u:
                operands.append(incoming[:, w])
                subs.append("z" + idx[w])
        expr = ",".join(subs) + "->z" + idx[u]
        if a == 1:
            out[:, 0] = np.broadcast_to(table, (m, q))
        else:
            out[:, u] = np.einsum(expr, *operands, optimize=True)
    return out


def update_f2v(instance, model, v2f, strict=False):
    out = []
    flagged = 0
    for i, (g, msg) in enumerate(zip(instance.groups, v2f)):
        if len(g) == 0:
            out.append(msg.copy())
            continue
        raw = factor_messages(model.factors[i].table, msg)
        supp = np.stack([_support_uniform(p) for p in model.priors])[instance.types[g]]
        res, nb = _normalise(raw, supp, strict)
        flagged += nb
        out.append(res)
    return out, flagged


def bp_step(instance, model, messages: MessageSet, strict: bool = False) -> MessageSet:
    v2f, nb1 = update_v2f(instance, model, messages.f2v, strict)
    f2v, nb2 = update_f2v(instance, model, v2f, strict)
    return MessageSet(v2f, f2v, messages.fallbacks + nb1 + nb2)


def beliefs(instance, model, messages: MessageSet) -> np.ndarray:
    logsum, zeros = _incoming_products(instance, model, messages.f2v)
    prior = model.priors[instance.types]
    with np.errstate(divide="ignore"):
        ls = np.where(zeros > 0, -np.inf, logsum + np.log(prior))
    top = ls.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    b, _ = _normalise(np.exp(ls - top), prior, strict=False)
    return b


def run_bp(instance, model, init: MessageSet | None = None, max_iters: int = 100,
           tol: float = 1e-10, strict: bool = False):
    """Iterate rounds until the largest message change drops below ``tol``.

    Returns ``(messages, converged, beliefs, rounds)``.
    """
    msgs = init.copy() if init is not None else init_trivial(instance, model)
    converged = False
    rounds = 0
    for rounds in range(1, max_iters + 1):
        new = bp_step(instance, model, msgs, strict)
        delta = new.max_change(msgs)
        msgs = new
        if delta < tol:
            converged = True
            break
    return msgs, converged, beliefs(instance, model, msgs), rounds


def jacobian_check(model: ObservationModel, i: int, a: int, b: int,
                   step_size: float = 1e-5) -> float:
    """Max deviation between the numerical two-step Jacobian and ``Tb_{i,a|b}``.

    On a star made of one type-``i`` factor ``e`` (fresh variables) plus a
    second type-``i`` factor ``e'`` through the variable ``v'`` at slot
    ``a``, the map from ``m^{v->e}`` (``v`` at slot ``b``) to
    ``m^{v'->e'}`` is differentiated at the trivial messages by central
    differences.  Both Jacobians are compared on sum-zero inputs.
    """
    f = model.factors[i]
    if a == b:
        raise SamePositionError("positions must differ")
    ar = f.arity
    # e = (0..ar-1); e' puts vertex a at slot a and fresh vertices elsewhere
    second = [ar + k for k in range(ar)]
    second[a] = a
    types = np.zeros(2 * ar, dtype=np.int64)
    types[:ar] = f.cls
    types[ar:] = f.cls
    facs = [(i, tuple(range(ar))), (i, tuple(second))]
    inst = FactorGraphInstance.from_factors(model, 2 * ar, types, facs)
    base = init_trivial(inst, model)
    row = 0 if tuple(inst.groups[i][0]) == tuple(range(ar)) else 1
    q = model.q

    def forward(x):
        v2f = [m.copy() for m in base.v2f]
        v2f[i][row, b] = x
        f2v, _ = update_f2v(inst, model, v2f)
        v2f_next, _ = update_v2f(inst, model, f2v)
        return v2f_next[i][1 - row, a]

    x0 = base.v2f[i][row, b]
    J = np.empty((q, q))
    for beta in range(q):
        e = np.zeros(q)
        e[beta] = step_size
        J[:, beta] = (forward(x0 + e) - forward(x0 - e)) / (2 * step_size)
    proj = np.eye(q) - np.ones((q, q)) / q
    target = centered_transition(model, i, a, b) if model.tables.active(i) else np.zeros((q, q))
    return float(np.abs(J @ proj - target @ proj).max())

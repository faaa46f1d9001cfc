"""Observation models: validation, derived local tables and detailed balance.

A model is the tuple ``([q], T, type_dist, priors, factors)``.  Every factor
type carries an arity, a class (one variable type per position) and a dense
density table ``phi`` over ``[q]^arity``.  An ordered tuple of distinct
variables whose types match the class is observed with probability
``phi(colors) / n^(arity-1)`` in the planted model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    ClassArityMismatch,
    InvalidParams,
    NegativeDensity,
    NonStochasticPrior,
    SamePositionError,
    UnknownTypeReference,
    ZeroDensityFactor,
)

MAX_ARITY = 8
STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FactorType:
    name: str
    arity: int
    cls: tuple  # variable type index per position
    table: np.ndarray  # shape (q,) * arity

    @property
    def phi_max(self) -> float:
        return float(self.table.max()) if self.table.size else 0.0


@dataclass(frozen=True, eq=False)
class ObservationModel:
    q: int
    type_names: tuple
    type_dist: np.ndarray
    priors: np.ndarray  # (|T|, q)
    factors: tuple
    name: str = field(default="model")

    @property
    def n_types(self) -> int:
        return len(self.type_names)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @cached_property
    def tables(self) -> "DerivedTables":
        return DerivedTables(self)

    def scaled(self, s: float) -> "ObservationModel":
        """Copy with every density table multiplied by ``s``."""
        facs = tuple(
            FactorType(f.name, f.arity, f.cls, _frozen(f.table * s)) for f in self.factors
        )
        return ObservationModel(self.q, self.type_names, self.type_dist, self.priors, facs,
                                self.name)

    def to_spec(self) -> dict:
        """Inverse of :func:`validate_model`; zero entries are omitted."""
        types = [
            {"name": nm, "weight": float(w), "prior": [float(x) for x in p]}
            for nm, w, p in zip(self.type_names, self.type_dist, self.priors)
        ]
        facs = []
        for f in self.factors:
            entries = [
                {"colors": [int(c) for c in idx], "value": float(f.table[idx])}
                for idx in zip(*np.nonzero(f.table))
            ]
            facs.append({
                "name": f.name,
                "arity": f.arity,
                "class": [self.type_names[t] for t in f.cls],
                "entries": entries,
            })
        return {"q": self.q, "name": self.name, "types": types, "factors": facs}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_distribution(vec, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise NonStochasticPrior(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise NonStochasticPrior(f"{what} has negative or non-finite entries: {v.tolist()}")
    if abs(v.sum() - 1.0) > STOCHASTIC_TOL:
        raise NonStochasticPrior(f"{what} sums to {v.sum()!r}, not 1")
    return v


def validate_model(spec: dict) -> ObservationModel:
    """Build an :class:`ObservationModel` from a parsed JSON-style description."""
    try:
        q = int(spec["q"])
        raw_types = list(spec["types"])
        raw_factors = list(spec.get("factors", []))
    except (KeyError, TypeError) as exc:
        raise InvalidParams(f"malformed model description: {exc}") from None
    if q < 1:
        raise InvalidParams("q must be at least 1")
    if not raw_types:
        raise InvalidParams("at least one variable type is required")

    names = [str(t["name"]) for t in raw_types]
    if len(set(names)) != len(names):
        raise InvalidParams(f"duplicate type names: {names}")
    type_dist = _check_distribution([t.get("weight", 1.0) for t in raw_types], "type weights")
    priors = []
    for t in raw_types:
        p = _check_distribution(t["prior"], f"prior of type {t['name']!r}")
        if p.size != q:
            raise NonStochasticPrior(f"prior of type {t['name']!r} has {p.size} entries, q={q}")
        priors.append(p)
    index = {nm: k for k, nm in enumerate(names)}

    factors = []
    for k, f in enumerate(raw_factors):
        fname = str(f.get("name", f"phi{k}"))
        arity = int(f["arity"])
        cls_names = list(f["class"])
        if len(cls_names) != arity:
            raise ClassArityMismatch(f"factor {fname!r}: class has {len(cls_names)} entries, arity {arity}")
        if not 1 <= arity <= MAX_ARITY:
            raise ClassArityMismatch(f"factor {fname!r}: arity must lie in [1, {MAX_ARITY}]")
        try:
            cls = tuple(index[c] for c in cls_names)
        except KeyError as exc:
            raise UnknownTypeReference(f"factor {fname!r} references unknown type {exc}") from None
        table = np.zeros((q,) * arity)
        for e in f.get("entries", []):
            colors = tuple(int(c) for c in e["colors"])
            val = float(e["value"])
            if len(colors) != arity:
                raise ClassArityMismatch(f"factor {fname!r}: color tuple {colors} has wrong length")
            if any(not 0 <= c < q for c in colors):
                raise InvalidParams(f"factor {fname!r}: color tuple {colors} out of range")
            if not np.isfinite(val) or val < 0:
                raise NegativeDensity(f"factor {fname!r}: density {val} at {colors}")
            table[colors] = val
        factors.append(FactorType(fname, arity, cls, _frozen(table)))

    return ObservationModel(
        q=q,
        type_names=tuple(names),
        type_dist=_frozen(type_dist),
        priors=_frozen(np.vstack(priors)),
        factors=tuple(factors),
        name=str(spec.get("name", "model")),
    )


def load_model(path) -> ObservationModel:
    with open(path) as fh:
        return validate_model(json.load(fh))


def save_model(model: ObservationModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_spec(), indent=1) + "\n")


# ---------------------------------------------------------------- local tables

def _prior_weights(model: ObservationModel, i: int, skip=()) -> np.ndarray:
    """Outer product of the position priors, with positions in ``skip`` set to ones."""
    f = model.factors[i]
    w = np.ones((model.q,) * f.arity)
    for pos, t in enumerate(f.cls):
        if pos in skip:
            continue
        shape = [1] * f.arity
        shape[pos] = model.q
        w = w * model.priors[t].reshape(shape)
    return w


def average_factor_density(model: ObservationModel, i: int) -> float:
    """Prior-weighted mean of the density table of factor type ``i``."""
    f = model.factors[i]
    return float((f.table * _prior_weights(model, i)).sum())


def factor_marginal(model: ObservationModel, i: int) -> np.ndarray:
    w = model.factors[i].table * _prior_weights(model, i)
    total = w.sum()
    if total <= 0:
        raise ZeroDensityFactor(f"factor {model.factors[i].name!r} has zero average density")
    return w / total


def _check_positions(model, i, a, b):
    ar = model.factors[i].arity
    if not (0 <= a < ar and 0 <= b < ar):
        raise IndexError(f"positions ({a}, {b}) out of range for arity {ar}")
    if a == b:
        raise SamePositionError(f"positions must differ, got a = b = {a}")


def conditional_matrix(model: ObservationModel, i: int, a: int, b: int) -> np.ndarray:
    """``Psi[alpha, beta] = Pr[c_a = alpha | c_b = beta]`` under the local law.

    Columns whose conditioning event has zero mass are replaced by the prior
    of position ``a``.
    """
    _check_positions(model, i, a, b)
    mu = factor_marginal(model, i)
    others = tuple(k for k in range(mu.ndim) if k not in (a, b))
    joint = mu.sum(axis=others) if others else mu
    if a > b:
        joint = joint.T  # rows index c_a
    col_mass = joint.sum(axis=0)
    prior_a = model.priors[model.factors[i].cls[a]]
    psi = np.empty_like(joint)
    ok = col_mass > 0
    psi[:, ok] = joint[:, ok] / col_mass[ok]
    psi[:, ~ok] = prior_a[:, None]
    return psi


def centered_transition(model: ObservationModel, i: int, a: int, b: int) -> np.ndarray:
    """``(I - P_a 1^T) Psi_{a|b}``; every column sums to zero."""
    psi = conditional_matrix(model, i, a, b)
    prior_a = model.priors[model.factors[i].cls[a]]
    return psi - np.outer(prior_a, psi.sum(axis=0))


def pinv_diag(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p, dtype=float)
    pos = p > 0
    out[pos] = 1.0 / p[pos]
    return np.diag(out)


class DerivedTables:
    """Lazily computed per-factor quantities, cached on the model."""

    def __init__(self, model: ObservationModel):
        self.model = model
        self.avg_density = np.array(
            [average_factor_density(model, i) for i in range(model.n_factors)]
        )
        self.prior_diag = [np.diag(p) for p in model.priors]
        self._marg: dict = {}
        self._cond: dict = {}
        self._cent: dict = {}
        self._blocks: dict = {}

    def active(self, i: int) -> bool:
        return self.avg_density[i] > 0

    def marginal(self, i: int) -> np.ndarray:
        if i not in self._marg:
            self._marg[i] = factor_marginal(self.model, i)
        return self._marg[i]

    def cond(self, i: int, a: int, b: int) -> np.ndarray:
        key = (i, a, b)
        if key not in self._cond:
            self._cond[key] = conditional_matrix(self.model, i, a, b)
        return self._cond[key]

    def centered(self, i: int, a: int, b: int) -> np.ndarray:
        """T-bar, or the zero matrix for factor types that never occur."""
        key = (i, a, b)
        if key not in self._cent:
            if self.active(i):
                self._cent[key] = centered_transition(self.model, i, a, b)
            else:
                _check_positions(self.model, i, a, b)
                self._cent[key] = np.zeros((self.model.q, self.model.q))
        return self._cent[key]

    def block(self, i: int) -> np.ndarray:
        """All T-bar matrices of factor ``i`` as an (a, a, q, q) tensor, zero on the diagonal."""
        if i not in self._blocks:
            f = self.model.factors[i]
            q = self.model.q
            out = np.zeros((f.arity, f.arity, q, q))
            for a in range(f.arity):
                for b in range(f.arity):
                    if a != b:
                        out[a, b] = self.centered(i, a, b)
            out.setflags(write=False)
            self._blocks[i] = out
        return self._blocks[i]


# ------------------------------------------------------------- detailed balance

@dataclass
class BalanceReport:
    holds: bool
    violations: list  # (i, j, c, lhs, rhs)
    max_residual: float

    def __bool__(self):
        return self.holds


def slot_color_rates(model: ObservationModel, i: int, j: int) -> np.ndarray:
    """Expected count of type-``i`` factors holding a color-``c`` vertex at slot ``j``.

    Entry ``c`` is ``sum_{c': c'_j = c} prod_{k != j} P_k(c'_k) phi_i(c')``,
    before the type-frequency factor.
    """
    f = model.factors[i]
    w = f.table * _prior_weights(model, i, skip=(j,))
    axes = tuple(k for k in range(f.arity) if k != j)
    return w.sum(axis=axes) if axes else w.copy()


def detailed_balance_check(model: ObservationModel, tol: float = 1e-12) -> BalanceReport:
    """Compare each factor's mean density to its per-slot, per-color conditional mass."""
    violations = []
    worst = 0.0
    for i, f in enumerate(model.factors):
        dbar = average_factor_density(model, i)
        for j in range(f.arity):
            prior = model.priors[f.cls[j]]
            rates = slot_color_rates(model, i, j)
            for c in range(model.q):
                if prior[c] <= 0:
                    continue
                res = abs(rates[c] - dbar)
                worst = max(worst, res)
                if res > tol:
                    violations.append((i, j, c, dbar, float(rates[c])))
    return BalanceReport(not violations, violations, worst)

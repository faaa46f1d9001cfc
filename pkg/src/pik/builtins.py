"""Ready-made model families.

Normalisations are chosen so that the parameter ``d`` is the expected
number of factors touching a variable.  The block model follows the usual
convention where an unordered pair with labels (c, c') is joined with
probability ``P[c, c'] / n``; since tuples are ordered, each orientation
gets half of that rate.
"""

from __future__ import annotations

from itertools import product

from .errors import InvalidParams, UnknownBuiltin
from .model import MAX_ARITY, ObservationModel, validate_model


def _uniform_type(q):
    return [{"name": "v", "weight": 1.0, "prior": [1.0 / q] * q}]


def _nae_factors(k: int, degree: float, tag: str):
    """All 2^k sign patterns of not-all-equal on ``k`` literals."""
    if degree == 0:
        return []
    amp = degree / (k * (2 ** k - 2))
    facs = []
    for sigma in product((0, 1), repeat=k):
        entries = []
        for c in product((0, 1), repeat=k):
            lits = {ci ^ si for ci, si in zip(c, sigma)}
            if len(lits) == 2:
                entries.append({"colors": list(c), "value": amp})
        signs = "".join("+" if s == 0 else "-" for s in sigma)
        facs.append({"name": f"{tag}{signs}", "arity": k, "class": ["v"] * k,
                     "entries": entries})
    return facs


def nae3sat(d):
    if not d > 0:
        raise InvalidParams("nae3sat needs d > 0")
    return {"q": 2, "name": f"nae3sat({d:g})", "types": _uniform_type(2),
            "factors": _nae_factors(3, float(d), "nae")}


def naek_mixture(d, p, k1=3, k2=5):
    k1, k2 = int(k1), int(k2)
    if not d > 0 or not 0 <= p <= 1:
        raise InvalidParams("naek_mixture needs d > 0 and 0 <= p <= 1")
    for k in (k1, k2):
        if not 2 <= k <= MAX_ARITY:
            raise InvalidParams(f"clause width {k} outside [2, {MAX_ARITY}]")
    facs = _nae_factors(k1, p * d, f"nae{k1}") + _nae_factors(k2, (1 - p) * d, f"nae{k2}")
    return {"q": 2, "name": f"naek_mixture({d:g},{p:g},{k1},{k2})",
            "types": _uniform_type(2), "factors": facs}


def coloring(q, d):
    if float(q) != int(q) or int(q) < 2 or not d > 0:
        raise InvalidParams("coloring needs integer q >= 2 and d > 0")
    q = int(q)
    val = q * float(d) / (2.0 * (q - 1))
    entries = [{"colors": [a, b], "value": val} for a in range(q) for b in range(q) if a != b]
    return {"q": q, "name": f"coloring({q},{d:g})", "types": _uniform_type(q),
            "factors": [{"name": "neq", "arity": 2, "class": ["v", "v"], "entries": entries}]}


def sbm(q, c_in, c_out):
    if float(q) != int(q) or int(q) < 2:
        raise InvalidParams("sbm needs integer q >= 2")
    if c_in < 0 or c_out < 0 or c_in + c_out <= 0:
        raise InvalidParams("sbm needs non-negative c_in, c_out, not both zero")
    q = int(q)
    entries = [{"colors": [a, b], "value": (c_in if a == b else c_out) / 2.0}
               for a in range(q) for b in range(q)]
    return {"q": q, "name": f"sbm({q},{c_in:g},{c_out:g})", "types": _uniform_type(q),
            "factors": [{"name": "edge", "arity": 2, "class": ["v", "v"], "entries": entries}]}


def biased_pair(scale=2.0):
    """Pairs appear only between two color-0 vertices; violates detailed balance."""
    if not scale > 0:
        raise InvalidParams("biased_pair needs scale > 0")
    return {"q": 2, "name": f"biased_pair({scale:g})", "types": _uniform_type(2),
            "factors": [{"name": "pair00", "arity": 2, "class": ["v", "v"],
                         "entries": [{"colors": [0, 0], "value": 2.0 * scale}]}]}


BUILTINS = {
    "nae3sat": nae3sat,
    "naek_mixture": naek_mixture,
    "coloring": coloring,
    "sbm": sbm,
    "biased_pair": biased_pair,
}


def builtin_model(name: str, params=()) -> dict:
    """Model description (JSON-ready dict) for a named family."""
    try:
        fn = BUILTINS[name]
    except KeyError:
        raise UnknownBuiltin(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    try:
        return fn(*params)
    except TypeError as exc:
        raise InvalidParams(f"{name}: {exc}") from None


def parse_builtin(text: str):
    """Split ``"name:p1,p2"`` into ``(name, [floats])``."""
    name, _, rest = text.partition(":")
    params = []
    if rest.strip():
        try:
            params = [float(x) for x in rest.split(",")]
        except ValueError:
            raise InvalidParams(f"cannot parse parameters in {text!r}") from None
    return name.strip(), params


def resolve_builtin(text: str) -> ObservationModel:
    name, params = parse_builtin(text)
    return validate_model(builtin_model(name, params))


def family(name: str, fixed=(), slot: int = 0):
    """Map a scalar to a model by substituting it into parameter ``slot``."""
    fixed = list(fixed)

    def make(x: float) -> ObservationModel:
        params = fixed[:slot] + [x] + fixed[slot:]
        return validate_model(builtin_model(name, params))

    return make

import numpy as np
import pytest

from pik.builtins import builtin_model, family, parse_builtin, resolve_builtin
from pik.errors import InvalidParams, UnknownBuiltin
from pik.model import detailed_balance_check
from pik.stability import lambda_L


def test_parse():
    assert parse_builtin("sbm:2,5,1") == ("sbm", [2.0, 5.0, 1.0])
    assert parse_builtin("nae3sat") == ("nae3sat", [])
    with pytest.raises(InvalidParams):
        parse_builtin("sbm:2,x")


def test_unknown_and_invalid():
    with pytest.raises(UnknownBuiltin):
        builtin_model("nope")
    with pytest.raises(InvalidParams):
        builtin_model("coloring", [1, 3])
    with pytest.raises(InvalidParams):
        builtin_model("nae3sat", [0])
    with pytest.raises(InvalidParams):
        builtin_model("nae3sat", [1, 2, 3, 4])


def test_nae3sat_shape():
    m = resolve_builtin("nae3sat:6")
    assert m.n_factors == 8 and all(f.arity == 3 for f in m.factors)
    assert detailed_balance_check(m).holds


def test_coloring_encoding():
    m = resolve_builtin("coloring:3,9")
    t = m.factors[0].table
    assert np.all(np.diag(t) == 0)
    off = t[~np.eye(3, dtype=bool)]
    assert np.allclose(off, off[0])
    # mean degree equals d: two slots, each with density d / 2
    assert 2 * m.tables.avg_density[0] == pytest.approx(9)


def test_sbm_encoding_and_lambda():
    m = resolve_builtin("sbm:2,5,1")
    assert np.allclose(m.factors[0].table, [[2.5, 0.5], [0.5, 2.5]])
    assert lambda_L(m) == pytest.approx((5 - 1) ** 2 / (2 * (5 + 1)), abs=1e-12)


def test_naek_mixture_lambda_linear_in_d():
    f = family("naek_mixture", [0.4], slot=0)
    l1, l2 = lambda_L(f(2.0)), lambda_L(f(4.0))
    assert l2 == pytest.approx(2 * l1, rel=1e-10)


def test_family_substitution():
    make = family("sbm", [2, 1], slot=1)
    assert make(7.0).name == "sbm(2,7,1)"

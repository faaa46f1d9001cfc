import numpy as np
import pytest

from pik.builtins import resolve_builtin
from pik.model import validate_model


def two_type_spec():
    """Two variable types, non-uniform priors and a mixed-class ternary factor."""
    return {
        "q": 2,
        "types": [
            {"name": "a", "weight": 0.5, "prior": [0.3, 0.7]},
            {"name": "b", "weight": 0.5, "prior": [0.6, 0.4]},
        ],
        "factors": [
            {"name": "x", "arity": 3, "class": ["a", "b", "a"],
             "entries": [{"colors": [i, j, k], "value": 1 + i + 2 * j * k}
                         for i in range(2) for j in range(2) for k in range(2)]},
            {"name": "y", "arity": 2, "class": ["b", "b"],
             "entries": [{"colors": [0, 1], "value": 2.0}, {"colors": [1, 1], "value": 0.5}]},
        ],
    }


def constant_spec(value=3.0, q=2, arity=2):
    from itertools import product
    return {"q": q, "types": [{"name": "v", "weight": 1.0, "prior": [1.0 / q] * q}],
            "factors": [{"name": "c", "arity": arity, "class": ["v"] * arity,
                         "entries": [{"colors": list(c), "value": value}
                                     for c in product(range(q), repeat=arity)]}]}


def table_spec(table, prior=None):
    table = np.asarray(table, dtype=float)
    q = table.shape[0]
    prior = prior if prior is not None else [1.0 / q] * q
    entries = [{"colors": list(map(int, idx)), "value": float(table[idx])}
               for idx in zip(*np.nonzero(table))]
    return {"q": q, "types": [{"name": "v", "weight": 1.0, "prior": list(prior)}],
            "factors": [{"name": "t", "arity": table.ndim, "class": ["v"] * table.ndim,
                         "entries": entries}]}


@pytest.fixture(scope="session")
def nae8():
    return resolve_builtin("nae3sat:8")


@pytest.fixture(scope="session")
def two_type():
    return validate_model(two_type_spec())


@pytest.fixture(scope="session")
def constant_model():
    return validate_model(constant_spec())


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion (also printed at the end)."""
    def _report(k, ok, detail):
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)

from itertools import product

import numpy as np
import pytest

from pik.bp import (beliefs, bp_step, factor_messages, init_trivial, jacobian_check, run_bp,
                    update_f2v)
from pik.builtins import resolve_builtin
from pik.errors import DegenerateNormalizer
from pik.model import validate_model
from pik.sampler import FactorGraphInstance, sample_planted

from conftest import constant_spec, table_spec, two_type_spec


def test_trivial_messages_uniform(nae8):
    inst = sample_planted(nae8, 200, 0)[0]
    msgs = init_trivial(inst, nae8)
    assert all(np.allclose(x, 0.5) for x in msgs.v2f + msgs.f2v if x.size)


def test_trivial_messages_point_prior():
    m = validate_model(table_spec([[1.0, 1.0], [1.0, 1.0]], prior=[1.0, 0.0]))
    inst = FactorGraphInstance.from_factors(m, 3, np.zeros(3), [(0, (0, 1))])
    msgs = init_trivial(inst, m)
    assert np.allclose(msgs.v2f[0], [1, 0]) and np.allclose(msgs.f2v[0], [1, 0])


def test_two_type_messages(two_type):
    inst = FactorGraphInstance.from_factors(two_type, 3, [0, 1, 0], [(0, (0, 1, 2))])
    msgs = init_trivial(inst, two_type)
    assert np.allclose(msgs.v2f[0][0], two_type.priors[[0, 1, 0]])


@pytest.mark.parametrize("name", ["nae3sat:8", "coloring:3,4", "sbm:3,5,1"])
def test_fixed_point_under_detailed_balance(name):
    m = resolve_builtin(name)
    inst = sample_planted(m, 500, 1)[0]
    msgs, converged, bel, rounds = run_bp(inst, m)
    assert converged and rounds == 1
    assert np.allclose(bel, m.priors[inst.types], atol=1e-12)
    step = bp_step(inst, m, init_trivial(inst, m))
    assert step.max_change(init_trivial(inst, m)) <= 1e-12


def test_zero_iterations():
    m = resolve_builtin("nae3sat:3")
    inst = sample_planted(m, 50, 0)[0]
    msgs, converged, bel, rounds = run_bp(inst, m, max_iters=0)
    assert not converged and rounds == 0


def test_xor_flips_message():
    table = np.array([[0.0, 1.0], [1.0, 0.0]])
    inc = np.array([[[0.8, 0.2], [0.5, 0.5]]])
    out = factor_messages(table, inc)
    assert np.allclose(out[0, 1], [0.2, 0.8])


def test_isolated_variable():
    m = resolve_builtin("sbm:2,3,1")
    inst = FactorGraphInstance.from_factors(m, 3, np.zeros(3), [(0, (0, 1))])
    msgs, converged, bel, _ = run_bp(inst, m)
    assert converged and np.allclose(bel[2], [0.5, 0.5])


def test_degenerate_normaliser():
    # the factor only allows color 0 at both ends, but a prior forbids it
    m = validate_model(table_spec([[1.0, 0.0], [0.0, 0.0]], prior=[0.0, 1.0]))
    inst = FactorGraphInstance.from_factors(m, 2, np.zeros(2), [(0, (0, 1))])
    msgs = init_trivial(inst, m)
    with pytest.raises(DegenerateNormalizer):
        update_f2v(inst, m, msgs.v2f, strict=True)
    out = bp_step(inst, m, msgs)
    assert out.fallbacks > 0


def _exact_marginals(model, inst):
    n, q = inst.n, model.q
    probs = np.zeros((n, q))
    for col in product(range(q), repeat=n):
        col = np.array(col)
        w = np.prod(model.priors[inst.types, col])
        for i, g in enumerate(inst.groups):
            for row in g:
                w *= model.factors[i].table[tuple(col[row])]
        probs[np.arange(n), col] += w
    return probs / probs.sum(axis=1, keepdims=True)


@pytest.mark.parametrize("spec_name", ["biased", "two_type", "sbm"])
def test_tree_bp_exact(spec_name):
    if spec_name == "biased":
        m = validate_model(table_spec([[3.0, 1.0], [0.5, 2.0]], prior=[0.3, 0.7]))
        facs = [(0, (0, 1)), (0, (1, 2)), (0, (3, 1)), (0, (4, 3)), (0, (5, 4)), (0, (6, 0))]
        types = np.zeros(7)
    elif spec_name == "two_type":
        m = validate_model(two_type_spec())
        types = np.array([0, 1, 0, 1, 0, 1, 1, 0])
        facs = [(0, (0, 1, 2)), (1, (1, 3)), (0, (4, 3, 7)), (1, (5, 6)), (1, (6, 3))]
    else:
        m = resolve_builtin("sbm:2,5,1")
        types = np.zeros(6)
        facs = [(0, (0, 1)), (0, (1, 2)), (0, (2, 3)), (0, (3, 4)), (0, (2, 5))]
    inst = FactorGraphInstance.from_factors(m, len(types), types, facs)
    init = init_trivial(inst, m)
    rng = np.random.default_rng(0)
    for x in init.v2f + init.f2v:  # arbitrary positive start
        x[:] = rng.uniform(0.1, 1, x.shape)
        x /= x.sum(-1, keepdims=True)
    msgs, converged, bel, rounds = run_bp(inst, m, init=init, max_iters=50, tol=1e-13)
    assert converged and rounds <= 2 * 8 + 2
    assert np.allclose(bel, _exact_marginals(m, inst), atol=1e-10)


@pytest.mark.parametrize("name,i", [("nae3sat:8", 0), ("nae3sat:8", 5), ("coloring:3,4", 0),
                                    ("sbm:3,5,1", 0)])
def test_jacobian_matches_transition(name, i):
    m = resolve_builtin(name)
    f = m.factors[i]
    for a in range(f.arity):
        for b in range(f.arity):
            if a != b:
                assert jacobian_check(m, i, a, b) <= 1e-6


def test_jacobian_color_independent():
    m = validate_model(constant_spec(2.0))
    assert jacobian_check(m, 0, 0, 1) <= 1e-8


def test_coloring_jacobian_hand_formula():
    from pik.model import centered_transition
    m = resolve_builtin("coloring:3,4")
    psi = (np.ones((3, 3)) - np.eye(3)) / 2
    assert np.allclose(centered_transition(m, 0, 0, 1), (np.eye(3) - np.ones((3, 3)) / 3) @ psi)


def test_beliefs_shape(two_type):
    inst = sample_planted(two_type, 100, 3)[0]
    msgs, _, bel, _ = run_bp(inst, two_type, max_iters=20)
    assert bel.shape == (100, 2) and np.allclose(bel.sum(1), 1)
    assert np.allclose(beliefs(inst, two_type, msgs), bel)

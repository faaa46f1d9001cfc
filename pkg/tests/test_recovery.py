import numpy as np
import pytest

from pik.builtins import resolve_builtin
from pik.errors import DimensionMismatch, NotApplicable, SubcriticalModel
from pik.model import validate_model
from pik.sampler import FactorGraphInstance, degree_profile, sample_null, sample_planted
from pik.recovery import (best_overlap, build_g, centered_indicators, correlation,
                          descent_violations, easy_distinguish, easy_recover, h_overlap,
                          random_overlap_quantile, weak_recover)
from pik.spectral import build_centered_operator

from conftest import constant_spec


def test_build_g_example(nae8):
    inst = FactorGraphInstance.from_factors(nae8, 3, np.zeros(3), [])
    assert build_g(inst, [0, 1, 0], nae8).tolist() == [1, 0, 0, 1, 1, 0]
    with pytest.raises(DimensionMismatch):
        build_g(inst, [0, 1], nae8)


def test_correlation_examples():
    assert correlation([1, 0], [1, 0]) == (1.0, 1.0)
    assert correlation([1, 0], [0, 1])[1] == 0.0
    assert correlation([0, 0], [1, 1]) == (0.0, 0.0)
    ip, r = correlation([3, 4], [-3, -4])
    assert ip == -25 and r == pytest.approx(-1)
    with pytest.raises(DimensionMismatch):
        correlation([1, 2], [1])


def test_random_unit_vector_is_uncorrelated(nae8):
    n = 10_000
    inst, colors = sample_planted(nae8, n, 0)
    u = np.random.default_rng(1).standard_normal(n)
    u /= np.linalg.norm(u)
    for chi in centered_indicators(inst, colors, nae8):
        assert abs(correlation(u, chi.centered)[1]) <= 0.05


def test_centered_indicator_sums(two_type):
    n = 4000
    inst, colors = sample_planted(two_type, n, 3)
    chis = centered_indicators(inst, colors, two_type)
    assert len(chis) == two_type.n_types * two_type.q
    for chi in chis:
        assert abs(chi.centered.sum()) <= 4 * np.sqrt(n)
        assert np.allclose(chi.centered, chi.raw - chi.mean)
        assert set(np.unique(chi.raw)) <= {0.0, 1.0}


def test_overlap_helpers(nae8):
    inst, colors = sample_planted(nae8, 500, 0)
    chi = centered_indicators(inst, colors, nae8)[0].centered
    u = chi / np.linalg.norm(chi)
    assert best_overlap(u[None, None, :], inst, colors, nae8) == pytest.approx(np.linalg.norm(chi))
    assert best_overlap(np.zeros((0, 500)), inst, colors, nae8) == 0.0
    q1 = random_overlap_quantile(inst, colors, nae8, rng=3)
    assert q1 == random_overlap_quantile(inst, colors, nae8, rng=3)
    assert 0 < q1 < 2


@pytest.fixture(scope="module")
def nae16_run():
    m = resolve_builtin("nae3sat:16")
    inst, colors = sample_planted(m, 2000, 0)
    return m, inst, colors, weak_recover(inst, m, rng=0)


def test_weak_recover_output_shape_and_norms(nae16_run):
    m, inst, colors, out = nae16_run
    assert out.vectors.shape == (out.C + 1, m.q, inst.n)
    assert out.t_range[0] <= out.m <= out.t_range[1]
    assert out.path[0] == out.t_range[1] and out.path[-1] == out.m
    for _, u in out.candidates():
        assert np.linalg.norm(u) == pytest.approx(1.0)


def test_weak_recover_descent_recheck(nae16_run):
    m, inst, _, out = nae16_run
    assert not out.exhausted
    lam_m, v = out.eigen[out.m]
    op = build_centered_operator(m, inst)
    assert descent_violations(op, v, lam_m, out.m, out.t_range[0], out.delta) == []


def test_weak_recover_correlates(nae16_run):
    m, inst, colors, out = nae16_run
    assert best_overlap(out.vectors, inst, colors, m) > 5 * random_overlap_quantile(
        inst, colors, m, rng=1)


def test_weak_recover_rejects_subcritical(constant_model):
    inst = sample_null(constant_model, 200, 0)
    with pytest.raises(SubcriticalModel):
        weak_recover(inst, constant_model)
    m = resolve_builtin("nae3sat:4")  # lambda_L < 1
    with pytest.raises(SubcriticalModel):
        weak_recover(sample_null(m, 200, 0), m)
    m = resolve_builtin("nae3sat:5")  # lambda_L ~ 1.11 < (1 + 0.5)^4
    with pytest.raises(SubcriticalModel):
        weak_recover(sample_null(m, 200, 0), m, delta=0.5)
    with pytest.raises(ValueError):
        weak_recover(sample_null(m, 200, 0), m, t_range=(5, 3))


def test_easy_case_not_applicable_under_balance(nae8):
    inst = sample_null(nae8, 100, 0)
    with pytest.raises(NotApplicable):
        easy_distinguish(inst, nae8)
    with pytest.raises(NotApplicable):
        easy_recover(inst, nae8)


def test_easy_distinguish_tie_goes_to_null():
    m = resolve_builtin("biased_pair:1")
    inst = FactorGraphInstance.from_factors(m, 4, np.zeros(4), [])
    dec = easy_distinguish(inst, m)
    assert dec.statistic == 0.0
    assert dec.label == "null"


def test_easy_distinguish_separates():
    m = resolve_builtin("biased_pair:2")
    labels = []
    for seed in range(3):
        labels.append(easy_distinguish(sample_planted(m, 5000, seed)[0], m).label)
        labels.append(easy_distinguish(sample_null(m, 5000, 100 + seed), m).label)
    assert labels == ["planted", "null"] * 3


def test_easy_recover_zero_degree_goes_to_low_rate():
    m = resolve_builtin("biased_pair:2")
    inst, colors = sample_planted(m, 3000, 4)
    rec = easy_recover(inst, m)
    deg = degree_profile(inst, *rec.slot)
    c_lo, c_hi = rec.colors_compared
    assert (c_lo, c_hi) == (1, 0)
    assert np.all(rec.guesses[deg == 0] == c_lo)
    assert np.all(rec.guesses[deg > 0] == c_hi)
    assert h_overlap(rec.vector, inst, colors, m) > 0.5


def test_easy_recover_color_independent_rejected(constant_model):
    with pytest.raises(NotApplicable):
        easy_recover(sample_null(constant_model, 50, 0), constant_model)


def test_h_overlap_checks():
    m = resolve_builtin("biased_pair:2")
    inst, colors = sample_planted(m, 200, 0)
    g = build_g(inst, colors, m)
    assert h_overlap(g, inst, colors, m) == pytest.approx(1.0)
    assert h_overlap(np.zeros_like(g), inst, colors, m) == 0.0
    with pytest.raises(DimensionMismatch):
        h_overlap(g[:-1], inst, colors, m)


def test_overlap_invariant_under_relabeling(nae8):
    n = 800
    inst, colors = sample_planted(nae8, n, 2)
    perm = np.random.default_rng(0).permutation(n)
    inv = np.argsort(perm)
    factors = [(i, tuple(int(inv[v]) for v in row))
               for i, g in enumerate(inst.groups) for row in g]
    relab = FactorGraphInstance.from_factors(nae8, n, inst.types[perm], factors)
    u = np.random.default_rng(5).standard_normal((1, n))
    a = best_overlap(u, inst, colors, nae8)
    b = best_overlap(u[:, perm], relab, colors[perm], nae8)
    assert a == pytest.approx(b)

import numpy as np
import pytest

from pik.builtins import resolve_builtin
from pik.recovery import build_g
from pik.sampler import FactorGraphInstance, random_small_instance, sample_planted
from pik.spectral import HInnerProduct, enumerate_nb_power
from pik.stats import (StatRecord, local_statistic, local_statistic_curve, median_by_s,
                       records_to_csv, spectral_growth_curve)


@pytest.mark.parametrize("name", ["nae3sat:3", "sbm:2,5,1", "biased_pair:2"])
def test_local_statistic_matches_oracle(name):
    m = resolve_builtin(name)
    rng = np.random.default_rng(7)
    inst = random_small_instance(m, 7, 6, rng)
    colors = rng.integers(0, m.q, size=7)
    g = build_g(inst, colors, m)
    h = HInnerProduct.build(m, inst).diag
    for s in (1, 2, 3):
        A = enumerate_nb_power(m, inst, s)
        expect = (g / h) @ A @ g / (g @ (g / h))
        assert local_statistic(inst, colors, m, s) == pytest.approx(expect, abs=1e-12)
    curve = local_statistic_curve(inst, colors, m, [3, 1, 2])
    assert list(curve) == [1, 2, 3]
    assert curve[2] == pytest.approx(local_statistic(inst, colors, m, 2))


def test_local_statistic_zero_model(constant_model):
    inst, colors = sample_planted(constant_model, 100, 0)
    assert local_statistic(inst, colors, constant_model, 2) == 0.0
    assert local_statistic_curve(inst, colors, constant_model, [1, 2]) == {1: 0.0, 2: 0.0}
    with pytest.raises(ValueError):
        local_statistic(inst, colors, constant_model, 0)


def test_local_statistic_relabel_invariant(nae8):
    n = 300
    inst, colors = sample_planted(nae8, n, 1)
    perm = np.random.default_rng(0).permutation(n)
    inv = np.argsort(perm)
    factors = [(i, tuple(int(inv[v]) for v in row))
               for i, g in enumerate(inst.groups) for row in g]
    relab = FactorGraphInstance.from_factors(nae8, n, inst.types[perm], factors)
    assert local_statistic(relab, colors[perm], nae8, 3) == pytest.approx(
        local_statistic(inst, colors, nae8, 3))


def test_growth_curve_reproducible(nae8):
    a = spectral_growth_curve(nae8, 300, 2, 2, rng=11)
    b = spectral_growth_curve(nae8, 300, 2, 2, rng=11)
    assert [r.value for r in a] == [r.value for r in b]
    assert [r.seed for r in a] == ["11/0", "11/0", "11/1", "11/1"]
    assert all(r.quantity == "growth_null" and r.reference == pytest.approx(np.sqrt(16 / 9))
               for r in a)
    med = median_by_s(a)
    assert sorted(med) == [1, 2]
    text = records_to_csv(a, "pik test")
    lines = text.splitlines()
    assert lines[0] == "# pik test"
    assert lines[1].split(",") == StatRecord.columns()
    assert len(lines) == 6


def test_growth_curve_zero_model(constant_model):
    recs = spectral_growth_curve(constant_model, 100, 2, 1, planted=True)
    assert [r.value for r in recs] == [0.0, 0.0]
    assert all(np.isnan(r.ratio) for r in recs)
    with pytest.raises(ValueError):
        spectral_growth_curve(constant_model, 100, 2, 0)

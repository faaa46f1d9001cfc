import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pik.builtins import resolve_builtin
from pik.errors import DensityExceedsOne
from pik.model import validate_model
from pik.sampler import (FactorGraphInstance, bicycle_free, check_instance, degree_profile,
                         read_colors, read_instance, sample_colors, sample_null, sample_planted,
                         sample_types, write_colors, write_instance)

from conftest import constant_spec, table_spec, two_type_spec


def test_single_type():
    m = resolve_builtin("nae3sat:3")
    assert np.all(sample_types(m, 100, 1) == 0)


def test_type_counts_concentrate():
    m = validate_model(two_type_spec())
    t = sample_types(m, 100_000, 7)
    assert abs(np.sum(t == 0) - 50_000) <= 700


def test_same_seed_same_instance():
    m = resolve_builtin("nae3sat:6")
    a, ca = sample_planted(m, 3000, 11)
    b, cb = sample_planted(m, 3000, 11)
    assert np.array_equal(ca, cb)
    assert all(np.array_equal(x, y) for x, y in zip(a.groups, b.groups))
    c = sample_null(m, 3000, 11)
    d = sample_null(m, 3000, 11)
    assert all(np.array_equal(x, y) for x, y in zip(c.groups, d.groups))


@pytest.mark.parametrize("sampler", ["planted", "null"])
def test_factor_count_matches_mean(sampler):
    m = resolve_builtin("nae3sat:6")
    n = 10_000
    inst = sample_planted(m, n, 3)[0] if sampler == "planted" else sample_null(m, n, 3)
    assert abs(inst.n_factors - n * 6 / 3) <= 0.02 * n * 6 / 3


def test_zero_density_gives_empty():
    m = validate_model(table_spec([[0.0, 0.0], [0.0, 0.0]]))
    inst, _ = sample_planted(m, 500, 0)
    assert inst.n_factors == 0
    assert sample_null(m, 500, 0).n_factors == 0


def test_coloring_factors_are_proper():
    m = resolve_builtin("coloring:3,5")
    inst, col = sample_planted(m, 5000, 2)
    e = inst.groups[0]
    assert len(e) > 0 and np.all(col[e[:, 0]] != col[e[:, 1]])


def test_color_independent_null_matches_planted():
    m = validate_model(constant_spec(2.0))
    n = 4000
    a = [sample_planted(m, n, s)[0].n_factors for s in range(5)]
    b = [sample_null(m, n, 100 + s).n_factors for s in range(5)]
    mean = n * 2.0 * 1.0  # one slot per orientation: n^2 tuples * 2/n
    assert abs(np.mean(a) - mean) < 4 * math.sqrt(mean / 5) + 0.01 * mean
    assert abs(np.mean(a) - np.mean(b)) < 6 * math.sqrt(2 * mean / 5)


def test_density_exceeds_one():
    m = validate_model(table_spec([[50.0, 50.0], [50.0, 50.0]]))
    with pytest.raises(DensityExceedsOne):
        sample_planted(m, 10, 0)


def test_degree_profile_counts():
    m = resolve_builtin("nae3sat:3")
    inst = FactorGraphInstance.from_factors(m, 4, np.zeros(4), [(0, (1, 2, 3))])
    assert degree_profile(inst, 0, 0).tolist() == [0, 1, 0, 0]
    assert degree_profile(inst, 0, 1).tolist() == [0, 0, 1, 0]
    empty = FactorGraphInstance.from_factors(m, 4, np.zeros(4), [])
    assert not degree_profile(empty, 3, 2).any()


def test_null_slot_degree_mean():
    m = resolve_builtin("nae3sat:6")
    inst = sample_null(m, 10_000, 9)
    dbar = m.tables.avg_density
    for i in range(m.n_factors):
        for j in range(3):
            assert abs(degree_profile(inst, i, j).mean() - dbar[i]) <= 0.05 * dbar[i] + 0.02


def test_bicycle_free_small_graphs():
    m = resolve_builtin("sbm:2,3,1")
    path = FactorGraphInstance.from_factors(m, 5, np.zeros(5),
                                            [(0, (0, 1)), (0, (1, 2)), (0, (2, 3)), (0, (3, 4))])
    assert all(bicycle_free(path, r) for r in range(1, 8))
    bowtie = FactorGraphInstance.from_factors(
        m, 5, np.zeros(5),
        [(0, (0, 1)), (0, (1, 2)), (0, (2, 0)), (0, (0, 3)), (0, (3, 4)), (0, (4, 0))])
    # each triangle has length 6 in the bipartite graph; both sit within 3 hops of vertex 0
    assert bicycle_free(bowtie, 2)
    assert not bicycle_free(bowtie, 3)
    one_cycle = FactorGraphInstance.from_factors(m, 3, np.zeros(3),
                                                 [(0, (0, 1)), (0, (1, 2)), (0, (2, 0))])
    assert bicycle_free(one_cycle, 10)


def test_instance_round_trip(tmp_path):
    m = validate_model(two_type_spec())
    inst, col = sample_planted(m, 300, 4)
    inst.provenance = {"kind": "planted", "seed": 4}
    write_instance(inst, tmp_path / "i.txt")
    write_colors(col, tmp_path / "c.txt")
    back = read_instance(tmp_path / "i.txt", m)
    assert back.n == inst.n and np.array_equal(back.types, inst.types)
    assert all(np.array_equal(np.sort(x, axis=0), np.sort(y, axis=0))
               for x, y in zip(back.groups, inst.groups))
    assert back.provenance == {"kind": "planted", "seed": 4}
    assert np.array_equal(read_colors(tmp_path / "c.txt"), col)


def test_adjacency_round_trip():
    m = resolve_builtin("nae3sat:6")
    inst = sample_null(m, 500, 1)
    for fid in range(0, inst.n_factors, 37):
        i, tup = inst.factor(fid)
        assert tuple(inst.groups[i][fid - inst.offsets[i]]) == tuple(tup)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(20, 200))
def test_class_consistency_property(seed, n):
    m = validate_model(two_type_spec())
    for inst in (sample_planted(m, n, seed)[0], sample_null(m, n, seed)):
        check_instance(inst, m)
        for i, g in enumerate(inst.groups):
            if len(g):
                assert np.all(inst.types[g] == np.array(m.factors[i].cls))
                assert all(len(set(row)) == len(row) for row in g.tolist())
                assert len({tuple(r) for r in g.tolist()}) == len(g)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_determinism_property(seed):
    m = resolve_builtin("nae3sat:5")
    a, ca = sample_planted(m, 400, seed)
    b, cb = sample_planted(m, 400, seed)
    assert np.array_equal(ca, cb)
    assert all(np.array_equal(x, y) for x, y in zip(a.groups, b.groups))


def test_planted_colors_follow_priors():
    m = validate_model(two_type_spec())
    types = sample_types(m, 40_000, 5)
    col = sample_colors(m, types, np.random.default_rng(5))
    for t in range(2):
        frac = np.mean(col[types == t] == 0)
        assert abs(frac - m.priors[t, 0]) < 0.02

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigensupport.exceptions import InvalidArgument
from eigensupport.graph_core import (ForbiddenSet, Support, contains_spanning_kite,
                                     fifteen_vertex_benchmark, induced_subgraph, make_complete,
                                     make_kite, make_path, make_star, sample_erdos_renyi)
from eigensupport.identifiability import (PhaseTransitionReport, generic_distinct_eigenvalues,
                                          generic_invertibility, identify,
                                          kernel_identifiability_test, necessary_condition_check,
                                          nested_chain, random_matrix_on, run_phase_transition,
                                          sufficient_condition_nested)


def brute_nullity(s, forbidden, rng):
    """Dimension of symmetric matrices off ``forbidden`` commuting with a generic draw."""
    n = s.n_vertices
    a = random_matrix_on(s, rng)
    free = [(i, j) for i in range(n) for j in range(i, n)
            if (i, j) not in forbidden and (j, i) not in forbidden]
    cols = []
    for i, j in free:
        b = np.zeros((n, n))
        b[i, j] = b[j, i] = 1.0
        cols.append((a @ b - b @ a).ravel())
    if not cols:
        return 0
    sv = np.linalg.svd(np.array(cols).T, compute_uv=False)
    return int(np.sum(sv <= 1e-9 * max(sv[0], 1e-300)))


def random_support(rng, n, p):
    return Support(n, [e for e in itertools.combinations(range(n), 2) if rng.random() < p])


def relabel(s, perm):
    return Support(s.n_vertices, [(perm[i], perm[j]) for i, j in s.edges])


class TestKernelTest:
    @pytest.mark.parametrize("s, expected", [
        (make_kite(5), True),
        (make_kite(8), True),
        (make_path(3), True),
        (Support(3, [(0, 1)]), True),
        (Support(5, [(0, 1), (1, 2), (0, 2), (2, 3)]), True),
        (make_path(5), False),
        (make_star(4), False),
        (Support(4, [(0, 1), (1, 2), (0, 2)]), True),
        (Support(4, [(0, 1)]), False),
        (make_complete(4), True),
        (Support(4), False),
    ])
    def test_examples(self, s, expected):
        v = kernel_identifiability_test(s, seed=0)
        assert v.identifiable is expected
        assert expected is (brute_nullity(s, ForbiddenSet.diagonal(s.n_vertices),
                                          np.random.default_rng(1)) == 1)

    def test_methods_agree(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            s = random_support(rng, n, rng.uniform(0.2, 0.9))
            a = kernel_identifiability_test(s, seed=5, method="commutant")
            b = kernel_identifiability_test(s, seed=5, method="operator")
            assert a.identifiable == b.identifiable

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(150):
            n = int(rng.integers(2, 7))
            s = random_support(rng, n, rng.uniform(0.2, 0.8))
            expect = brute_nullity(s, ForbiddenSet.diagonal(n), rng) == 1 and len(s) > 0
            assert kernel_identifiability_test(s, seed=rng).identifiable is expect

    def test_witness_properties(self):
        s = make_star(4)
        v = kernel_identifiability_test(s, seed=2)
        assert not v.identifiable
        b = v.witness
        assert b is not None and np.allclose(b, b.T)
        assert np.allclose(np.diag(b), 0)
        a = s.adjacency()
        # witness commutes with the draw it was built from; any commuting matrix
        # for a star also commutes with its 0/1 pattern after scaling rows
        assert np.linalg.norm(b) > 0
        assert abs(np.sum(b * a)) < np.linalg.norm(b) * np.linalg.norm(a)

    def test_witness_commutes_with_draw(self):
        rng = np.random.default_rng(0)
        s = make_path(5)
        a = random_matrix_on(s, np.random.default_rng(9))
        v = kernel_identifiability_test(s, seed=np.random.default_rng(9), trials=1)
        b = v.witness
        assert np.linalg.norm(a @ b - b @ a) < 1e-8 * np.linalg.norm(b)
        cos = abs(np.sum(a * b)) / (np.linalg.norm(a) * np.linalg.norm(b))
        assert cos < 1 - 1e-6

    def test_off_diagonal_forbidden(self):
        n = 4
        s = make_kite(4)
        # forbid every non-edge pair and the diagonal: stays identifiable
        non_edges = [p for p in itertools.combinations(range(n), 2) if p not in s]
        f = ForbiddenSet(n, [(i, i) for i in range(n)] + non_edges + [(j, i) for i, j in non_edges])
        assert kernel_identifiability_test(s, f, seed=0).identifiable
        # with nothing forbidden the identity always commutes
        assert not kernel_identifiability_test(s, ForbiddenSet(n), seed=0).identifiable
        assert brute_nullity(s, ForbiddenSet(n), np.random.default_rng(0)) >= 2

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidArgument):
            kernel_identifiability_test(make_path(3), ForbiddenSet.symmetric(3, [(0, 1)]))
        with pytest.raises(InvalidArgument):
            kernel_identifiability_test(make_path(3), trials=0)

    def test_benchmark(self):
        assert kernel_identifiability_test(fifteen_vertex_benchmark(), seed=0).identifiable


class TestStructuralConditions:
    def test_invertibility(self):
        assert generic_invertibility(Support(2, [(0, 1)]))
        assert not generic_invertibility(make_path(3))
        assert generic_invertibility(make_path(4))
        assert not generic_invertibility(make_star(3))
        assert generic_invertibility(make_path(4), exact=True, seed=0)
        assert not generic_invertibility(make_path(3), exact=True, seed=0)
        assert not generic_invertibility(Support(3))

    def test_exact_and_float_agree(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            s = random_support(rng, int(rng.integers(2, 8)), rng.uniform(0.1, 0.7))
            assert generic_invertibility(s, seed=rng) == generic_invertibility(s, seed=rng, exact=True)

    def test_nested_on_kite(self):
        dropped = sufficient_condition_nested(make_kite(6), seed=0)
        assert dropped == [0, 1, 2, 3]
        chain = nested_chain(6, dropped)
        assert [len(c) for c in chain] == [5, 4, 3, 2]
        s = make_kite(6)
        for c in chain:
            assert generic_invertibility(induced_subgraph(s, c)[0], seed=0)

    def test_nested_small_cases(self):
        assert sufficient_condition_nested(Support(2, [(0, 1)])) == []
        assert sufficient_condition_nested(Support(3)) is None
        assert sufficient_condition_nested(make_path(3), seed=0) is not None
        assert sufficient_condition_nested(make_star(4), seed=0) is None

    def test_necessary(self):
        assert not necessary_condition_check(make_path(5), seed=0)
        assert necessary_condition_check(make_kite(6), seed=0)
        # a star has only three distinct eigenvalues, so sizes >= 3 say nothing
        assert generic_distinct_eigenvalues(make_star(4), seed=0) == 3
        assert necessary_condition_check(make_star(3), seed=0)
        assert kernel_identifiability_test(make_star(3), seed=0).identifiable

    def test_structure_agrees_with_kernel(self):
        rng = np.random.default_rng(2024)
        for _ in range(500):
            n = int(rng.integers(3, 8))
            s = random_support(rng, n, rng.uniform(0.15, 0.8))
            di = kernel_identifiability_test(s, seed=rng).identifiable
            if contains_spanning_kite(s):
                assert di
            if sufficient_condition_nested(s, seed=rng) is not None:
                assert di
            if not necessary_condition_check(s, seed=rng):
                assert not di
            assert identify(s, seed=rng).identifiable == di

    @settings(max_examples=60, deadline=None)
    @given(st.integers(3, 7), st.floats(0.2, 0.8), st.integers(0, 2**32 - 1))
    def test_relabel_invariance(self, n, p, seed):
        rng = np.random.default_rng(seed)
        s = random_support(rng, n, p)
        perm = rng.permutation(n)
        assert (kernel_identifiability_test(s, seed=seed).identifiable
                == kernel_identifiability_test(relabel(s, perm), seed=seed + 1).identifiable)


class TestIdentify:
    def test_methods(self):
        assert identify(make_kite(7), seed=0).method == "kite_cover"
        assert identify(make_path(5), seed=0).method == "necessary_violation"
        assert identify(make_star(4), seed=0).method == "kernel_test"
        v = identify(Support(3, [(0, 1)]), seed=0)
        assert v.identifiable and v.method == "nested_invertible"

    def test_to_dict_one_based(self):
        d = identify(make_kite(4), seed=0).to_dict()
        assert d["identifiable"] and sorted(d["witness"]) == [1, 2, 3, 4]

    def test_non_diagonal_forbidden_uses_kernel(self):
        v = identify(make_kite(4), ForbiddenSet(4), seed=0)
        assert v.method == "kernel_test" and not v.identifiable


class TestPhaseTransition:
    def test_deterministic_and_parallel(self):
        a = run_phase_transition(12, [0.2, 0.5], 20, seed=3)
        b = run_phase_transition(12, [0.2, 0.5], 20, seed=3, jobs=2)
        assert a.di_frequency == b.di_frequency

    def test_extremes(self):
        r = run_phase_transition(20, [0.0, 1.0], 5, seed=0)
        assert r.di_frequency == [0.0, 1.0]

    def test_roundtrip(self, tmp_path):
        r = run_phase_transition(10, [0.3, 0.6], 4, seed=1)
        r.write(tmp_path / "pt.csv")
        back = PhaseTransitionReport.read(tmp_path / "pt.csv")
        assert back.di_frequency == r.di_frequency and back.p_grid == r.p_grid and back.n == 10
        assert (tmp_path / "pt.csv").read_text().splitlines()[0] == "p,frequency,trials"

    def test_sampler_matches_kernel(self):
        rng = np.random.default_rng(0)
        s = sample_erdos_renyi(30, 0.3, rng)
        assert kernel_identifiability_test(s, seed=1).identifiable

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigensupport.exceptions import InvalidArgument, ParseError
from eigensupport.graph_core import (ForbiddenSet, Support, contains_spanning_kite,
                                     fifteen_vertex_benchmark, find_spanning_kite,
                                     format_edge_list, induced_subgraph, make_complete,
                                     make_kite, make_path, make_star, parse_edge_list,
                                     read_edge_list, sample_erdos_renyi, support_error,
                                     write_edge_list)


def supports(max_n=7):
    @st.composite
    def build(draw):
        n = draw(st.integers(2, max_n))
        pairs = list(itertools.combinations(range(n), 2))
        chosen = draw(st.lists(st.sampled_from(pairs), unique=True))
        return Support(n, chosen)
    return build()


class TestSupport:
    def test_edges_are_normalized_and_sorted(self):
        s = Support(4, [(3, 1), (0, 2), (1, 3)])
        assert s.edges == ((0, 2), (1, 3))
        assert len(s) == 2
        assert s.ordered_size == 4

    def test_loops_rejected_unless_enabled(self):
        with pytest.raises(InvalidArgument):
            Support(3, [(1, 1)])
        s = Support(3, [(1, 1), (0, 2)], loops=True)
        assert s.ordered_size == 3

    def test_out_of_range(self):
        with pytest.raises(InvalidArgument):
            Support(3, [(0, 3)])

    def test_from_matrix_roundtrip(self):
        s = make_kite(6)
        assert Support.from_matrix(s.adjacency()) == s

    def test_one_based_view(self):
        assert Support.from_one_based(3, [(1, 2)]).edges == ((0, 1),)
        assert Support(3, [(0, 1)]).one_based() == [(1, 2)]


class TestConstructors:
    def test_kite_three_is_triangle(self):
        assert make_kite(3).edge_set == {(0, 1), (1, 2), (0, 2)}

    def test_kite_five(self):
        expect = Support.from_one_based(5, [(1, 2), (2, 3), (3, 4), (4, 5), (3, 5)])
        assert make_kite(5) == expect

    def test_kite_four_has_terminal_triangle(self):
        s = make_kite(4)
        assert len(s) == 4
        assert {(1, 2), (2, 3), (1, 3)} <= s.edge_set

    def test_kite_too_small(self):
        with pytest.raises(InvalidArgument):
            make_kite(2)

    def test_benchmark_graph_size(self):
        s = fifteen_vertex_benchmark()
        assert s.n_vertices == 15 and len(s) == 25

    def test_star_and_path(self):
        assert len(make_star(4)) == 4
        assert len(make_path(6)) == 5
        assert len(make_complete(5)) == 10


class TestErdosRenyi:
    def test_extremes(self):
        assert len(sample_erdos_renyi(8, 0.0, 1)) == 0
        assert len(sample_erdos_renyi(8, 1.0, 1)) == 28

    def test_mean_edge_count(self):
        rng = np.random.default_rng(0)
        counts = np.array([len(sample_erdos_renyi(100, 0.5, rng)) for _ in range(2_000)])
        mean, var = 4950 * 0.5, 4950 * 0.25
        assert abs(counts.mean() - mean) < 3 * np.sqrt(var / len(counts))

    def test_reproducible(self):
        assert sample_erdos_renyi(30, 0.2, 7) == sample_erdos_renyi(30, 0.2, 7)

    def test_bad_probability(self):
        with pytest.raises(InvalidArgument):
            sample_erdos_renyi(5, 1.5)


class TestSupportError:
    def test_examples(self):
        k = make_kite(5)
        assert support_error(k, k) == 0
        assert support_error(Support(5), k) == 5
        assert support_error(Support(3, [(0, 1)]), Support(3, [(1, 2)])) == 2

    def test_mismatched_sizes(self):
        with pytest.raises(InvalidArgument):
            support_error(Support(3), Support(4))

    @given(st.data())
    def test_metric_properties(self, data):
        n = data.draw(st.integers(2, 6))
        pairs = list(itertools.combinations(range(n), 2))
        a, b, c = (Support(n, data.draw(st.lists(st.sampled_from(pairs), unique=True)))
                   for _ in range(3))
        assert support_error(a, b) == support_error(b, a)
        assert support_error(a, c) <= support_error(a, b) + support_error(b, c)


class TestInducedSubgraph:
    def test_tail_of_kite_is_triangle(self):
        sub, _ = induced_subgraph(make_kite(5), [2, 3, 4])
        assert sub == make_kite(3)

    def test_head_is_single_edge(self):
        sub, _ = induced_subgraph(make_kite(5), [0, 1])
        assert sub.edges == ((0, 1),)

    @given(supports())
    def test_full_vertex_set_is_identity(self, s):
        sub, relabel = induced_subgraph(s, range(s.n_vertices))
        assert sub == s and all(k == v for k, v in relabel.items())


class TestSpanningKite:
    @pytest.mark.parametrize("n", range(3, 13))
    def test_kite_contains_itself(self, n):
        assert contains_spanning_kite(make_kite(n)) is True

    def test_star_has_none(self):
        assert contains_spanning_kite(make_star(4)) is False

    def test_complete_graph(self):
        assert contains_spanning_kite(make_complete(4)) is True

    def test_complete_graph_matches_enumeration(self):
        # brute force over every ordering of four vertices
        s = make_complete(4)
        kite = make_kite(4)
        found = any(all(s.__contains__(tuple(sorted((p[i], p[j])))) for i, j in kite.edges)
                    for p in itertools.permutations(range(4)))
        assert found

    def test_ordering_is_an_embedding(self):
        s = fifteen_vertex_benchmark()
        status, order = find_spanning_kite(s)
        if status:
            for i, j in make_kite(15).edges:
                assert tuple(sorted((order[i], order[j]))) in s

    def test_budget_gives_undecided(self):
        # triangles sharing one hub: many partial embeddings, no spanning one
        windmill = Support(11, [e for k in range(5) for e in
                                ((0, 2 * k + 1), (0, 2 * k + 2), (2 * k + 1, 2 * k + 2))])
        assert find_spanning_kite(windmill, budget=3)[0] is None
        assert find_spanning_kite(windmill)[0] is False


class TestEdgeListFormat:
    def test_roundtrip(self, tmp_path):
        s = fifteen_vertex_benchmark()
        write_edge_list(s, tmp_path / "g.txt")
        assert read_edge_list(tmp_path / "g.txt") == s

    def test_comments_and_blank_lines(self):
        s = parse_edge_list("# kite\nn=3\n\n1 2  # first\n2 3\n1 3\n")
        assert s == make_kite(3)

    def test_bad_token_reports_line(self):
        with pytest.raises(ParseError, match="line 3"):
            parse_edge_list("n=3\n1 2\n1 x\n")

    def test_missing_header(self):
        with pytest.raises(ParseError):
            parse_edge_list("1 2\n")

    def test_out_of_range(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_edge_list("n=3\n1 4\n")

    def test_format_starts_with_header(self):
        assert format_edge_list(make_kite(3)).splitlines()[0] == "n=3"


class TestForbiddenSet:
    def test_diagonal(self):
        f = ForbiddenSet.diagonal(3)
        assert f.is_diagonal and len(f.free_pairs()) == 3
        assert not f.free_pairs().loops

    def test_must_be_symmetric(self):
        with pytest.raises(InvalidArgument):
            ForbiddenSet(3, [(0, 1)])

    def test_symmetric_constructor_frees_diagonal(self):
        f = ForbiddenSet.symmetric(3, [(0, 1)])
        free = f.free_pairs()
        assert free.loops and (0, 0) in free and (0, 1) not in free
        assert not f.allows(Support(3, [(0, 1)]))

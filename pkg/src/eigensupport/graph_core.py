"""Supports (edge sets), forbidden sets, random graphs and structural checks.

Vertices are 0-indexed in memory. The edge-list text format is 1-indexed::

    n=5
    1 2
    2 3
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import as_generator
from .exceptions import InvalidArgument, ParseError

Edge = tuple[int, int]


def _normalize_edge(i, j):
    i, j = int(i), int(j)
    return (i, j) if i <= j else (j, i)


@dataclass(frozen=True)
class Support:
    """A symmetric set of index pairs on ``n_vertices`` vertices.

    ``edges`` holds unordered pairs ``(i, j)`` with ``i <= j``, sorted. Diagonal
    pairs ``(i, i)`` are only accepted when ``loops`` is true.
    """

    n_vertices: int
    edges: tuple[Edge, ...]
    loops: bool = False

    def __init__(self, n_vertices, edges=(), loops=False):
        n = int(n_vertices)
        if n < 1:
            raise InvalidArgument(f"n_vertices must be positive, got {n_vertices}")
        normed = set()
        for e in edges:
            i, j = _normalize_edge(*e)
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidArgument(f"edge {e} out of range for n={n}")
            if i == j and not loops:
                raise InvalidArgument(f"self-loop {e} in a support without loops")
            normed.add((i, j))
        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "edges", tuple(sorted(normed)))
        object.__setattr__(self, "loops", bool(loops))

    @classmethod
    def from_one_based(cls, n_vertices, edges, loops=False):
        return cls(n_vertices, [(i - 1, j - 1) for i, j in edges], loops=loops)

    @classmethod
    def from_matrix(cls, a, tol=0.0, loops=False):
        """Support of a symmetric matrix: pairs with ``|a_ij| > tol``."""
        a = np.asarray(a)
        n = a.shape[0]
        rows, cols = np.nonzero(np.abs(np.triu(a, 0 if loops else 1)) > tol)
        return cls(n, zip(rows.tolist(), cols.tolist()), loops=loops)

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def __contains__(self, edge):
        return _normalize_edge(*edge) in self.edge_set

    @property
    def edge_set(self):
        return frozenset(self.edges)

    @property
    def ordered_size(self):
        """Number of ordered matrix entries: two per edge, one per diagonal pair."""
        return sum(1 if i == j else 2 for i, j in self.edges)

    def one_based(self):
        return [(i + 1, j + 1) for i, j in self.edges]

    def adjacency(self, dtype=float):
        a = np.zeros((self.n_vertices, self.n_vertices), dtype=dtype)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def neighbors(self):
        nb = [set() for _ in range(self.n_vertices)]
        for i, j in self.edges:
            if i != j:
                nb[i].add(j)
                nb[j].add(i)
        return nb

    def degrees(self):
        return np.array([len(s) for s in self.neighbors()])

    def without(self, edge):
        e = _normalize_edge(*edge)
        return Support(self.n_vertices, [x for x in self.edges if x != e], loops=self.loops)

    def union(self, other):
        _check_same_n(self, other)
        return Support(self.n_vertices, self.edge_set | other.edge_set,
                       loops=self.loops or other.loops)

    def issubset(self, other):
        return self.edge_set <= other.edge_set

    def __repr__(self):
        return f"Support(n={self.n_vertices}, edges={self.one_based()} [1-based])"


@dataclass(frozen=True)
class ForbiddenSet:
    """Entries known to vanish in the target matrix.

    ``entries`` are ordered pairs and must be closed under transposition.
    """

    n_vertices: int
    entries: frozenset

    def __init__(self, n_vertices, entries=()):
        n = int(n_vertices)
        ents = frozenset((int(i), int(j)) for i, j in entries)
        for i, j in ents:
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidArgument(f"forbidden entry {(i, j)} out of range for n={n}")
            if (j, i) not in ents:
                raise InvalidArgument(f"forbidden set not symmetric: {(i, j)} without {(j, i)}")
        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "entries", ents)

    @classmethod
    def diagonal(cls, n):
        return cls(n, [(i, i) for i in range(n)])

    @classmethod
    def symmetric(cls, n, pairs):
        """Build from unordered pairs, adding both orientations."""
        ents = set()
        for i, j in pairs:
            ents.add((i, j))
            ents.add((j, i))
        return cls(n, ents)

    def __contains__(self, entry):
        return tuple(entry) in self.entries

    def __len__(self):
        return len(self.entries)

    @property
    def is_diagonal(self):
        return self.entries == frozenset((i, i) for i in range(self.n_vertices))

    def unordered(self):
        """Forbidden entries as sorted unordered pairs ``i <= j``."""
        return sorted({_normalize_edge(i, j) for i, j in self.entries})

    def free_pairs(self):
        """The complement of F as a support (all unordered pairs not forbidden)."""
        n = self.n_vertices
        pairs = [(i, j) for i in range(n) for j in range(i, n) if (i, j) not in self.entries]
        loops = any(i == j for i, j in pairs)
        return Support(n, pairs, loops=loops)

    def free_offdiagonal(self):
        n = self.n_vertices
        return Support(n, [(i, j) for i, j in itertools.combinations(range(n), 2)
                           if (i, j) not in self.entries])

    def allows(self, support):
        return not any((i, j) in self.entries for i, j in support.edges)


def _check_same_n(a, b):
    if a.n_vertices != b.n_vertices:
        raise InvalidArgument(
            f"supports live on different vertex sets ({a.n_vertices} vs {b.n_vertices})")


# -- constructors -----------------------------------------------------------

def make_kite(n):
    """Kite graph: the path 1-2-...-n plus the chord (n-2, n)."""
    if n < 3:
        raise InvalidArgument(f"a kite needs at least 3 vertices, got {n}")
    edges = [(k, k + 1) for k in range(n - 1)] + [(n - 3, n - 1)]
    return Support(n, edges)


def make_complete(n):
    return Support(n, itertools.combinations(range(n), 2))


def make_path(n):
    return Support(n, [(k, k + 1) for k in range(n - 1)])


def make_star(leaves):
    return Support(leaves + 1, [(0, k) for k in range(1, leaves + 1)])


# 15-vertex, 25-edge benchmark graph used for the larger recovery study.
_FIFTEEN_VERTEX_CHAINS = (
    (1, 2, 3, 4, 5, 9, 8, 7, 6, 1),
    (9, 12, 14, 15, 13, 10, 11, 12),
    (9, 4),
    (6, 10),
    (12, 8, 3, 11, 7, 2),
    (13, 14, 11),
)


def fifteen_vertex_benchmark():
    edges = set()
    for chain in _FIFTEEN_VERTEX_CHAINS:
        for a, b in zip(chain, chain[1:]):
            edges.add(_normalize_edge(a - 1, b - 1))
    return Support(15, edges)


def sample_erdos_renyi(n, p, seed=None):
    """G(n, p): each unordered pair kept independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidArgument(f"edge probability must lie in [0, 1], got {p}")
    rng = as_generator(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Support(n, zip(iu[keep].tolist(), ju[keep].tolist()))


# -- metrics and structure --------------------------------------------------

def support_error(estimated, truth):
    """Size of the symmetric difference, counted in unordered edges."""
    _check_same_n(estimated, truth)
    return len(estimated.edge_set ^ truth.edge_set)


def induced_subgraph(s, vertices):
    """Restrict ``s`` to ``vertices`` and relabel them ``0..k-1`` in sorted order.

    Returns the induced support and the ``old -> new`` label map.
    """
    vs = sorted(set(int(v) for v in vertices))
    for v in vs:
        if not 0 <= v < s.n_vertices:
            raise InvalidArgument(f"vertex {v} out of range for n={s.n_vertices}")
    if not vs:
        raise InvalidArgument("cannot induce a subgraph on an empty vertex set")
    relabel = {v: k for k, v in enumerate(vs)}
    edges = [(relabel[i], relabel[j]) for i, j in s.edges if i in relabel and j in relabel]
    return Support(len(vs), edges, loops=s.loops), relabel


def find_spanning_kite(s, budget=1_000_000):
    """Search a vertex ordering embedding the kite on all vertices of ``s``.

    Returns ``(status, ordering)`` where status is True (found), False
    (exhausted) or None (aborted after ``budget`` search nodes). ``ordering[k]``
    is the vertex playing kite position ``k``.
    """
    n = s.n_vertices
    if n < 3:
        return False, None
    nb = s.neighbors()
    nodes = 0

    def remaining_connected(start, unvisited):
        # all unvisited vertices must be reachable from the path end through unvisited ones
        if not unvisited:
            return True
        seen = {start}
        stack = [start]
        hit = 0
        while stack:
            u = stack.pop()
            for w in nb[u]:
                if w in unvisited and w not in seen:
                    seen.add(w)
                    hit += 1
                    stack.append(w)
        return hit == len(unvisited)

    def extend(path, unvisited):
        # the path is built backwards from the triangle: path[-1] is the current head
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            raise _Abort
        if not unvisited:
            return path
        head = path[-1]
        if not remaining_connected(head, unvisited):
            return None
        for w in sorted(nb[head] & unvisited, key=lambda x: len(nb[x] & unvisited)):
            unvisited.remove(w)
            path.append(w)
            got = extend(path, unvisited)
            if got is not None:
                return got
            path.pop()
            unvisited.add(w)
        return None

    try:
        for a in range(n):
            for b in nb[a]:
                for c in nb[b]:
                    if c == a or c not in nb[a] or b > c:
                        continue
                    # b and c are interchangeable in the tail triangle
                    unvisited = set(range(n)) - {a, b, c}
                    got = extend([a], unvisited)
                    if got is not None:
                        order = list(reversed(got)) + [b, c]
                        return True, order
    except _Abort:
        return None, None
    return False, None


class _Abort(Exception):
    pass


def contains_spanning_kite(s, budget=1_000_000):
    """True/False, or None when the search was inconclusive within ``budget`` nodes."""
    return find_spanning_kite(s, budget)[0]


# -- edge-list text format --------------------------------------------------

def format_edge_list(s):
    lines = [f"n={s.n_vertices}"]
    lines += [f"{i} {j}" for i, j in s.one_based()]
    return "\n".join(lines) + "\n"


def parse_edge_list(text, loops=False):
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if n is None:
            if not line.startswith("n="):
                raise ParseError(f"expected header 'n=<N>', got {raw!r}", lineno)
            try:
                n = int(line[2:])
            except ValueError:
                raise ParseError(f"bad vertex count {line[2:]!r}", lineno) from None
            if n < 1:
                raise ParseError(f"vertex count must be positive, got {n}", lineno)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'i j', got {raw!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer vertex in {raw!r}", lineno) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise ParseError(f"vertex out of range 1..{n} in {raw!r}", lineno)
        if i == j and not loops:
            raise ParseError(f"self-loop {raw!r}", lineno)
        edges.append((i - 1, j - 1))
    if n is None:
        raise ParseError("missing header 'n=<N>'", 1)
    return Support(n, edges, loops=loops)


def write_edge_list(s, path):
    Path(path).write_text(format_edge_list(s))


def read_edge_list(path, loops=False):
    return parse_edge_list(Path(path).read_text(), loops=loops)


def max_edges(n):
    return math.comb(n, 2)

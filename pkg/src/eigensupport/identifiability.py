"""Deciding whether a support pins down its matrix up to scale.

A support ``S`` is identifiable against a forbidden set ``F`` when, for a
generic symmetric ``A`` supported on ``S``, the only symmetric matrices
supported off ``F`` that commute with ``A`` are the multiples of ``A``. The
property is generic, so one random draw decides it almost surely; we take a
majority vote over a few draws.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import as_generator, spawn
from .exceptions import BudgetExceeded, InvalidArgument
from .graph_core import (ForbiddenSet, Support, find_spanning_kite, induced_subgraph,
                         sample_erdos_renyi)
from .spectral_ops import commutator_operator, eigen_clusters, vec_index

NULL_TOL = 1e-8
INVERTIBILITY_TOL = 1e-10
_PRIME = (1 << 61) - 1


@dataclass
class IdentifiabilityVerdict:
    identifiable: bool
    method: str
    witness: object = None
    nullity: int | None = None
    structural: str | None = None

    def to_dict(self):
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        elif isinstance(w, (list, tuple)):
            w = [sorted(int(v) + 1 for v in x) if isinstance(x, (set, frozenset, list, tuple))
                 else int(x) + 1 for x in w]
        return {"identifiable": self.identifiable, "method": self.method,
                "nullity": self.nullity, "structural": self.structural, "witness": w}


def random_matrix_on(s, rng, integer=False):
    """Generic symmetric matrix supported on ``s``: i.i.d. entries on the edges."""
    n = s.n_vertices
    if integer:
        a = np.zeros((n, n), dtype=object)
        for i, j in s.edges:
            a[i, j] = a[j, i] = int(rng.integers(1, _PRIME))
        return a
    a = np.zeros((n, n))
    if s.edges:
        ii, jj = np.array(s.edges).T
        vals = rng.standard_normal(len(ii))
        a[ii, jj] = vals
        a[jj, ii] = vals
    return a


def _numerical_rank(m, tol=NULL_TOL):
    if min(m.shape) == 0:
        return 0
    sv = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0


def _null_basis(m, rank):
    if m.shape[0] == 0:
        return np.eye(m.shape[1])
    _, _, vt = np.linalg.svd(m, full_matrices=True)
    return vt[rank:].T


def _cluster_params(u):
    """Index pairs ``p <= q`` parametrizing symmetric blocks on one eigenspace."""
    m = u.shape[1]
    return np.triu_indices(m)


def _commutant_rows(clusters, ii, jj):
    """Entries ``(ii, jj)`` of each orthonormal commutant basis matrix.

    The basis consists of ``U E_pq U^T`` symmetrized (scaled by ``1/sqrt 2``
    off the diagonal) for every eigenvector cluster ``U``.
    """
    blocks = []
    for u in clusters:
        p, q = _cluster_params(u)
        x = u[ii][:, p] * u[jj][:, q] + u[ii][:, q] * u[jj][:, p]
        x *= np.where(p == q, 0.5, 1 / math.sqrt(2))
        blocks.append(x)
    return np.hstack(blocks) if blocks else np.zeros((len(ii), 0))


def _null_commuting(a, forbidden, method):
    """Nullity of the commuting symmetric B vanishing on F.

    Also returns a thunk giving ``(frame, coeffs)`` whose product spans the
    null space in vectorized form; it is only evaluated when a witness is wanted.
    """
    n = a.shape[0]
    if method == "commutant":
        clusters = [u for _, u in eigen_clusters(a)]
        rows = forbidden.unordered()
        ii = np.array([i for i, _ in rows], dtype=int)
        jj = np.array([j for _, j in rows], dtype=int)
        cons = _commutant_rows(clusters, ii, jj)
        frame = _LazyFrame(clusters, n)
    elif method == "operator":
        free = forbidden.free_pairs()
        b = np.zeros((n * n, len(free)))
        for c, (i, j) in enumerate(free.edges):
            if i == j:
                b[vec_index(i, i, n), c] = 1.0
            else:
                b[vec_index(i, j, n), c] = b[vec_index(j, i, n), c] = 1 / math.sqrt(2)
        cons = commutator_operator(a) @ b
        frame = b
    else:
        raise InvalidArgument(f"unknown kernel method {method!r}")
    rank = _numerical_rank(cons)
    return cons.shape[1] - rank, lambda: (frame, _null_basis(cons, rank))


class _LazyFrame:
    """Stand-in for the N^2 x d commutant basis, materialized on first use."""

    def __init__(self, clusters, n):
        self.clusters = clusters
        self.n = n

    def __matmul__(self, coeffs):
        ii, jj = np.indices((self.n, self.n))
        full = _commutant_rows(self.clusters, ii.ravel(), jj.ravel())
        return full @ coeffs


def _non_collinear_witness(a, span):
    """A member of the span orthogonal to ``a``, normalized, or None."""
    frame, coeffs = span()
    if coeffs.shape[1] == 0:
        return None
    na = np.linalg.norm(a)
    # both vec layouts agree here since every member is symmetric
    flat = frame @ coeffs
    if na > 0:
        unit = a.ravel() / na
        flat = flat - np.outer(unit, unit @ flat)
    norms = np.linalg.norm(flat, axis=0)
    k = int(np.argmax(norms))
    if norms[k] < 1e-8:
        return None
    b = (flat[:, k] / norms[k]).reshape(a.shape)
    return (b + b.T) / 2


def kernel_identifiability_test(s, forbidden=None, trials=3, seed=None, method="commutant",
                                witness=True):
    """Identifiability of ``s`` by the dimension of the commuting subspace.

    ``method="commutant"`` parametrizes the commutant through the eigenvectors
    of a generic draw (cheap, fine for N in the hundreds); ``"operator"`` takes
    the kernel of the dense commutator operator restricted to free entries.
    When ``witness`` is set, a negative verdict carries a commuting matrix
    vanishing on ``F`` that is orthogonal to the generic draw.
    """
    n = s.n_vertices
    if forbidden is None:
        forbidden = ForbiddenSet.diagonal(n)
    if not forbidden.allows(s):
        raise InvalidArgument("support intersects the forbidden set")
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    rng = as_generator(seed)
    votes = []
    for _ in range(trials):
        a = random_matrix_on(s, rng)
        nullity, span = _null_commuting(a, forbidden, method)
        votes.append((nullity == 1 and bool(s.edges), nullity, a, span))
    yes = sum(v[0] for v in votes)
    identifiable = yes * 2 > trials
    nullity = Counter(v[1] for v in votes).most_common(1)[0][0]
    found = None
    if witness and not identifiable:
        for ok, _, a, span in votes:
            if not ok:
                found = _non_collinear_witness(a, span)
                if found is not None:
                    break
    return IdentifiabilityVerdict(identifiable, "kernel_test", found, nullity)


# -- invertibility ----------------------------------------------------------

def _det_mod_prime(a):
    n = a.shape[0]
    m = [[int(a[i, j]) % _PRIME for j in range(n)] for i in range(n)]
    det = 1
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c]), None)
        if piv is None:
            return 0
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det = det * m[c][c] % _PRIME
        inv = pow(m[c][c], _PRIME - 2, _PRIME)
        for r in range(c + 1, n):
            if m[r][c]:
                f = m[r][c] * inv % _PRIME
                m[r] = [(x - f * y) % _PRIME for x, y in zip(m[r], m[c])]
    return det % _PRIME


def generic_invertibility(s, trials=3, seed=None, exact=False, tol=INVERTIBILITY_TOL):
    """Whether a generic matrix supported on ``s`` is invertible.

    One invertible draw is a certificate. Floating-point mode accepts a draw
    when ``sigma_min > tol * sigma_max``; ``exact=True`` uses random residues
    and a determinant over GF(2^61 - 1).
    """
    if not s.edges:
        return False
    rng = as_generator(seed)
    for _ in range(trials):
        if exact:
            if _det_mod_prime(random_matrix_on(s, rng, integer=True)) != 0:
                return True
        else:
            sv = np.linalg.svd(random_matrix_on(s, rng), compute_uv=False)
            if sv[-1] > tol * sv[0]:
                return True
    return False


class _Invertibility:
    """Memoized invertibility of induced subgraphs, with a call budget."""

    def __init__(self, s, seed, budget, exact=False):
        self.s = s
        self.rng = as_generator(seed)
        self.budget = budget
        self.exact = exact
        self.cache = {}

    def __call__(self, vertices):
        key = frozenset(vertices)
        if key not in self.cache:
            if len(self.cache) >= self.budget:
                raise BudgetExceeded(f"more than {self.budget} invertibility checks")
            sub, _ = induced_subgraph(self.s, key)
            self.cache[key] = generic_invertibility(sub, trials=2, seed=self.rng, exact=self.exact)
        return self.cache[key]


def sufficient_condition_nested(s, seed=None, budget=100_000, exact=False):
    """Search nested vertex sets ``V_{N-1} > ... > V_2`` with invertible induced graphs.

    Vertices are dropped one at a time (smallest label first, backtracking on
    failure). Returns the list of dropped vertices, in order, or None when no
    chain exists. A chain certifies identifiability against the diagonal: a
    single edge is identifiable and invertible, and identifiability lifts from
    an invertible identifiable ``N-1`` vertex subgraph to the whole graph. For
    ``N >= 4`` this is the same as asking for invertible ``V_3, ..., V_{N-1}``
    since an invertible 3-vertex graph is a triangle.
    """
    n = s.n_vertices
    if n < 2 or not s.edges:
        return None
    if n == 2:
        return []
    inv = _Invertibility(s, seed, budget, exact)
    dead = set()

    def descend(current, dropped):
        if len(current) == 2:
            return list(dropped)
        if current in dead:
            return None
        for v in sorted(current):
            nxt = current - {v}
            if nxt in dead or not inv(nxt):
                continue
            dropped.append(v)
            got = descend(nxt, dropped)
            if got is not None:
                return got
            dropped.pop()
        dead.add(current)
        return None

    return descend(frozenset(range(n)), [])


def nested_chain(n, dropped):
    """Vertex sets ``V_{N-1}, V_{N-2}, ...`` implied by a drop order."""
    current = set(range(n))
    chain = []
    for v in dropped:
        current.discard(v)
        chain.append(frozenset(current))
    return chain


def generic_distinct_eigenvalues(s, trials=3, seed=None):
    """Number of distinct eigenvalues of a generic matrix supported on ``s``."""
    rng = as_generator(seed)
    return max(len(eigen_clusters(random_matrix_on(s, rng))) for _ in range(trials))


def necessary_condition_check(s, seed=None, exhaustive_cap=100_000, samples=10_000):
    """False only when some size ``k`` has no invertible induced graph.

    Sizes range over ``3 <= k < min(N, d)``, with ``d`` the number of distinct
    eigenvalues of a generic draw: when every size-``k`` induced graph is
    singular, the degree-``k`` commuting polynomial ``M_k(A)`` has zero
    diagonal, and it can only be a multiple of ``A`` if ``k >= d``. Sizes with
    more than ``exhaustive_cap`` subsets are probed with ``samples`` random
    subsets and conservatively counted as passing.
    """
    n = s.n_vertices
    rng = as_generator(seed)
    top = min(n, generic_distinct_eigenvalues(s, seed=rng)) if s.edges else n
    inv = _Invertibility(s, rng, budget=math.inf)
    for k in range(3, top):
        total = math.comb(n, k)
        if total <= exhaustive_cap:
            if not any(inv(c) for c in itertools.combinations(range(n), k)):
                return False
        else:
            for _ in range(samples):
                if inv(rng.choice(n, size=k, replace=False).tolist()):
                    break
    return True


def identify(s, forbidden=None, trials=3, seed=None, kite_budget=200_000, nested_budget=20_000):
    """Structural shortcuts first, then the kernel test as the deciding step."""
    n = s.n_vertices
    if forbidden is None:
        forbidden = ForbiddenSet.diagonal(n)
    if not forbidden.is_diagonal:
        return kernel_identifiability_test(s, forbidden, trials, seed)
    rng = as_generator(seed)
    status, order = find_spanning_kite(s, budget=kite_budget)
    if status:
        return IdentifiabilityVerdict(True, "kite_cover", order, structural="sufficient")
    try:
        dropped = sufficient_condition_nested(s, rng, budget=nested_budget)
    except BudgetExceeded:
        dropped = None
    if dropped is not None:
        return IdentifiabilityVerdict(True, "nested_invertible", dropped, structural="sufficient")
    if not necessary_condition_check(s, rng):
        return IdentifiabilityVerdict(False, "necessary_violation", structural="necessary-fails")
    verdict = kernel_identifiability_test(s, forbidden, trials, rng)
    verdict.structural = "undecided-by-structure"
    return verdict


# -- phase transition -------------------------------------------------------

@dataclass
class PhaseTransitionReport:
    n: int
    p_grid: list
    di_frequency: list
    trials: int
    seed: object = None
    extra: dict = field(default_factory=dict)

    def rows(self):
        return [(p, f, self.trials) for p, f in zip(self.p_grid, self.di_frequency)]

    def write(self, path):
        """CSV ``p,frequency,trials`` plus a ``.json`` sidecar holding n and seed."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "frequency", "trials"])
            for p, f, t in self.rows():
                w.writerow([repr(float(p)), repr(float(f)), t])
        side = {"n": self.n, "seed": self.seed, "trials": self.trials, **self.extra}
        path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        side = json.loads(path.with_suffix(".json").read_text())
        return cls(side["n"], [float(r["p"]) for r in rows],
                   [float(r["frequency"]) for r in rows], side["trials"], side.get("seed"))


def _phase_trial(args):
    n, p, child = args
    rng = np.random.default_rng(child)
    s = sample_erdos_renyi(n, p, rng)
    return kernel_identifiability_test(s, trials=3, seed=rng, witness=False).identifiable


def run_phase_transition(n, p_grid, trials, seed=None, jobs=1):
    """Identifiability frequency of G(n, p) over a grid of edge probabilities."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    p_grid = [float(p) for p in p_grid]
    children = spawn(seed, len(p_grid))
    tasks = [(n, p, c) for p, ch in zip(p_grid, children) for c in ch.spawn(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            hits = list(ex.map(_phase_trial, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        hits = [_phase_trial(t) for t in tasks]
    freq = [sum(hits[k * trials:(k + 1) * trials]) / trials for k in range(len(p_grid))]
    return PhaseTransitionReport(n, p_grid, freq, trials,
                                 seed if isinstance(seed, (int, type(None))) else str(seed))

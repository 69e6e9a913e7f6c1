"""Symmetric linear algebra around the commutator ``A -> KA - AK``.

Matrices are plain ``numpy`` arrays. Vectorization is column-major
(``vec(A) = A.ravel(order="F")``) so that

    vec(KA - AK) = (I kron K - K kron I) vec(A).
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .exceptions import (BudgetExceeded, DomainError, InvalidArgument,
                         NonInjectiveSpectrum, ParseError)
from .graph_core import ForbiddenSet, Support


def vec(a):
    return np.asarray(a).ravel(order="F")


def unvec(v, n=None):
    v = np.asarray(v)
    if n is None:
        n = math.isqrt(v.size)
    return v.reshape((n, n), order="F")


def vec_index(i, j, n):
    return i + j * n


def as_symmetric(a, tol=1e-10):
    """Validate near-symmetry of ``a`` and return its exact symmetrization."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("matrix has non-finite entries")
    scale = max(1.0, np.abs(a).max(initial=0.0))
    if np.abs(a - a.T).max(initial=0.0) > tol * scale:
        raise InvalidArgument("matrix is not symmetric")
    return (a + a.T) / 2


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return (a + a.T) / 2


def commutation_matrix(n):
    """Permutation ``T`` with ``T vec(A) = vec(A^T)``."""
    idx = np.arange(n * n).reshape((n, n), order="F")
    t = np.zeros((n * n, n * n))
    t[idx.ravel(order="F"), idx.T.ravel(order="F")] = 1.0
    return t


# -- spectral functions -----------------------------------------------------

@dataclass(frozen=True)
class SpectralFunction:
    """A scalar function applied to the spectrum of a symmetric matrix.

    ``kind`` is one of ``exp``, ``inverse``, ``inverse_square_shift``
    (``t -> (1 - t)**-2``), ``polynomial`` (ascending ``coeffs``),
    ``matrix_power_mixture`` (``t -> sum_k weights[k] * t**k``, i.e. the
    generating function of a gap law) or ``scaled_exp`` (``t -> exp(scale*t)``).
    """

    kind: str
    coeffs: tuple = ()
    scale: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "exp":
            return np.exp(t)
        if self.kind == "scaled_exp":
            return np.exp(self.scale * t)
        if self.kind == "inverse":
            if np.any(t == 0):
                raise DomainError("1/t is undefined at a zero eigenvalue")
            return 1.0 / t
        if self.kind == "inverse_square_shift":
            if np.any(t == 1):
                raise DomainError("(1 - t)^-2 is undefined at t = 1")
            return (1.0 - t) ** -2
        if self.kind in ("polynomial", "matrix_power_mixture"):
            return np.polynomial.polynomial.polyval(t, np.asarray(self.coeffs, dtype=float))
        raise InvalidArgument(f"unknown spectral function kind {self.kind!r}")

    @classmethod
    def exp(cls):
        return cls("exp")

    @classmethod
    def inverse(cls):
        return cls("inverse")

    @classmethod
    def inverse_square_shift(cls):
        return cls("inverse_square_shift")

    @classmethod
    def polynomial(cls, coeffs):
        return cls("polynomial", tuple(float(c) for c in coeffs))

    @classmethod
    def power_mixture(cls, weights):
        return cls("matrix_power_mixture", tuple(float(w) for w in weights))

    @classmethod
    def parse(cls, name):
        """Parse a command-line name: ``exp``, ``inverse``, ``inv-square``."""
        table = {"exp": cls.exp, "inverse": cls.inverse,
                 "inv-square": cls.inverse_square_shift,
                 "inverse_square_shift": cls.inverse_square_shift}
        try:
            return table[name]()
        except KeyError:
            raise InvalidArgument(f"unknown spectral function {name!r}") from None


def _cluster_sorted(values, tol):
    """Group sorted values into runs whose consecutive gaps are <= tol."""
    groups = [[0]]
    for k in range(1, len(values)):
        if values[k] - values[k - 1] <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def apply_spectral_function(w, f, tol=None):
    """Return ``U f(D) U^T`` for ``w = U D U^T``.

    Raises ``NonInjectiveSpectrum`` when two eigenvalues that are distinct
    (beyond ``tol``) are mapped to values closer than ``tol``.
    """
    w = as_symmetric(w)
    d, u = np.linalg.eigh(w)
    fd = np.asarray(f(d), dtype=float)
    if not np.all(np.isfinite(fd)):
        raise DomainError(f"{f.kind} is not finite on the spectrum")
    if tol is None:
        tol = 1e-10 * max(1.0, np.abs(d).max(initial=0.0))
    ftol = 1e-10 * max(1.0, np.abs(fd).max(initial=0.0))
    for a, b in itertools.combinations(range(len(d)), 2):
        if abs(d[a] - d[b]) > tol and abs(fd[a] - fd[b]) <= ftol:
            raise NonInjectiveSpectrum(
                f"eigenvalues {d[a]:.6g} and {d[b]:.6g} share the image {fd[a]:.6g}")
    return symmetrize((u * fd) @ u.T)


def min_spectral_gap(values):
    v = np.sort(np.asarray(values, dtype=float))
    return float(np.diff(v).min()) if v.size > 1 else math.inf


# -- commutator -------------------------------------------------------------

def commutator_operator(k):
    """Dense ``N^2 x N^2`` matrix ``I kron K - K kron I``."""
    k = np.asarray(k, dtype=float)
    eye = np.eye(k.shape[0])
    return np.kron(eye, k) - np.kron(k, eye)


build_commutator_operator = commutator_operator


def commutator(a, k):
    """Matrix-free ``KA - AK``."""
    return k @ a - a @ k


def contrast(a, k_hat):
    """Scale-invariant commutator norm ``||A K - K A||_F / ||A||_F``."""
    a = np.asarray(a, dtype=float)
    na = np.linalg.norm(a)
    if na == 0:
        raise InvalidArgument("contrast is undefined for the zero matrix")
    return float(np.linalg.norm(a @ k_hat - k_hat @ a) / na)


# -- support bases ----------------------------------------------------------

def entry_indicator(edge, n):
    """Vectorized symmetric indicator of an unordered pair."""
    i, j = edge
    e = np.zeros(n * n)
    e[vec_index(i, j, n)] = 1.0
    e[vec_index(j, i, n)] = 1.0
    return e


def orthonormal_support_basis(s, include_diagonal=False):
    """Orthonormal basis (columns) of ``{vec(A): A = A^T, Supp(A) in S}``."""
    n = s.n_vertices
    pairs = list(s.edges)
    if include_diagonal:
        pairs = sorted(set(pairs) | {(i, i) for i in range(n)})
    b = np.zeros((n * n, len(pairs)))
    for c, (i, j) in enumerate(pairs):
        if i == j:
            b[vec_index(i, i, n), c] = 1.0
        else:
            b[vec_index(i, j, n), c] = b[vec_index(j, i, n), c] = 1 / math.sqrt(2)
    return b


@dataclass
class SupportBasis:
    """Affine chart ``a0 - phi @ beta`` of the normalized matrices on a support."""

    support: Support
    forbidden: ForbiddenSet
    v: np.ndarray
    anchor_edge: tuple
    anchor: np.ndarray
    phi: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def d(self):
        return self.phi.shape[1]


def build_support_basis(s, forbidden=None, v=None, anchor_edge=None, rank_tol=1e-10):
    """Anchor ``a0`` and orthonormal basis ``phi`` of the linear space on ``s``.

    ``a0`` is the symmetric indicator of ``anchor_edge`` scaled so that
    ``v @ a0 == 1``; the remaining edges contribute ``indicator/(v-sum) - a0``
    before orthonormalization (pivoted QR, relative tolerance ``rank_tol``).
    """
    n = s.n_vertices
    if len(s) == 0:
        raise InvalidArgument("cannot build a basis on an empty support")
    if forbidden is None:
        forbidden = ForbiddenSet.diagonal(n)
    if not forbidden.allows(s):
        raise InvalidArgument("support intersects the forbidden set")
    v = np.ones(n * n) if v is None else np.asarray(v, dtype=float)
    scaled = {}
    for e in s.edges:
        ind = entry_indicator(e, n)
        vs = float(v @ ind)
        if abs(vs) > 1e-12:
            scaled[e] = ind / vs
    if not scaled:
        raise InvalidArgument("no edge of the support has a nonzero v-sum")
    if anchor_edge is None:
        anchor_edge = min(scaled)
    anchor_edge = tuple(sorted(anchor_edge))
    if anchor_edge not in scaled:
        raise InvalidArgument(f"anchor edge {anchor_edge} not usable for this support")
    a0 = scaled[anchor_edge]
    others = [e for e in s.edges if e != anchor_edge]
    cols = []
    for e in others:
        if e in scaled:
            cols.append(scaled[e] - a0)
        else:
            # zero v-sum: the raw indicator already lies in the linear space
            cols.append(entry_indicator(e, n))
    if cols:
        raw = np.column_stack(cols)
        q, r, _ = scipy.linalg.qr(raw, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > rank_tol * diag.max()))
        phi = q[:, :rank]
    else:
        phi = np.zeros((n * n, 0))
    return SupportBasis(s, forbidden, v, anchor_edge, a0, phi)


# -- restricted singular values --------------------------------------------

def restricted_min_singular_value(delta, s, include_diagonal=False):
    """``min_{A in E(S), A != 0} ||KA - AK|| / ||A||`` for ``delta = Delta(K)``."""
    if len(s) == 0 and not include_diagonal:
        return math.inf
    b = orthonormal_support_basis(s, include_diagonal)
    return float(np.linalg.svd(delta @ b, compute_uv=False)[-1])


def _enumerate_supports(free_pairs, max_ordered, cap):
    weights = [1 if i == j else 2 for i, j in free_pairs]
    m = len(free_pairs)
    # count candidates first so the cap is enforced before any work
    max_k = m if max_ordered is None else min(m, max_ordered)
    total = sum(math.comb(m, k) for k in range(1, max_k + 1))
    if total > cap:
        raise BudgetExceeded(
            f"{total} candidate supports exceed the enumeration cap {cap} "
            f"(growth 2^{m} over {m} free entries)")
    for k in range(1, max_k + 1):
        for combo in itertools.combinations(range(m), k):
            if max_ordered is not None and sum(weights[c] for c in combo) > max_ordered:
                continue
            yield [free_pairs[c] for c in combo]


def c0_constant(k, s_star, forbidden=None, universe="free", cap=1_000_000, return_argmin=False):
    """Smallest restricted commutator singular value over competing supports.

    Minimum over nonempty supports ``S != S*`` with ordered size at most that of
    ``S*`` of ``min_{A in E(S)} ||AK - KA|| / ||A||``. ``universe="free"`` ranges
    over subsets of the complement of ``forbidden``; ``"all"`` over every pair.
    """
    n = s_star.n_vertices
    if forbidden is None:
        forbidden = ForbiddenSet.diagonal(n)
    if universe == "free":
        free = list(forbidden.free_pairs().edges)
    elif universe == "all":
        free = [(i, j) for i in range(n) for j in range(i, n)]
    else:
        raise InvalidArgument(f"unknown universe {universe!r}")
    delta = commutator_operator(k)
    target = s_star.edge_set
    best, arg = math.inf, None
    for edges in _enumerate_supports(free, s_star.ordered_size, cap):
        if frozenset(edges) == target:
            continue
        s = Support(n, edges, loops=True)
        val = restricted_min_singular_value(delta, s)
        if val < best:
            best, arg = val, s
    return (best, arg) if return_argmin else best


# -- characteristic polynomial ---------------------------------------------

def char_poly(a, method="faddeev"):
    """Coefficients ``psi_0..psi_N`` of ``det(zI - A) = sum_j psi_j z^j``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if method == "eig":
        # np.poly returns descending coefficients
        return np.real(np.poly(np.linalg.eigvals(a)))[::-1].copy()
    if method != "faddeev":
        raise InvalidArgument(f"unknown method {method!r}")
    psi = np.zeros(n + 1)
    psi[n] = 1.0
    m = np.zeros_like(a)
    eye = np.eye(n)
    for k in range(1, n + 1):
        m = a @ m + psi[n - k + 1] * eye
        psi[n - k] = -np.trace(a @ m) / k
    return psi


def m_k_matrix(a, k):
    """Polynomial in ``A`` whose diagonal collects size-``k`` principal minors.

    Returns ``sum_{j=0}^{k} c_j A^(k-j)`` with ``c_j`` the coefficient of
    ``z^(N-j)`` in ``det(zI - A)``. Its ``(i, i)`` entry equals ``(-1)^k`` times
    the sum of the size-``k`` principal minors of ``A`` avoiding vertex ``i``,
    it commutes with ``A``, and it vanishes for ``k = N`` (Cayley-Hamilton).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if not 0 <= k <= n:
        raise InvalidArgument(f"k must lie in [0, {n}], got {k}")
    psi = char_poly(a)
    out = np.zeros_like(a)
    # Horner: ((c_0 A + c_1 I) A + c_2 I) ...
    for j in range(k + 1):
        out = out @ a + psi[n - j] * np.eye(n)
    return out


def commutant_dimension(w, multiplicity_tol=None):
    """``sum_j l_j (l_j + 1) / 2`` over eigenvalue multiplicities ``l_j``."""
    w = as_symmetric(w)
    d = np.linalg.eigvalsh(w)
    if multiplicity_tol is None:
        multiplicity_tol = 1e-8 * max(np.linalg.norm(w), np.finfo(float).tiny)
    groups = _cluster_sorted(d, multiplicity_tol)
    return sum(len(g) * (len(g) + 1) // 2 for g in groups)


def eigen_clusters(a, tol=None):
    """Eigendecomposition with eigenvectors grouped by (near-)equal eigenvalue."""
    d, u = np.linalg.eigh(a)
    if tol is None:
        tol = 1e-8 * max(np.linalg.norm(a), np.finfo(float).tiny)
    return [(d[g].mean(), u[:, g]) for g in _cluster_sorted(d, tol)]


# -- matrix I/O -------------------------------------------------------------

def write_matrix_text(a, path):
    np.savetxt(path, np.asarray(a, dtype=float), fmt="%.17g")


def read_matrix_text(path):
    try:
        a = np.loadtxt(path, dtype=float, ndmin=2)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if a.shape[0] != a.shape[1]:
        raise ParseError(f"matrix is not square: shape {a.shape}")
    return a


_HEADER = struct.Struct("<Q")


def write_matrix_binary(a, path):
    """8-byte little-endian dimension header, then float64 LE row-major data."""
    a = np.ascontiguousarray(a, dtype="<f8")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument("only square matrices are supported")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(a.shape[0]))
        fh.write(a.tobytes(order="C"))


def read_matrix_binary(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError("file too short for the dimension header")
    (n,) = _HEADER.unpack_from(data)
    body = data[_HEADER.size:]
    if len(body) != 8 * n * n:
        raise ParseError(f"expected {8 * n * n} data bytes for n={n}, got {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape((n, n)).astype(float)

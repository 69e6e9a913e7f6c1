"""Support estimators built on the commutator contrast.

Everything here takes an estimate ``k_hat`` of the observed matrix and looks
for the sparsest symmetric matrix that (nearly) commutes with it. Supports are
:class:`~eigensupport.graph_core.Support` objects; matrix estimates are
normalized so that ``v @ vec(W) == 1`` (``v`` defaults to all ones).
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._rng import as_generator, spawn
from .exceptions import BudgetExceeded, InvalidArgument, NumericalDegeneracy
from .graph_core import ForbiddenSet, Support, support_error
from .spectral_ops import (build_support_basis, commutator_operator, contrast,
                           orthonormal_support_basis, unvec, vec_index)

RANK_TOL = 1e-10


# -- restricted least squares -----------------------------------------------

@dataclass
class RestrictedEstimate:
    support: Support
    w_hat: np.ndarray
    beta_hat: np.ndarray
    residual_contrast: float
    degenerate: bool = False
    basis: object = field(default=None, repr=False)
    # pseudo-inverse of the restricted design and the k_hat it was built from
    design_pinv: np.ndarray = field(default=None, repr=False)
    k_hat: np.ndarray = field(default=None, repr=False)


def _pinv_with_rank(design):
    """``pinv(design)`` (numpy's default cutoff) and whether it is rank deficient."""
    u, sv, vt = np.linalg.svd(design, full_matrices=False)
    degenerate = bool(sv[-1] <= RANK_TOL * max(sv[0], np.finfo(float).tiny))
    inv = np.where(sv > 1e-15 * sv[0], 1 / np.where(sv > 0, sv, 1), 0.0)
    return (vt.T * inv) @ u.T, degenerate


def estimate_restricted(k_hat, s, forbidden=None, v=None, anchor_edge=None, basis=None):
    """Least-squares commuting matrix on ``s``, normalized by ``v``.

    Minimizes ``||Delta(k_hat) a||`` over vectorized symmetric ``a`` supported
    on ``s`` with ``v @ a == 1``, using the min-norm pseudo-inverse solution
    in the chart ``a = a0 - phi @ beta``.
    """
    k_hat = np.asarray(k_hat, dtype=float)
    n = k_hat.shape[0]
    if basis is None:
        basis = build_support_basis(s, forbidden, v, anchor_edge)
    delta = commutator_operator(k_hat)
    design = delta @ basis.phi
    degenerate = False
    pinv = None
    if basis.d:
        pinv, degenerate = _pinv_with_rank(design)
        beta = pinv @ (delta @ basis.anchor)
    else:
        beta = np.zeros(0)
    w = unvec(basis.anchor - basis.phi @ beta, n)
    w = (w + w.T) / 2
    # drop round-off outside the support
    w *= s.adjacency()
    return RestrictedEstimate(s, w, beta, contrast(w, k_hat), degenerate, basis, pinv, k_hat)


def asymptotic_covariance(k_hat, estimate, sigma_hat, strict=True):
    """Plug-in covariance of ``sqrt(n) * beta_hat`` and per-edge variances.

    ``sigma_hat`` is the ``N^2 x N^2`` covariance of ``sqrt(n) vec(k_hat)``.
    Returns ``(omega, variances)`` where ``variances`` maps each edge of the
    support to the matching diagonal entry of ``phi @ omega @ phi.T``. With
    ``strict`` a variance below ``-1e-10`` (relative) raises; otherwise such
    values are passed through for the caller to handle.
    """
    basis = estimate.basis
    n = k_hat.shape[0]
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    if sigma_hat.shape != (n * n, n * n):
        raise InvalidArgument(f"sigma_hat must be {n * n}x{n * n}, got {sigma_hat.shape}")
    if basis.d == 0:
        return np.zeros((0, 0)), {e: 0.0 for e in estimate.support.edges}
    if estimate.design_pinv is not None and np.array_equal(estimate.k_hat, k_hat):
        proj = estimate.design_pinv
    else:
        proj = np.linalg.pinv(commutator_operator(k_hat) @ basis.phi)
    lead = proj @ commutator_operator(estimate.w_hat)
    omega = lead @ sigma_hat @ lead.T
    omega = (omega + omega.T) / 2
    edges = estimate.support.edges
    rows = basis.phi[[vec_index(i, j, n) for i, j in edges]] @ lead
    per_edge = np.sum((rows @ sigma_hat) * rows, axis=1)
    variances = {e: float(v) for e, v in zip(edges, per_edge)}
    if strict:
        tol = 1e-10 * max(1.0, max(abs(x) for x in variances.values()))
        bad = [e for e, x in variances.items() if x < -tol]
        if bad:
            raise NumericalDegeneracy(f"negative variance at edge {bad[0]}: {variances[bad[0]]:.3g}")
    return omega, variances


@dataclass
class SignificanceTable:
    entries: dict
    n: int

    def tau(self, edge):
        return self.entries[edge][2]

    def least_significant(self):
        """Edge with the smallest ``|tau|``, smallest edge first among ties."""
        return min(self.entries, key=lambda e: (abs(self.entries[e][2]), e))

    def as_rows(self):
        return [(e, *self.entries[e]) for e in sorted(self.entries)]


def tau_statistics(estimate, variances, n, degenerate="raise"):
    """``tau_ij = sqrt(n) * w_ij / sigma_ij`` for every edge of the support.

    ``degenerate="raise"`` rejects nonpositive variances; ``"inf"`` gives such
    edges ``tau = +inf`` so that they are never judged insignificant.
    """
    if n < 1:
        raise InvalidArgument("sample size must be at least 1")
    root_n = math.sqrt(n)
    entries = {}
    for e in estimate.support.edges:
        w = float(estimate.w_hat[e])
        var = variances[e]
        if var <= 0:
            if degenerate == "raise":
                raise NumericalDegeneracy(f"nonpositive variance {var:.3g} at edge {e}")
            entries[e] = (w, 0.0, math.inf)
        else:
            sd = math.sqrt(var)
            entries[e] = (w, sd, root_n * w / sd)
    return SignificanceTable(entries, n)


# -- backward elimination ---------------------------------------------------

@dataclass
class Trajectory:
    supports: list
    estimates: list
    contrasts: list
    removed_edges: list
    taus: list = field(default_factory=list)

    def __len__(self):
        return len(self.supports)

    def recontrast(self, k_hat):
        return [contrast(e.w_hat, k_hat) for e in self.estimates]

    def to_dict(self):
        return {
            "supports": [list(map(list, s.one_based())) for s in self.supports],
            "removed_edges": [[i + 1, j + 1] for i, j in self.removed_edges],
            "contrasts": [float(c) for c in self.contrasts],
            "taus": [[[i + 1, j + 1, _json_float(t[2])] for (i, j), t in sorted(tab.entries.items())]
                     for tab in self.taus],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self):
        """Flat ``step,removed_edge,contrast`` table (1-based edges)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "removed_edge", "contrast"])
        for k, c in enumerate(self.contrasts):
            rem = self.removed_edges[k] if k < len(self.removed_edges) else None
            w.writerow([k + 1, "" if rem is None else f"{rem[0] + 1}-{rem[1] + 1}", repr(float(c))])
        return buf.getvalue()


def _json_float(x):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def initial_support(forbidden):
    return forbidden.free_offdiagonal()


def backward_trajectory(k_hat_train, forbidden, n, sigma_hat, min_edges=1, k_hat_ref=None, v=None):
    """Greedy removal of the least significant edge, down to ``min_edges`` edges.

    Starts from every free off-diagonal pair. ``contrasts`` are measured
    against ``k_hat_ref`` (defaults to ``k_hat_train``). The walk also stops
    early if the restricted estimate becomes degenerate.
    """
    k_hat_train = np.asarray(k_hat_train, dtype=float)
    ref = k_hat_train if k_hat_ref is None else np.asarray(k_hat_ref, dtype=float)
    s = initial_support(forbidden)
    if len(s) == 0:
        raise InvalidArgument("no free off-diagonal pair to start from")
    traj = Trajectory([], [], [], [])
    while True:
        est = estimate_restricted(k_hat_train, s, forbidden, v)
        traj.supports.append(s)
        traj.estimates.append(est)
        traj.contrasts.append(contrast(est.w_hat, ref))
        if len(s) <= max(1, min_edges) or est.degenerate:
            break
        _, var = asymptotic_covariance(k_hat_train, est, sigma_hat, strict=False)
        table = tau_statistics(est, var, n, degenerate="inf")
        traj.taus.append(table)
        edge = table.least_significant()
        traj.removed_edges.append(edge)
        s = s.without(edge)
    return traj


def last_below_initial(contrasts):
    """Index of the last entry not exceeding the first one."""
    first = contrasts[0]
    return max(k for k, c in enumerate(contrasts) if c <= first)


def adaptive_stop(traj, k_hat_full):
    """Support at the last step whose contrast against ``k_hat_full`` is <= the first."""
    if not len(traj):
        raise InvalidArgument("empty trajectory")
    return traj.supports[last_below_initial(traj.recontrast(k_hat_full))]


# -- bagging ----------------------------------------------------------------

@dataclass
class BaggingResult:
    per_run: list          # (threshold, support, resample_count) per run
    retained: list
    final_support: Support
    resamples: int = 0

    def to_dict(self):
        return {
            "runs": [{"threshold": float(t), "support": list(map(list, s.one_based())),
                      "resamples": r} for t, s, r in self.per_run],
            "retained": [int(i) for i in self.retained],
            "final_support": list(map(list, self.final_support.one_based())),
            "resamples": self.resamples,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def retention_count(m_runs, q=None):
    if q is None:
        q = 2 / math.sqrt(m_runs)
    return min(m_runs, max(1, math.ceil(q * m_runs)))


def _bagging_run(args):
    data, forbidden, keep_prob, min_edges, k_hat_full, child = args
    rng = np.random.default_rng(child)
    resamples = 0
    while True:
        mask = rng.random(data.n_obs) < keep_prob
        if mask.sum() >= data.min_obs:
            break
        resamples += 1
    est = data.estimate(mask)
    traj = backward_trajectory(est.k_hat, forbidden, est.n, est.sigma_hat, min_edges,
                               k_hat_ref=k_hat_full)
    contrasts = traj.contrasts
    return contrasts[0], traj.supports[last_below_initial(contrasts)], resamples


def bagging_backward(data, forbidden, m_runs=100, keep_prob=0.5, retention_q=None, seed=None,
                     min_edges=1, k_hat_full=None, jobs=1):
    """Backward elimination over random half-samples with a self-calibrated stop.

    ``data`` must expose ``n_obs``, ``min_obs`` and ``estimate(mask)`` returning
    an object with ``k_hat``, ``sigma_hat`` and ``n``. Each run keeps every
    observation with probability ``keep_prob``, builds a trajectory on the
    subsample and stops at the last support whose contrast against the
    full-sample ``k_hat`` does not exceed the initial one. The runs with the
    smallest initial contrast are retained and the smallest of their supports
    (random among ties) is returned.
    """
    if m_runs < 1:
        raise InvalidArgument("m_runs must be at least 1")
    if not 0 < keep_prob < 1:
        raise InvalidArgument("keep_prob must lie strictly between 0 and 1")
    if k_hat_full is None:
        k_hat_full = data.estimate(None).k_hat
    children = spawn(seed, m_runs + 1)
    tasks = [(data, forbidden, keep_prob, min_edges, k_hat_full, c) for c in children[:-1]]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            runs = list(ex.map(_bagging_run, tasks))
    else:
        runs = [_bagging_run(t) for t in tasks]
    keep = retention_count(m_runs, retention_q)
    order = sorted(range(m_runs), key=lambda m: (runs[m][0], m))[:keep]
    smallest = min(len(runs[m][1]) for m in order)
    tied = [m for m in order if len(runs[m][1]) == smallest]
    pick = tied[int(np.random.default_rng(children[-1]).integers(len(tied)))]
    return BaggingResult(runs, sorted(order), runs[pick][1], sum(r[2] for r in runs))


# -- exhaustive l0 ----------------------------------------------------------

def _free_pairs(forbidden):
    fs = forbidden.free_pairs()
    return list(fs.edges), fs.loops


def _pair_frame(k_hat, pairs, v):
    """``Delta(k_hat) @ B`` over the orthonormal pair basis, and ``v @ B``."""
    n = k_hat.shape[0]
    b = orthonormal_support_basis(Support(n, pairs, loops=True))
    vv = np.ones(n * n) if v is None else np.asarray(v, dtype=float)
    return commutator_operator(k_hat) @ b, vv @ b


def _restricted_contrasts(m_full, c, combos, norm_scale=1.0):
    """Contrast of the affine restricted estimate for a batch of equal-size supports.

    ``m_full[:, combos]`` holds ``Delta(K) b_e`` for each chosen pair; the
    chart is ``x0 + Z y`` with ``c @ x = 1``, mirroring ``build_support_basis``.
    """
    cnt, k = combos.shape
    cs = c[combos]
    x0 = np.zeros((cnt, k))
    # anchor: first pair with a usable v-sum
    usable = np.abs(cs) > 1e-12
    anchor = np.argmax(usable, axis=1)
    rows = np.arange(cnt)
    x0[rows, anchor] = 1.0 / cs[rows, anchor]
    mats = m_full[:, combos].transpose(1, 0, 2)           # (cnt, N^2, k)
    if k == 1:
        resid = mats @ x0[:, :, None]
        return np.linalg.norm(resid[:, :, 0], axis=1) / np.linalg.norm(x0, axis=1)
    eye = np.broadcast_to(np.eye(k), (cnt, k, k))
    scaled = np.where(usable[:, None, :], eye / np.where(usable, cs, 1.0)[:, None, :], eye)
    z = scaled - np.where(usable[:, None, :], x0[:, :, None], 0.0)
    keep = np.ones((cnt, k), bool)
    keep[rows, anchor] = False
    z = z.transpose(0, 2, 1)[keep].reshape(cnt, k - 1, k).transpose(0, 2, 1)
    q, _ = np.linalg.qr(z)
    design = mats @ q
    target = mats @ x0[:, :, None]
    beta = np.linalg.pinv(design) @ target
    x = x0[:, :, None] - q @ beta
    resid = mats @ x
    return np.linalg.norm(resid[:, :, 0], axis=1) / np.linalg.norm(x[:, :, 0], axis=1)


@dataclass
class L0Path:
    """Best inner criterion per ordered support size."""

    sizes: np.ndarray
    values: np.ndarray
    supports: list

    def select(self, lam):
        scores = self.values + lam * self.sizes
        return self.supports[int(np.argmin(scores))]

    def breakpoints(self):
        """Penalties where the selected size can change, plus interval midpoints."""
        pts = set()
        for a, b in itertools.combinations(range(len(self.sizes)), 2):
            dp = self.sizes[b] - self.sizes[a]
            if dp:
                lam = (self.values[a] - self.values[b]) / dp
                if lam > 0:
                    pts.add(float(lam))
        pts = sorted(pts)
        if not pts:
            return [1.0]
        grid = [pts[0] / 2] + [(x + y) / 2 for x, y in zip(pts, pts[1:])] + [2 * pts[-1] + 1.0]
        return grid


def l0_path(k_hat, forbidden=None, max_size=None, criterion="min_singular", v=None,
            budget=1 << 15, penalty_counting="ordered"):
    """Enumerate every nonempty support of free pairs and keep the best per size.

    ``criterion="min_singular"`` scores ``S`` by the smallest singular value of
    the commutator restricted to matrices on ``S``; ``"restricted"`` scores it
    by the contrast of the normalized least-squares estimate on ``S``.
    """
    k_hat = np.asarray(k_hat, dtype=float)
    n = k_hat.shape[0]
    if forbidden is None:
        forbidden = ForbiddenSet.diagonal(n)
    pairs, loops = _free_pairs(forbidden)
    if not pairs:
        raise InvalidArgument("every entry is forbidden")
    total = 2 ** len(pairs) - 1
    if total > budget:
        raise BudgetExceeded(f"{total} candidate supports (2^{len(pairs)} - 1 over {len(pairs)} "
                             f"free pairs) exceed the budget {budget}")
    weights = np.array([1 if i == j or penalty_counting != "ordered" else 2 for i, j in pairs])
    m_full, c = _pair_frame(k_hat, pairs, v)
    best = {}
    for k in range(1, len(pairs) + 1):
        combos = np.array(list(itertools.combinations(range(len(pairs)), k)))
        sizes = weights[combos].sum(axis=1)
        if max_size is not None:
            ok = sizes <= max_size
            combos, sizes = combos[ok], sizes[ok]
            if not len(combos):
                continue
        if criterion == "min_singular":
            vals = np.linalg.svd(m_full[:, combos].transpose(1, 0, 2), compute_uv=False)[:, -1]
        elif criterion == "restricted":
            vals = _restricted_contrasts(m_full, c, combos)
        else:
            raise InvalidArgument(f"unknown criterion {criterion!r}")
        for size in np.unique(sizes):
            sel = np.flatnonzero(sizes == size)
            j = sel[int(np.argmin(vals[sel]))]
            if size not in best or vals[j] < best[size][0]:
                best[size] = (float(vals[j]), combos[j])
    sz = np.array(sorted(best))
    return L0Path(sz, np.array([best[s][0] for s in sz]),
                  [Support(n, [pairs[i] for i in best[s][1]], loops=loops) for s in sz])


def l0_estimate(k_hat, forbidden=None, lam=0.01, max_size=None, criterion="min_singular",
                v=None, budget=1 << 15):
    """Minimizer of ``criterion(S) + lam * |S|`` over nonempty supports of free pairs."""
    if lam <= 0:
        raise InvalidArgument("the penalty must be positive")
    return l0_path(k_hat, forbidden, max_size, criterion, v, budget).select(lam)


# -- thresholded least squares ---------------------------------------------

def full_estimate(k_hat, forbidden=None, v=None):
    k_hat = np.asarray(k_hat, dtype=float)
    if forbidden is None:
        forbidden = ForbiddenSet.diagonal(k_hat.shape[0])
    return estimate_restricted(k_hat, forbidden.free_pairs(), forbidden, v)


def l2_threshold_estimate(k_hat, forbidden=None, threshold=0.0, v=None, estimate=None):
    """Entries of the full-support estimate with ``|W_ij| > threshold``."""
    if estimate is None:
        estimate = full_estimate(k_hat, forbidden, v)
    s = estimate.support
    w = estimate.w_hat
    return Support(s.n_vertices, [e for e in s.edges if abs(w[e]) > threshold], loops=s.loops)


def l2_threshold_grid(estimate):
    """Thresholds covering every distinct outcome: 0, midpoints, and above the max."""
    vals = sorted({abs(float(estimate.w_hat[e])) for e in estimate.support.edges})
    if not vals:
        return [0.0]
    return [0.0] + [(a + b) / 2 for a, b in zip(vals, vals[1:])] + [vals[-1] * 2 + 1.0]


# -- oracle calibration -----------------------------------------------------

def oracle_calibrate(estimator, k_hat, truth, grid=None, forbidden=None, criterion="min_singular",
                     path=None, estimate=None):
    """Grid value minimizing the support error against ``truth``.

    ``estimator`` is ``"l0"`` (penalty grid) or ``"l2"`` (threshold grid). With
    ``grid=None`` an exact grid covering every reachable output is used.
    Returns ``(best_parameter, error)``; the first best value wins ties.
    """
    if estimator == "l0":
        if path is None:
            path = l0_path(k_hat, forbidden, criterion=criterion)
        grid = path.breakpoints() if grid is None else list(grid)
        run = path.select
    elif estimator == "l2":
        if estimate is None:
            estimate = full_estimate(k_hat, forbidden)
        grid = l2_threshold_grid(estimate) if grid is None else list(grid)

        def run(t):
            return l2_threshold_estimate(None, threshold=t, estimate=estimate)
    else:
        raise InvalidArgument(f"unknown estimator {estimator!r}")
    if not grid:
        raise InvalidArgument("empty grid")
    best = None
    for g in grid:
        err = support_error(run(g), truth)
        if best is None or err < best[1]:
            best = (g, err)
    return best

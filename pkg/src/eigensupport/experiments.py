"""Replicated recovery studies on the kite and the 15-vertex benchmark graph.

Each replication gets its own child seed split from the master seed, so
tables do not depend on how replications are scheduled across workers.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import spawn
from .data_models import gen_gaussian_covariance
from .estimators import (adaptive_stop, backward_trajectory, bagging_backward, full_estimate,
                         l0_path, oracle_calibrate)
from .exceptions import InvalidArgument
from .graph_core import ForbiddenSet, fifteen_vertex_benchmark, make_kite, support_error
from .identifiability import run_phase_transition
from .spectral_ops import SpectralFunction, apply_spectral_function

ALGORITHMS = ("l0", "l2", "backward", "bagging")


def normalized_adjacency(s):
    """Adjacency scaled to unit Frobenius norm."""
    a = s.adjacency()
    return a / np.linalg.norm(a)


def sum_normalized_adjacency(s):
    """Adjacency scaled so that its entries sum to one."""
    a = s.adjacency()
    return a / a.sum()


def model_matrices(s, f, normalization="frobenius"):
    w = normalized_adjacency(s) if normalization == "frobenius" else sum_normalized_adjacency(s)
    return w, apply_spectral_function(w, f)


@dataclass
class RecoveryRow:
    algorithm: str
    exact_rate: float
    mean_error: float
    replications: int


def summarize(errors):
    """``errors[alg]`` lists per-replication support errors."""
    rows = []
    for alg, errs in errors.items():
        errs = np.asarray(errs, dtype=float)
        rows.append(RecoveryRow(alg, float(np.mean(errs == 0)), float(errs.mean()), len(errs)))
    return rows


def rows_to_csv(rows, extra=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(extra or {})
    w.writerow(keys + ["algorithm", "exact_rate", "mean_error", "replications"])
    for r in rows:
        w.writerow([extra[k] for k in keys] + [r.algorithm, f"{r.exact_rate:.4f}",
                                               f"{r.mean_error:.4f}", r.replications])
    return buf.getvalue()


def rows_to_markdown(rows, title=None):
    lines = [f"### {title}", ""] if title else []
    lines += ["| algorithm | exact recovery | mean error | replications |",
              "|---|---|---|---|"]
    lines += [f"| {r.algorithm} | {100 * r.exact_rate:.1f}% | {r.mean_error:.3f} | {r.replications} |"
              for r in rows]
    return "\n".join(lines) + "\n"


# -- one replication --------------------------------------------------------

def _one_replication(args):
    (truth, w, f, n, algorithms, m_runs, min_edges, l0_criterion, child) = args
    rng = np.random.default_rng(child)
    seeds = rng.integers(2**63, size=3)
    forbidden = ForbiddenSet.diagonal(truth.n_vertices)
    data, full = gen_gaussian_covariance(w, f, n, seed=int(seeds[0]))
    out = {}
    if "l0" in algorithms:
        path = l0_path(full.k_hat, forbidden, criterion=l0_criterion)
        out["l0"] = oracle_calibrate("l0", full.k_hat, truth, path=path)[1]
    if "l2" in algorithms:
        out["l2"] = oracle_calibrate("l2", full.k_hat, truth, estimate=full_estimate(full.k_hat))[1]
    if "backward" in algorithms:
        sub_rng = np.random.default_rng(int(seeds[1]))
        while True:
            mask = sub_rng.random(data.n_obs) < 0.5
            if mask.sum() >= data.min_obs:
                break
        train = data.estimate(mask)
        traj = backward_trajectory(train.k_hat, forbidden, train.n, train.sigma_hat, min_edges)
        out["backward"] = support_error(adaptive_stop(traj, full.k_hat), truth)
    if "bagging" in algorithms:
        res = bagging_backward(data, forbidden, m_runs, seed=int(seeds[2]), min_edges=min_edges,
                               k_hat_full=full.k_hat)
        out["bagging"] = support_error(res.final_support, truth)
    return out


def recovery_study(truth, f, n, replications, seed=0, algorithms=ALGORITHMS, m_runs=100,
                   min_edges=None, l0_criterion="restricted", jobs=1, normalization="frobenius"):
    """Support errors of each algorithm over independent Gaussian samples.

    Returns ``(rows, errors, seconds)`` where ``seconds`` is wall time.
    """
    for a in algorithms:
        if a not in ALGORITHMS:
            raise InvalidArgument(f"unknown algorithm {a!r}")
    w, _ = model_matrices(truth, f, normalization)
    if min_edges is None:
        min_edges = truth.n_vertices
    tasks = [(truth, w, f, n, tuple(algorithms), m_runs, min_edges, l0_criterion, c)
             for c in spawn(seed, replications)]
    start = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_one_replication, tasks))
    else:
        results = [_one_replication(t) for t in tasks]
    seconds = time.perf_counter() - start
    errors = {a: [r[a] for r in results] for a in algorithms}
    return summarize(errors), errors, seconds


def kite5_study(replications=100, seed=0, n=500, m_runs=100, jobs=1, algorithms=ALGORITHMS,
                l0_criterion="restricted"):
    return recovery_study(make_kite(5), SpectralFunction.exp(), n, replications, seed,
                          algorithms, m_runs, l0_criterion=l0_criterion, jobs=jobs)


def g2_study(f, n, replications=100, seed=0, m_runs=100, jobs=1):
    return recovery_study(fifteen_vertex_benchmark(), f, n, replications, seed, ("bagging",),
                          m_runs, jobs=jobs)


# -- spectrum and phase tables ---------------------------------------------

def spectrum_table(s=None):
    """Eigenvalues of the normalized adjacency and their images under both transforms."""
    s = fifteen_vertex_benchmark() if s is None else s
    lam = np.linalg.eigvalsh(normalized_adjacency(s))
    fexp = SpectralFunction.exp()(lam)
    fsq = SpectralFunction.inverse_square_shift()(lam)
    gaps = {"eigenvalue": np.diff(lam).min(), "exp": np.diff(np.sort(fexp)).min(),
            "inv_square": np.diff(np.sort(fsq)).min()}
    return np.column_stack([lam, fexp, fsq]), gaps


def spectrum_csv(s=None):
    table, gaps = spectrum_table(s)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eigenvalue", "exp", "inv_square"])
    for row in table:
        w.writerow([f"{x:.10g}" for x in row])
    return buf.getvalue(), gaps


def phase_study(n, multipliers=(0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0), trials=100, seed=0,
                jobs=1):
    """Identifiability frequency at ``p = c log(n) / n`` for each multiplier ``c``."""
    grid = [min(1.0, c * math.log(n) / n) for c in multipliers]
    return run_phase_transition(n, grid, trials, seed, jobs)

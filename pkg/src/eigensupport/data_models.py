"""Sample generators producing ``k_hat`` and the covariance of ``sqrt(n) vec(k_hat)``.

Four observation schemes are covered: i.i.d. Gaussian vectors with covariance
``f(W)``, a Markov chain, a VAR(1) process and an Ornstein-Uhlenbeck process,
the last three observed at random times. For the random-time models the
regression target is ``E[W^tau]`` (discrete gaps) or ``E[exp(-tau W)]``
(continuous gaps), a spectral function of ``W``.
"""
from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.stats

from ._rng import as_generator
from .exceptions import InvalidArgument, InvalidModel, PreprocessingDegenerate
from .spectral_ops import (apply_spectral_function, as_symmetric, commutation_matrix,
                           read_matrix_binary, symmetrize, write_matrix_binary)


# -- estimates and datasets -------------------------------------------------

@dataclass
class KhatEstimate:
    """``k_hat`` with ``sigma_hat``, the covariance of ``sqrt(n) vec(k_hat)``."""

    k_hat: np.ndarray
    sigma_hat: np.ndarray
    n: int

    def write(self, stem):
        stem = Path(stem)
        write_matrix_binary(self.k_hat, stem.with_suffix(".khat.bin"))
        write_matrix_binary(self.sigma_hat, stem.with_suffix(".sigma.bin"))
        stem.with_suffix(".khat.json").write_text(json.dumps({"n": self.n}) + "\n")

    @classmethod
    def read(cls, stem):
        stem = Path(stem)
        meta = json.loads(stem.with_suffix(".khat.json").read_text())
        return cls(read_matrix_binary(stem.with_suffix(".khat.bin")),
                   read_matrix_binary(stem.with_suffix(".sigma.bin")), int(meta["n"]))


def symmetrized_covariance(sigma):
    """Covariance of ``vec((M + M^T) / 2)`` given that of ``vec(M)``."""
    n2 = sigma.shape[0]
    t = commutation_matrix(math.isqrt(n2))
    half = (np.eye(n2) + t) / 2
    return symmetrize(half @ sigma @ half.T)


def gaussian_sigma(k):
    """``(I + T)(K kron K)``: covariance of ``sqrt(n) vec(k_hat)`` for Gaussian data."""
    n = k.shape[0]
    return symmetrize((np.eye(n * n) + commutation_matrix(n)) @ np.kron(k, k))


def empirical_fourth_moment_sigma(x, k_hat=None):
    """Covariance of ``vec(x_i x_i^T)`` across rows, for non-Gaussian data."""
    z = np.einsum("ti,tj->tji", x, x).reshape(len(x), -1)   # column-major vec per row
    mean = z.mean(axis=0)
    return symmetrize(z.T @ z / len(x) - np.outer(mean, mean))


def gaussian_khat(x, sigma="gaussian"):
    x = np.asarray(x, dtype=float)
    n = len(x)
    k_hat = symmetrize(x.T @ x / n)
    if sigma == "gaussian":
        s = gaussian_sigma(k_hat)
    elif sigma == "empirical":
        s = empirical_fourth_moment_sigma(x)
    else:
        raise InvalidArgument(f"unknown sigma estimator {sigma!r}")
    return KhatEstimate(k_hat, s, n)


def regression_khat(y, mask=None, sigma="bootstrap", bootstrap=200, seed=0):
    """Symmetrized least squares of ``y[k+1]`` on ``y[k]`` over the selected transitions.

    ``sigma="bootstrap"`` resamples residuals with the design held fixed;
    ``"sandwich"`` uses the heteroscedasticity-robust closed form.
    """
    y = np.asarray(y, dtype=float)
    prev, nxt = y[:-1], y[1:]
    if mask is not None:
        prev, nxt = prev[mask], nxt[mask]
    n, dim = prev.shape
    gram = prev.T @ prev
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        raise InvalidModel("singular design in the transition regression") from None
    coef = nxt.T @ prev @ gram_inv
    resid = nxt - prev @ coef.T
    k_hat = symmetrize(coef)
    if sigma == "bootstrap":
        rng = np.random.default_rng(seed)
        draws = np.empty((bootstrap, dim * dim))
        for b in range(bootstrap):
            eps = resid[rng.integers(n, size=n)]
            draws[b] = symmetrize(coef + eps.T @ prev @ gram_inv).ravel(order="F")
        s = symmetrize(n * np.cov(draws, rowvar=False))
    elif sigma == "sandwich":
        scores = np.einsum("ti,tj->tji", resid, prev).reshape(n, -1)
        meat = scores.T @ scores / n
        bread = np.kron(n * gram_inv, np.eye(dim))
        s = symmetrized_covariance(bread @ meat @ bread.T)
    else:
        raise InvalidArgument(f"unknown sigma estimator {sigma!r}")
    return KhatEstimate(k_hat, s, n)


def markov_khat(states, n_states, mask=None):
    """Empirical transition matrix, symmetrized, with a multinomial covariance."""
    states = np.asarray(states, dtype=int).ravel()
    prev, nxt = states[:-1], states[1:]
    if mask is not None:
        prev, nxt = prev[mask], nxt[mask]
    n = len(prev)
    counts = np.zeros((n_states, n_states))
    np.add.at(counts, (prev, nxt), 1.0)
    rows = counts.sum(axis=1)
    q = np.divide(counts, rows[:, None], out=np.zeros_like(counts), where=rows[:, None] > 0)
    sq = np.zeros((n_states * n_states,) * 2)
    for i in range(n_states):
        if rows[i] == 0:
            continue
        block = (np.diag(q[i]) - np.outer(q[i], q[i])) * n / rows[i]
        idx = i + n_states * np.arange(n_states)     # vec positions of row i
        sq[np.ix_(idx, idx)] = block
    return KhatEstimate(symmetrize(q), symmetrized_covariance(sq), n), q


@dataclass
class DatasetHandle:
    """Observations plus what is needed to re-estimate on a subsample.

    For ``gaussian`` data the units are rows. For the time-series models
    (``markov``, ``var``, ``ou``) the rows form one observed sequence and the
    units are consecutive transitions. ``mask`` restricts the units.
    """

    observations: np.ndarray
    model_tag: str
    seed: object = None
    params: dict = field(default_factory=dict)
    mask: np.ndarray | None = None

    def __post_init__(self):
        obs = np.asarray(self.observations)
        if obs.ndim != 2 or len(obs) < 1:
            raise InvalidArgument("observations must be a non-empty 2-D array")
        if not np.all(np.isfinite(obs)):
            raise InvalidArgument("observations contain non-finite values")
        self.observations = obs

    @property
    def is_series(self):
        return self.model_tag in ("markov", "var", "ou")

    @property
    def n_units(self):
        return len(self.observations) - 1 if self.is_series else len(self.observations)

    @property
    def n_obs(self):
        return self.n_units if self.mask is None else int(self.mask.sum())

    @property
    def min_obs(self):
        return self.observations.shape[1] + 1 if self.model_tag in ("var", "ou") else 2

    def _combined(self, mask):
        if self.mask is None:
            return mask
        if mask is None:
            return self.mask
        full = np.zeros(self.n_units, bool)
        full[np.flatnonzero(self.mask)[np.asarray(mask, bool)]] = True
        return full

    def estimate(self, mask=None):
        """``KhatEstimate`` on the units selected by ``mask`` (relative to this handle)."""
        m = self._combined(mask)
        p = self.params
        if self.model_tag == "gaussian":
            x = self.observations if m is None else self.observations[m]
            return gaussian_khat(x, p.get("sigma", "gaussian"))
        if self.model_tag in ("var", "ou"):
            return regression_khat(self.observations, m, p.get("sigma", "bootstrap"),
                                   p.get("bootstrap", 200), p.get("bootstrap_seed", 0))
        if self.model_tag == "markov":
            return markov_khat(self.observations[:, 0], p["n_states"], m)[0]
        if self.model_tag == "field":
            x = self.observations if m is None else self.observations[m]
            x = x - x.mean(axis=0)
            return gaussian_khat(x, p.get("sigma", "empirical"))
        raise InvalidModel(f"no estimator for model {self.model_tag!r}")

    def write(self, path):
        """CSV of observations plus a JSON sidecar with tag, parameters, seed and mask."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.observations:
                w.writerow([repr(float(x)) for x in row])
        side = {"model_tag": self.model_tag, "params": self.params, "seed": self.seed,
                "mask": None if self.mask is None else np.flatnonzero(self.mask).tolist()}
        path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        path = Path(path)
        obs = np.loadtxt(path, delimiter=",", ndmin=2)
        side_path = path.with_suffix(".json")
        side = json.loads(side_path.read_text()) if side_path.exists() else {"model_tag": "gaussian"}
        h = cls(obs, side["model_tag"], side.get("seed"), side.get("params") or {})
        if side.get("mask") is not None:
            m = np.zeros(h.n_units, bool)
            m[side["mask"]] = True
            h.mask = m
        return h


def subsample(data, keep_prob, seed=None):
    """Keep each unit independently with probability ``keep_prob``."""
    if not 0 < keep_prob <= 1:
        raise InvalidArgument("keep_prob must lie in (0, 1]")
    rng = as_generator(seed)
    n = data.n_obs
    mask = rng.random(n) < keep_prob
    if not mask.any():
        mask = rng.random(n) < keep_prob
    out = DatasetHandle(data.observations, data.model_tag, data.seed, dict(data.params), data.mask)
    if data.is_series:
        out.mask = data._combined(mask)
    else:
        out.observations = data.observations if data.mask is None else data.observations
        out.mask = data._combined(mask)
    return out


# -- gap laws ---------------------------------------------------------------

@dataclass(frozen=True)
class GapLaw:
    """Law of the time between observations.

    Discrete kinds (``point_mass``, ``geometric``) live on positive integers;
    continuous kinds (``fixed``, ``exponential``) on positive reals.
    """

    kind: str
    param: float

    @property
    def discrete(self):
        return self.kind in ("point_mass", "geometric")

    @classmethod
    def point_mass(cls, k):
        if int(k) != k or k < 1:
            raise InvalidArgument("a point mass gap must be a positive integer")
        return cls("point_mass", int(k))

    @classmethod
    def geometric(cls, q):
        if not 0 < q <= 1:
            raise InvalidArgument("geometric parameter must lie in (0, 1]")
        return cls("geometric", float(q))

    @classmethod
    def fixed(cls, t0):
        if t0 <= 0:
            raise InvalidArgument("a fixed gap must be positive")
        return cls("fixed", float(t0))

    @classmethod
    def exponential(cls, rate):
        if rate <= 0:
            raise InvalidArgument("rate must be positive")
        return cls("exponential", float(rate))

    @classmethod
    def parse(cls, text):
        """``point_mass:2``, ``geometric:0.5``, ``fixed:1.0`` or ``exponential:2``."""
        kind, _, val = text.partition(":")
        ctor = {"point_mass": cls.point_mass, "geometric": cls.geometric,
                "fixed": cls.fixed, "exponential": cls.exponential}.get(kind)
        if ctor is None or not val:
            raise InvalidArgument(f"bad gap law {text!r}")
        return ctor(float(val))

    def sample(self, rng, size):
        if self.kind == "point_mass":
            return np.full(size, self.param, dtype=int)
        if self.kind == "geometric":
            return rng.geometric(self.param, size)
        if self.kind == "fixed":
            return np.full(size, self.param)
        return rng.exponential(1 / self.param, size)

    def expected_power(self, m):
        """``E[M^tau]`` for a discrete law (``M`` any square matrix)."""
        m = np.asarray(m, dtype=float)
        if self.kind == "point_mass":
            return np.linalg.matrix_power(m, self.param)
        if self.kind == "geometric":
            q = self.param
            return q * m @ np.linalg.inv(np.eye(len(m)) - (1 - q) * m)
        raise InvalidArgument("expected_power needs a discrete gap law")

    def laplace(self, w):
        """``E[exp(-tau W)]`` for a continuous law."""
        w = np.asarray(w, dtype=float)
        if self.kind == "fixed":
            return scipy.linalg.expm(-self.param * w)
        if self.kind == "exponential":
            r = self.param
            return r * np.linalg.inv(r * np.eye(len(w)) + w)
        raise InvalidArgument("laplace needs a continuous gap law")

    def to_dict(self):
        return {"kind": self.kind, "param": self.param}


# -- generators -------------------------------------------------------------

def gen_gaussian_covariance(w, f, n, seed=None, sigma="gaussian"):
    """Centered Gaussian sample with covariance ``K = f(W)``."""
    k = apply_spectral_function(w, f)
    evals = np.linalg.eigvalsh(k)
    if evals[0] <= 0:
        raise InvalidModel(f"f(W) is not positive definite (smallest eigenvalue {evals[0]:.3g})")
    rng = as_generator(seed)
    x = rng.standard_normal((n, len(k))) @ np.linalg.cholesky(k).T
    handle = DatasetHandle(x, "gaussian", _seed_label(seed), {"sigma": sigma, "n": n})
    return handle, gaussian_khat(x, sigma)


def wishart_khat(k, n, seed=None):
    """Draw ``(1/n) sum x_i x_i^T`` for ``x_i ~ N(0, K)`` without simulating the sample."""
    rng = as_generator(seed)
    return symmetrize(scipy.stats.wishart(df=n, scale=k).rvs(random_state=rng) / n)


def _seed_label(seed):
    return seed if isinstance(seed, (int, type(None))) else str(seed)


def _check_stochastic(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise InvalidModel("transition matrix must be square")
    if np.any(p < -1e-12) or np.abs(p.sum(axis=1) - 1).max() > 1e-10:
        raise InvalidModel("transition matrix rows must be probability vectors")
    return np.clip(p, 0, None)


def simulate_markov(p, gap_law, n, rng, start=None):
    """States of the chain observed at ``n + 1`` successive random times."""
    p = _check_stochastic(p)
    m = len(p)
    gaps = gap_law.sample(rng, n)
    u = rng.random(n)
    state = int(rng.integers(m)) if start is None else int(start)
    out = np.empty(n + 1, dtype=int)
    out[0] = state
    cum = {}
    for k in range(n):
        g = int(gaps[k])
        table = cum.get(g)
        if table is None:
            rows = np.cumsum(np.linalg.matrix_power(p, g), axis=1)
            rows[:, -1] = 1.0
            table = cum[g] = rows.tolist()
        state = min(bisect.bisect_right(table[state], u[k]), m - 1)
        out[k + 1] = state
    return out


def gen_markov_random_times(p_matrix, gap_law, n, seed=None):
    """Chain observed at random times; ``k_hat`` is the symmetrized empirical transition matrix."""
    if not gap_law.discrete:
        raise InvalidArgument("a Markov chain needs an integer-valued gap law")
    rng = as_generator(seed)
    states = simulate_markov(p_matrix, gap_law, n, rng)
    p_matrix = np.asarray(p_matrix, dtype=float)
    params = {"n_states": len(p_matrix), "gap_law": gap_law.to_dict(), "n": n}
    handle = DatasetHandle(states[:, None].astype(float), "markov", _seed_label(seed), params)
    est, _ = markov_khat(states, len(p_matrix))
    return handle, est


def _eig_sim(w, gap_law, n, rng, decay, innovation, stationary):
    """Simulate ``y' = U (decay(lam, tau) * U^T y + innovation(lam, tau) * xi)``."""
    lam, u = np.linalg.eigh(w)
    gaps = gap_law.sample(rng, n)
    z = np.empty((n + 1, len(lam)))
    z[0] = np.sqrt(stationary(lam)) * rng.standard_normal(len(lam))
    xi = rng.standard_normal((n, len(lam)))
    for k in range(n):
        tau = gaps[k]
        z[k + 1] = decay(lam, tau) * z[k] + innovation(lam, tau) * xi[k]
    return z @ u.T


def gen_var_random_times(w, gap_law, n, noise_scale=1.0, seed=None, sigma="bootstrap",
                         bootstrap=200):
    """VAR(1) ``x' = W x + noise`` observed after random integer gaps; target ``E[W^tau]``."""
    w = as_symmetric(w)
    if not gap_law.discrete:
        raise InvalidArgument("a VAR process needs an integer-valued gap law")
    rho = np.abs(np.linalg.eigvalsh(w)).max(initial=0.0)
    if rho >= 1:
        raise InvalidModel(f"spectral radius {rho:.4g} is not below 1")
    if noise_scale <= 0:
        raise InvalidArgument("noise_scale must be positive")
    rng = as_generator(seed)
    s2 = noise_scale ** 2

    def innovation(lam, tau):
        # variance of sum_{j < tau} lam^j xi_j
        return np.sqrt(s2 * (1 - lam ** (2 * tau)) / (1 - lam ** 2))

    y = _eig_sim(w, gap_law, n, rng, lambda lam, tau: lam ** tau, innovation,
                 lambda lam: s2 / (1 - lam ** 2))
    params = {"gap_law": gap_law.to_dict(), "noise_scale": noise_scale, "n": n,
              "sigma": sigma, "bootstrap": bootstrap}
    handle = DatasetHandle(y, "var", _seed_label(seed), params)
    return handle, handle.estimate()


def gen_ou_random_times(w, gap_law, n, seed=None, sigma="bootstrap", bootstrap=200):
    """``dX = -W X dt + dB`` observed at random times; target ``E[exp(-tau W)]``."""
    w = as_symmetric(w)
    if gap_law.discrete:
        gap_law = GapLaw("fixed", float(gap_law.param)) if gap_law.kind == "point_mass" else gap_law
    lam_min = np.linalg.eigvalsh(w)[0]
    if lam_min <= 0:
        raise InvalidModel(f"W must be positive definite (smallest eigenvalue {lam_min:.3g})")
    rng = as_generator(seed)
    y = _eig_sim(w, gap_law, n, rng,
                 lambda lam, tau: np.exp(-tau * lam),
                 lambda lam, tau: np.sqrt(-np.expm1(-2 * tau * lam) / (2 * lam)),
                 lambda lam: 1 / (2 * lam))
    params = {"gap_law": gap_law.to_dict(), "n": n, "sigma": sigma, "bootstrap": bootstrap}
    handle = DatasetHandle(y, "ou", _seed_label(seed), params)
    return handle, handle.estimate()


# -- preprocessing ----------------------------------------------------------

def preprocess_field(raw, grid_coords=None, log=True, detrend=True, normalize=True,
                     ridge=True, cond_limit=1e12):
    """Log transform, spatial detrending and unit conditional variances.

    ``grid_coords`` has one row of coordinates per column of ``raw``. The trend
    is a least-squares affine fit of the column means on the coordinates and is
    subtracted from every row. The last stage rescales column ``j`` by
    ``sqrt(P_jj)`` with ``P`` the inverse empirical covariance, so the result has
    unit conditional variances. When the covariance is near-singular a ridge of
    ``1e-6 * trace / N`` is added, or ``PreprocessingDegenerate`` is raised if
    ``ridge`` is false.
    """
    x = np.asarray(raw, dtype=float).copy()
    if x.ndim != 2:
        raise InvalidArgument("raw data must be a 2-D array (observations x sites)")
    n, dim = x.shape
    if log:
        if np.any(x < 0):
            raise InvalidArgument("log stage needs nonnegative data")
        x = np.log1p(x)
    if detrend:
        if grid_coords is None:
            raise InvalidArgument("detrending needs grid coordinates")
        coords = np.asarray(grid_coords, dtype=float).reshape(dim, -1)
        design = np.column_stack([np.ones(dim), coords])
        coef, *_ = np.linalg.lstsq(design, x.mean(axis=0), rcond=None)
        x = x - design @ coef
    if normalize:
        if n < 2:
            raise PreprocessingDegenerate("need at least two observations to normalize")
        cov = np.cov(x, rowvar=False).reshape(dim, dim)
        if np.linalg.cond(cov) > cond_limit:
            if not ridge:
                raise PreprocessingDegenerate(
                    "empirical covariance is singular; enable the ridge option")
            cov = cov + 1e-6 * np.trace(cov) / dim * np.eye(dim)
            if np.trace(cov) == 0:
                raise PreprocessingDegenerate("empirical covariance is zero")
        prec = np.linalg.inv(cov)
        x = x * np.sqrt(np.diag(prec))
    return DatasetHandle(x, "field", None, {"log": log, "detrend": detrend, "normalize": normalize})

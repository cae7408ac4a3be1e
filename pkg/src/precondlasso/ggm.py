"""Gaussian graphical models: representation, sampling, covariance, generators.

A model is a sparse symmetric positive-definite matrix whose support graph
encodes the Markov structure; covariates are rows of N(0, theta^{-1}).
Sampling solves the triangular system L^T x = z where theta = L L^T, so the
covariance is never formed for large sparse models (banded factorization
when the support is banded, dense Cholesky otherwise).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite
from .graphs import Graph
from .numerics import RngStream, SparseMatrix, gaussian_draw, read_matrix_text, write_matrix_text

# Banded Cholesky pays off up to moderate bandwidth; beyond it, go dense.
_BAND_LIMIT = 128
# Exact covariances are only materialized at desk scale.
_SIGMA_LIMIT = 4096


@dataclass
class PrecisionModel:
    theta: SparseMatrix
    support: Graph
    sigma: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        if not self.theta.is_symmetric():
            raise ValueError("theta must be symmetric")
        off = self.theta.row != self.theta.col
        for u, v in zip(self.theta.row[off], self.theta.col[off]):
            if not self.support.has_edge(int(u), int(v)):
                raise ValueError(f"theta entry ({u},{v}) outside the support graph")
        if self.sigma is not None:
            n = self.n
            resid = np.linalg.norm(self.theta.tocsr() @ self.sigma - np.eye(n))
            if resid > 1e-8 * np.sqrt(n):
                raise ValueError(f"sigma is not the inverse of theta (residual {resid:.2e})")

    @property
    def n(self) -> int:
        return self.theta.rows

    def covariance(self) -> np.ndarray:
        """Exact covariance; solves against theta when it was not stored."""
        if self.sigma is not None:
            return self.sigma
        return np.linalg.inv(self.theta.to_dense())

    def mahalanobis(self, d: np.ndarray) -> float:
        """||d||_Sigma^2 = d^T theta^{-1} d, via a solve against theta:
        with theta = L L^T this is ||L^{-1} d||^2."""
        d = np.asarray(d, dtype=float)
        if self.sigma is not None:
            return float(d @ (self.sigma @ d))
        factor = _banded_or_dense_factor(self.theta)
        return float(np.sum(_solve_lower(factor, d) ** 2))


@dataclass
class SampleSet:
    X: np.ndarray
    Y: np.ndarray
    w_star: Optional[np.ndarray] = None
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.X.shape[0] != self.Y.shape[0] or self.X.shape[0] < 1:
            raise ValueError("X and Y row counts must agree and be >= 1")


# -- Cholesky plumbing --------------------------------------------------

def _banded_or_dense_factor(theta: SparseMatrix):
    """Returns ('banded', bw, ab_lower) or ('dense', L)."""
    bw = theta.bandwidth()
    n = theta.rows
    if bw <= _BAND_LIMIT:
        ab = np.zeros((bw + 1, n))
        for r, c, v in zip(theta.row, theta.col, theta.val):
            if r >= c:
                ab[r - c, c] = v
        try:
            lfac = scipy.linalg.cholesky_banded(ab, lower=True)
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefinite(str(e)) from e
        return ("banded", bw, lfac)
    try:
        L = np.linalg.cholesky(theta.to_dense())
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(str(e)) from e
    return ("dense", None, L)


def _solve_lt(factor, z: np.ndarray) -> np.ndarray:
    """Solve L^T x = z row-wise for a batch z (m x n)."""
    kind = factor[0]
    if kind == "banded":
        _, bw, lfac = factor
        n = lfac.shape[1]
        # Upper-banded storage of L^T from the lower-banded storage of L.
        ab_u = np.zeros((bw + 1, n))
        for k in range(bw + 1):
            ab_u[bw - k, k:n] = lfac[k, 0:n - k]
        return scipy.linalg.solve_banded((0, bw), ab_u, z.T).T
    L = factor[2]
    return scipy.linalg.solve_triangular(L.T, z.T, lower=False).T


def _solve_lower(factor, d: np.ndarray) -> np.ndarray:
    kind = factor[0]
    if kind == "banded":
        _, bw, lfac = factor
        return scipy.linalg.solve_banded((bw, 0), lfac, d)
    L = factor[2]
    return scipy.linalg.solve_triangular(L, d, lower=True)


# -- Operations ----------------------------------------------------------

def sample_covariates(model: PrecisionModel, m: int, stream: RngStream) -> np.ndarray:
    """m i.i.d. rows of N(0, theta^{-1}), via L^T x = z with theta = L L^T."""
    factor = _banded_or_dense_factor(model.theta)
    z = gaussian_draw(stream, (m, model.n))
    return _solve_lt(factor, z)


def make_labels(X: np.ndarray, w_star, noise_sigma: float, stream: RngStream) -> SampleSet:
    """Responses Y = X w* + sigma * z with fresh standard-normal z."""
    w_star = np.asarray(w_star, dtype=float)
    if X.shape[1] != w_star.size:
        raise ValueError("dimension mismatch between X and w_star")
    y = X @ w_star
    if noise_sigma > 0:
        y = y + noise_sigma * gaussian_draw(stream, X.shape[0])
    return SampleSet(X=X, Y=y, w_star=w_star, noise_sigma=float(noise_sigma))


def empirical_covariance(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need at least one sample row")
    s = X.T @ X / X.shape[0]
    return 0.5 * (s + s.T)


# -- Canonical generators -------------------------------------------------

def make_random_walk(n: int) -> PrecisionModel:
    """Cumulative-sum walk: Sigma_ij = min(i+1, j+1), tridiagonal precision."""
    if n < 1:
        raise ValueError("n >= 1")
    rows, cols, vals = [], [], []
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(2.0 if i < n - 1 else 1.0)
    for i in range(n - 1):
        rows += [i, i + 1]
        cols += [i + 1, i]
        vals += [-1.0, -1.0]
    theta = SparseMatrix(n, n, np.array(rows), np.array(cols), np.array(vals))
    sigma = None
    if n <= _SIGMA_LIMIT:
        idx = np.arange(1, n + 1)
        sigma = np.minimum.outer(idx, idx).astype(float)
    return PrecisionModel(theta, Graph.path(n), sigma, label=f"random-walk-{n}")


def make_standardized_walk(n: int):
    """Random walk plus the diagonal rescaling S_ii = sqrt(i+1) that gives
    every coordinate unit variance."""
    model = make_random_walk(n)
    model.label = f"standardized-walk-{n}"
    diag = np.sqrt(np.arange(1, n + 1, dtype=float))
    return model, SparseMatrix.diagonal(diag)


def make_identity_model(n: int) -> PrecisionModel:
    theta = SparseMatrix.identity(n)
    return PrecisionModel(theta, Graph(n), np.eye(n), label=f"identity-{n}")


def make_banded_model(n: int, bandwidth: int, stream: RngStream) -> PrecisionModel:
    """Random diagonally-dominant SPD precision with the given bandwidth;
    the support graph (band graph) has treewidth equal to the bandwidth."""
    if bandwidth < 1 or bandwidth >= n:
        raise ValueError("need 1 <= bandwidth < n")
    rng = stream.generator()
    g = Graph(n)
    rows, cols, vals = [], [], []
    for i in range(n):
        for j in range(i + 1, min(n, i + bandwidth + 1)):
            g.add_edge(i, j)
            v = rng.uniform(-1.0, 1.0)
            rows += [i, j]
            cols += [j, i]
            vals += [v, v]
    offdiag_abs = np.zeros(n)
    for r, v in zip(rows, vals):
        offdiag_abs[r] += abs(v)
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(offdiag_abs[i] + 1.0)
    theta = SparseMatrix(n, n, np.array(rows), np.array(cols), np.array(vals))
    sigma = np.linalg.inv(theta.to_dense()) if n <= _SIGMA_LIMIT else None
    return PrecisionModel(theta, g, sigma, label=f"banded-{bandwidth}-{n}")


def make_tree_model(n: int, stream: RngStream) -> PrecisionModel:
    """Random tree support with a diagonally-dominant SPD precision."""
    rng = stream.generator()
    g = Graph.random_tree(n, rng)
    rows, cols, vals = [], [], []
    offdiag_abs = np.zeros(n)
    for u, v in g.edges:
        w = rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0])
        rows += [u, v]
        cols += [v, u]
        vals += [w, w]
        offdiag_abs[u] += abs(w)
        offdiag_abs[v] += abs(w)
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(offdiag_abs[i] + rng.uniform(0.5, 1.5))
    theta = SparseMatrix(n, n, np.array(rows), np.array(cols), np.array(vals))
    sigma = np.linalg.inv(theta.to_dense()) if n <= _SIGMA_LIMIT else None
    return PrecisionModel(theta, g, sigma, label=f"tree-{n}")


# -- Model files ----------------------------------------------------------

def save_model(model: PrecisionModel, directory, noise_sigma: float = 0.0):
    os.makedirs(directory, exist_ok=True)
    header = {
        "n": model.n,
        "label": model.label,
        "noise_sigma": noise_sigma,
        "theta": "theta.txt",
        "graph": "graph.txt",
        "sigma": "sigma.txt" if model.sigma is not None else None,
    }
    write_matrix_text(os.path.join(directory, "theta.txt"), model.theta)
    model.support.save(os.path.join(directory, "graph.txt"))
    if model.sigma is not None:
        write_matrix_text(os.path.join(directory, "sigma.txt"), model.sigma)
    with open(os.path.join(directory, "model.json"), "w") as f:
        json.dump(header, f, indent=1)


def load_model(directory) -> PrecisionModel:
    with open(os.path.join(directory, "model.json")) as f:
        header = json.load(f)
    theta = read_matrix_text(os.path.join(directory, header["theta"]))
    if not isinstance(theta, SparseMatrix):
        theta = SparseMatrix.from_dense(theta)
    support = Graph.load(os.path.join(directory, header["graph"]))
    sigma = None
    if header.get("sigma"):
        sigma = read_matrix_text(os.path.join(directory, header["sigma"]))
        if isinstance(sigma, SparseMatrix):
            sigma = sigma.to_dense()
    return PrecisionModel(theta, support, sigma, label=header.get("label", ""))

"""Sparsity-preserving block-Cholesky preconditioner.

Given a covariance estimate ordered by a centroid tree, the factor S is
built recursively: the separator block contributes its Cholesky factor and
the two sides recurse on *denoised* Schur complements whose cross block is
zeroed, which is exact for the true covariance of a Markov model and an
approximation for the empirical one.  Rows of S stay supported on the
owning group and its ancestors, so S^T maps group-tree-sparse vectors to
group-tree-sparse vectors with the same group count.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import BlockNotPD, NotPositiveDefinite
from .ggm import empirical_covariance
from .graphs import CentroidTree, Graph, build_centroid_tree, min_fill_tree_decomposition
from .numerics import (
    RngStream,
    SparseMatrix,
    cholesky_spd,
    gaussian_draw,
    read_matrix_text,
    write_matrix_text,
)

_EMPIRICAL_JITTER = 1e-10


@dataclass
class Preconditioner:
    """Block-lower-triangular factor S aligned to a centroid tree.

    ``s`` is stored in original vertex indices; ``perm`` maps an original
    index to its preorder position, under which S is genuinely lower
    triangular.  ``jittered_nodes`` records separator blocks that needed a
    diagonal nudge before factorization (empirical mode only).
    """

    s: SparseMatrix
    tree: CentroidTree
    perm: np.ndarray
    jittered_nodes: list = field(default_factory=list)

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.int64)
        self._inv_perm = np.argsort(self.perm)
        p = self.perm
        # Under the preorder permutation S is genuinely lower triangular, so
        # one sparse LU (natural ordering) serves both solve directions.
        self._s_low = scipy.sparse.csc_matrix(
            (self.s.val, (p[self.s.row], p[self.s.col])), shape=(self.n, self.n)
        )
        self._lu = scipy.sparse.linalg.splu(self._s_low, permc_spec="NATURAL")

    @property
    def n(self) -> int:
        return self.s.rows

    def apply_st(self, w: np.ndarray) -> np.ndarray:
        """S^T w (original index order)."""
        return self.s.tocsr().T @ np.asarray(w, dtype=float)

    def solve_st(self, u: np.ndarray) -> np.ndarray:
        """(S^T)^{-1} u: solve S_low^T x = u in preorder positions."""
        u = np.asarray(u, dtype=float)
        x_pos = self._lu.solve(u[self._inv_perm], trans="T")
        return x_pos[self.perm]

    def precondition_design(self, X: np.ndarray) -> np.ndarray:
        """X (S^T)^{-1}, the design whose Gram matrix S preconditions."""
        X = np.asarray(X, dtype=float)
        z = self._lu.solve(X.T[self._inv_perm, :])
        return z[self.perm, :].T

    def sst_quadform(self, v: np.ndarray) -> float:
        sv = self.s.tocsr().T @ np.asarray(v, dtype=float)
        return float(sv @ sv)

    def sst_dense(self) -> np.ndarray:
        a = self.s.tocsr()
        return np.asarray((a @ a.T).todense())

    # -- persistence: permutation line + matrix file + tree JSON --------

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "perm.txt"), "w") as f:
            f.write(" ".join(str(int(x)) for x in self.perm) + "\n")
        write_matrix_text(os.path.join(directory, "s.txt"), self.s)
        with open(os.path.join(directory, "tree.json"), "w") as f:
            f.write(self.tree.to_json())
        with open(os.path.join(directory, "meta.json"), "w") as f:
            json.dump({"jittered_nodes": self.jittered_nodes}, f)

    @classmethod
    def load(cls, directory) -> "Preconditioner":
        with open(os.path.join(directory, "perm.txt")) as f:
            perm = np.array([int(x) for x in f.read().split()], dtype=np.int64)
        s = read_matrix_text(os.path.join(directory, "s.txt"))
        if not isinstance(s, SparseMatrix):
            s = SparseMatrix.from_dense(s)
        with open(os.path.join(directory, "tree.json")) as f:
            tree = CentroidTree.from_json(f.read())
        jittered = []
        meta_path = os.path.join(directory, "meta.json")
        if os.path.exists(meta_path):
            with open(meta_path) as f:
                jittered = json.load(f).get("jittered_nodes", [])
        return cls(s, tree, perm, jittered)


def graphical_cholesky(sigma_tilde: np.ndarray, tree: CentroidTree,
                       empirical: bool = False) -> Preconditioner:
    """Block-Cholesky factor of sigma_tilde along the centroid tree.

    For the exact covariance of a model that is Markov with respect to the
    tree's separators, S S^T reproduces sigma_tilde to rounding error.  In
    empirical mode, near-singular separator blocks get a relative jitter of
    1e-10 * trace/|A| before factoring; blocks that stay non-PD raise
    :class:`BlockNotPD` (the symptom of too few samples).
    """
    sigma = np.asarray(sigma_tilde, dtype=float)
    n = sigma.shape[0]
    if sigma.shape != (n, n) or n != tree.n:
        raise ValueError("covariance and tree sizes disagree")
    order = np.asarray(tree.preorder_vertices(), dtype=np.int64)
    sigma_ord = sigma[np.ix_(order, order)]

    # Per-node spans in preorder positions: group rows come first, then the
    # left subtree's, then the right's.
    spans = {}

    def span_of(node_id, offset):
        node = tree.nodes[node_id]
        a = len(node.group)
        left = right = 0
        pos = offset + a
        if node.left != -1:
            left = span_of(node.left, pos)
            pos += left
        if node.right != -1:
            right = span_of(node.right, pos)
            pos += right
        spans[node_id] = (offset, a, left, right)
        return a + left + right

    if n:
        span_of(0, 0)

    rows_out, cols_out, vals_out = [], [], []
    jittered = []

    def emit(block, r0, c0):
        r, c = np.nonzero(block)
        rows_out.append(r + r0)
        cols_out.append(c + c0)
        vals_out.append(block[r, c])

    def recurse(node_id, mat):
        offset, a, nl, nr = spans[node_id]
        try:
            l_a = cholesky_spd(mat[:a, :a])
        except NotPositiveDefinite:
            if not empirical:
                raise BlockNotPD(node_id)
            jitter = _EMPIRICAL_JITTER * max(np.trace(mat[:a, :a]), 1.0) / max(a, 1)
            try:
                l_a = cholesky_spd(mat[:a, :a] + jitter * np.eye(a))
                jittered.append(node_id)
            except NotPositiveDefinite as e:
                raise BlockNotPD(node_id, f"separator block not PD even after jitter: {e}")
        emit(l_a, offset, offset)
        node = tree.nodes[node_id]
        for child, lo, size in ((node.left, a, nl), (node.right, a + nl, nr)):
            if child == -1:
                continue
            cross = mat[lo:lo + size, :a]
            # Y = cross * L^{-T}: both the S block and the Schur update term.
            y = scipy.linalg.solve_triangular(l_a, cross.T, lower=True).T
            emit(y, offset + lo, offset)
            schur = mat[lo:lo + size, lo:lo + size] - y @ y.T
            recurse(child, 0.5 * (schur + schur.T))

    if n:
        recurse(0, sigma_ord)

    rows_pos = np.concatenate(rows_out) if rows_out else np.zeros(0, dtype=np.int64)
    cols_pos = np.concatenate(cols_out) if cols_out else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals_out) if vals_out else np.zeros(0)
    # Positions -> original indices.
    s = SparseMatrix(n, n, order[rows_pos], order[cols_pos], vals)
    return Preconditioner(s, tree, tree.permutation(), jittered)


def preconditioner_from_samples(X: np.ndarray, g: Graph) -> Preconditioner:
    """Data-driven preconditioner from the support graph alone: min-fill
    decomposition, centroid tree, empirical covariance, block factor."""
    td = min_fill_tree_decomposition(g)
    tree = build_centroid_tree(g, td)
    max_group = max((len(nd.group) for nd in tree.nodes), default=0)
    m = np.asarray(X).shape[0]
    if m < max_group + 1:
        raise BlockNotPD(-1, f"{m} samples cannot make a rank-{max_group} separator block PD")
    sigma_hat = empirical_covariance(X)
    return graphical_cholesky(sigma_hat, tree, empirical=True)


def check_sparse_rip(p: Preconditioner, X: np.ndarray, k: int, trials: int,
                     stream: RngStream) -> tuple:
    """(min, max) of v^T S S^T v / v^T Sigma_hat v over random k-sparse unit v.

    Trial vectors whose empirical quadratic form is below 1e-12 are skipped.
    """
    if trials < 1:
        raise ValueError("trials >= 1")
    sigma_hat = empirical_covariance(np.asarray(X, dtype=float))
    rng = stream.generator()
    n = p.n
    lo, hi = np.inf, -np.inf
    st = p.s.tocsr().T
    for _ in range(trials):
        supp = rng.choice(n, size=min(k, n), replace=False)
        v = np.zeros(n)
        v[supp] = rng.standard_normal(supp.size)
        v /= np.linalg.norm(v)
        denom = float(v @ (sigma_hat @ v))
        if denom < 1e-12:
            continue
        sv = st @ v
        ratio = float(sv @ sv) / denom
        lo, hi = min(lo, ratio), max(hi, ratio)
    return lo, hi


def group_tree_sparsity(p, w, atol: float = 0.0) -> int:
    """Minimal number of groups forming a rooted subtree covering supp(w).

    Accepts a Preconditioner or a CentroidTree.  Always finite for nonzero
    support since the root reaches every group.
    """
    tree = p.tree if isinstance(p, Preconditioner) else p
    w = np.asarray(w, dtype=float)
    supp = np.nonzero(np.abs(w) > atol)[0]
    if supp.size == 0:
        return 0
    owner = tree.node_of_vertex()
    needed = set()
    for v in supp:
        node = int(owner[v])
        while node != -1 and node not in needed:
            needed.add(node)
            node = tree.nodes[node].parent
    return len(needed)


def percolation_round(support: Graph, d: int, epsilon: float, stream: RngStream):
    """One site-percolation pass: keep each vertex independently with
    p = (1 - epsilon)/d and return (kept set, components of the induced
    subgraph).  Small epsilon keeps components logarithmic in n."""
    if not (0 < epsilon < 0.3):
        raise ValueError("epsilon must lie in (0, 0.3)")
    if d < max(1, support.max_degree()):
        raise ValueError("d must be at least the maximum degree")
    prob = min(max((1.0 - epsilon) / d, 0.0), 1.0 - 1e-12)
    rng = stream.generator()
    kept = np.nonzero(rng.random(support.n) < prob)[0]
    kept_set = set(int(v) for v in kept)
    comps = []
    seen = set()
    for v in sorted(kept_set):
        if v in seen:
            continue
        comp = [v]
        seen.add(v)
        stack = [v]
        while stack:
            x = stack.pop()
            for y in support.neighbors(x):
                if y in kept_set and y not in seen:
                    seen.add(y)
                    comp.append(y)
                    stack.append(y)
        comps.append(sorted(comp))
    return kept_set, comps

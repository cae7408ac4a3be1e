"""Regression engines: preconditioned Lasso and Basis Pursuit, model-based
iterative hard thresholding, ordinary least squares, best-subset baseline.

The Lasso in the preconditioned variables is plain cyclic coordinate
descent; Basis Pursuit is an explicit LP handed to HiGHS, with a dual
feasibility/gap certificate computed from the returned multipliers; IHT
projects onto group-tree-sparse vectors with a dynamic program over the
centroid tree.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np
import scipy.optimize
import scipy.sparse

from .errors import Infeasible, NoConvergence, NumericalFailure, TooLarge
from .graphs import CentroidTree
from .numerics import SparseMatrix
from .precond import Preconditioner, group_tree_sparsity

EXACT_RECOVERY_RTOL = 1e-6


@dataclass
class SolverReport:
    w_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    timing: float
    l2_error: Optional[float] = None
    mahalanobis_error: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def attach_errors(self, w_star, sigma=None, model=None):
        d = self.w_hat - np.asarray(w_star, dtype=float)
        self.l2_error = float(np.linalg.norm(d))
        if sigma is not None:
            self.mahalanobis_error = float(d @ (np.asarray(sigma) @ d))
        elif model is not None:
            self.mahalanobis_error = model.mahalanobis(d)
        return self

    def recovered(self, w_star) -> bool:
        d = float(np.linalg.norm(self.w_hat - np.asarray(w_star, dtype=float)))
        return d <= EXACT_RECOVERY_RTOL * max(1.0, float(np.linalg.norm(w_star)))


def default_lambda(X: np.ndarray, Y: np.ndarray, noise_sigma: Optional[float] = None,
                   amplitude: float = 4.0) -> float:
    """lambda = A * sigma * sqrt(log(n)/m); sigma estimated from ridge
    residuals when not supplied."""
    m, n = X.shape
    if noise_sigma is None:
        g = X.T @ Y
        h = X.T @ X + 1e-2 * m * np.eye(n)
        w = np.linalg.solve(h, g)
        resid = Y - X @ w
        dof = max(m - min(m, n), 1)
        noise_sigma = float(np.sqrt(resid @ resid / dof))
    return amplitude * noise_sigma * np.sqrt(np.log(max(n, 2)) / m)


# ----------------------------------------------------------------------
# Lasso (coordinate descent in the preconditioned variables)
# ----------------------------------------------------------------------

def _lasso_cd(Xt: np.ndarray, Y: np.ndarray, lam: float, iter_cap: int, kkt_tol: float):
    """min_u ||Y - Xt u||_2^2 + lam ||u||_1 by cyclic coordinate descent."""
    m, n = Xt.shape
    col_sq = np.einsum("ij,ij->j", Xt, Xt)
    u = np.zeros(n)
    r = Y.copy()
    sweeps = 0
    for sweeps in range(1, iter_cap + 1):
        max_delta = 0.0
        for j in range(n):
            if col_sq[j] <= 0.0:
                continue
            uj = u[j]
            rho = Xt[:, j] @ r + col_sq[j] * uj
            new = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0) / col_sq[j]
            if new != uj:
                r += Xt[:, j] * (uj - new)
                u[j] = new
                max_delta = max(max_delta, abs(new - uj))
        grad = 2.0 * (Xt.T @ (Xt @ u - Y))
        on = u != 0
        kkt = 0.0
        if on.any():
            kkt = np.max(np.abs(grad[on] + lam * np.sign(u[on])))
        if (~on).any():
            kkt = max(kkt, np.max(np.maximum(np.abs(grad[~on]) - lam, 0.0)))
        if kkt <= kkt_tol:
            return u, sweeps, True, kkt
        if max_delta == 0.0 and kkt > kkt_tol:
            # No coordinate moved but KKT not met: stuck at numerical floor.
            return u, sweeps, kkt <= 10 * kkt_tol, kkt
    return u, sweeps, False, kkt


def lasso_preconditioned(X: np.ndarray, Y: np.ndarray, p: Preconditioner,
                         lam: float, iter_cap: int = 20000) -> SolverReport:
    """S-preconditioned Lasso: substitute u = S^T w and run coordinate
    descent on min ||Y - X (S^T)^{-1} u||^2 + lam ||u||_1."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    t0 = time.perf_counter()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Xt = p.precondition_design(X)
    if lam == 0.0:
        u, *_ = np.linalg.lstsq(Xt, Y, rcond=None)
        grad = 2.0 * (Xt.T @ (Xt @ u - Y))
        w = p.solve_st(u)
        resid = Y - Xt @ u
        return SolverReport(w, float(resid @ resid), 1, bool(np.max(np.abs(grad)) <= 1e-10 * max(1.0, np.abs(Y).max())),
                            time.perf_counter() - t0, extras={"kkt": float(np.max(np.abs(grad)))})
    kkt_tol = 1e-8 * lam
    u, sweeps, converged, kkt = _lasso_cd(Xt, Y, lam, iter_cap, kkt_tol)
    if not converged:
        raise NoConvergence(f"coordinate descent stalled (kkt={kkt:.3e})",
                            iterations=sweeps, residual=kkt)
    w = p.solve_st(u)
    resid = Y - Xt @ u
    obj = float(resid @ resid + lam * np.abs(u).sum())
    return SolverReport(w, obj, sweeps, True, time.perf_counter() - t0,
                        extras={"kkt": kkt, "u_nnz": int(np.sum(u != 0))})


# ----------------------------------------------------------------------
# Basis pursuit (explicit LP)
# ----------------------------------------------------------------------

def basis_pursuit(X: np.ndarray, Y: np.ndarray, S=None) -> SolverReport:
    """min ||S^T w||_1 subject to X w = Y, for arbitrary (possibly
    rectangular) S; S=None means the identity penalty.

    Solved as the LP  min 1^T t  s.t.  -t <= S^T w <= t,  X w = Y,  and the
    returned report carries a dual-feasibility/duality-gap certificate
    assembled from the LP multipliers.
    """
    t0 = time.perf_counter()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    m, n = X.shape
    if isinstance(S, Preconditioner):
        S = S.s
    if S is None:
        st = scipy.sparse.identity(n, format="csr")
        s_cols = n
    elif isinstance(S, SparseMatrix):
        st = S.tocsr().T.tocsr()
        s_cols = S.cols
    else:
        st = scipy.sparse.csr_matrix(np.asarray(S, dtype=float).T)
        s_cols = st.shape[0]

    eye_s = scipy.sparse.identity(s_cols, format="csr")
    a_ub = scipy.sparse.vstack(
        [scipy.sparse.hstack([st, -eye_s]), scipy.sparse.hstack([-st, -eye_s])]
    ).tocsr()
    b_ub = np.zeros(2 * s_cols)
    a_eq = scipy.sparse.hstack(
        [scipy.sparse.csr_matrix(X), scipy.sparse.csr_matrix((m, s_cols))]
    ).tocsr()
    c = np.concatenate([np.zeros(n), np.ones(s_cols)])
    res = scipy.optimize.linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=Y,
        bounds=[(None, None)] * (n + s_cols), method="highs",
    )
    if res.status == 2:
        raise Infeasible("no w satisfies X w = Y")
    if res.status != 0:
        raise NumericalFailure(f"LP solver status {res.status}: {res.message}")

    w = res.x[:n]
    tvals = res.x[n:]
    obj = float(res.fun)
    # Certificate: multipliers satisfy A_ub^T y_ub + A_eq^T y_eq = c with
    # y_ub <= 0, and the dual objective b_ub @ y_ub + b_eq @ y_eq matches
    # the primal objective up to the reported gap.
    y_ub = res.ineqlin.marginals
    y_eq = res.eqlin.marginals
    dual_resid = float(np.max(np.abs(a_ub.T @ y_ub + a_eq.T @ y_eq - c)))
    dual_obj = float(b_ub @ y_ub + Y @ y_eq)
    gap = abs(obj - dual_obj)
    tol = 1e-8 * (1.0 + abs(obj))
    extras = {
        "duality_gap": gap,
        "dual_residual": dual_resid,
        "dual_feasible": bool(dual_resid <= 1e-7 * (1 + float(np.abs(c).max()))
                              and np.all(y_ub <= 1e-9)),
        "primal_infeas": float(np.max(np.abs(X @ w - Y))) if m else 0.0,
        "t_slack": float(np.max(np.abs(st @ w) - tvals)) if s_cols else 0.0,
    }
    return SolverReport(w, obj, int(res.nit), gap <= tol, time.perf_counter() - t0, extras=extras)


# ----------------------------------------------------------------------
# Group-tree-sparse projection and model-based IHT
# ----------------------------------------------------------------------

def project_group_tree_sparse(v: np.ndarray, tree: CentroidTree, k: int) -> np.ndarray:
    """Euclidean projection onto vectors supported on at most k groups that
    form a rooted subtree of the centroid tree.

    Dynamic program: best(node, budget) is the retained squared mass from
    node's subtree using at most `budget` groups there, with node included
    whenever budget >= 1 (a rooted subtree cannot skip an ancestor).
    """
    if k < 0:
        raise ValueError("k >= 0")
    v = np.asarray(v, dtype=float)
    if k == 0 or tree.num_nodes == 0:
        return np.zeros_like(v)
    n_nodes = tree.num_nodes
    k = min(k, n_nodes)
    gain = np.zeros(n_nodes)
    for node in tree.nodes:
        idx = list(node.group)
        gain[node.node_id] = float(np.sum(v[idx] ** 2))

    best = np.zeros((n_nodes, k + 1))
    split_choice = np.zeros((n_nodes, k + 1), dtype=np.int64)
    # Children have larger preorder ids, so reversed id order is bottom-up.
    for nid in range(n_nodes - 1, -1, -1):
        node = tree.nodes[nid]
        left, right = node.left, node.right
        for b in range(1, k + 1):
            rest = b - 1
            if left == -1 and right == -1:
                best[nid, b] = gain[nid]
            elif left == -1:
                best[nid, b] = gain[nid] + best[right, rest]
            elif right == -1:
                best[nid, b] = gain[nid] + best[left, rest]
            else:
                opts = best[left, :rest + 1] + best[right, rest::-1]
                j = int(np.argmax(opts))
                split_choice[nid, b] = j
                best[nid, b] = gain[nid] + opts[j]

    chosen = []
    stack = [(0, k)]
    while stack:
        nid, b = stack.pop()
        if b <= 0:
            continue
        chosen.append(nid)
        node = tree.nodes[nid]
        left, right = node.left, node.right
        rest = b - 1
        if left == -1 and right == -1:
            continue
        if left == -1:
            stack.append((right, rest))
        elif right == -1:
            stack.append((left, rest))
        else:
            j = split_choice[nid, b]
            stack.append((left, int(j)))
            stack.append((right, rest - int(j)))

    out = np.zeros_like(v)
    for nid in chosen:
        idx = list(tree.nodes[nid].group)
        out[idx] = v[idx]
    return out


def iht_model_based(X: np.ndarray, Y: np.ndarray, p: Preconditioner, k: int,
                    iter_cap: int = 200, group_budget_multiplier: Optional[int] = None,
                    tol: float = 1e-12) -> SolverReport:
    """Iterative hard thresholding in the preconditioned variables u = S^T w,
    with projection onto group-tree-sparse vectors.

    The group budget defaults to k * depth(tree): a k-sparse w touches at
    most k root-to-node paths of the centroid tree.
    """
    t0 = time.perf_counter()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    m = X.shape[0]
    Xt = p.precondition_design(X)
    depth = p.tree.depth()
    budget = k * (group_budget_multiplier if group_budget_multiplier is not None else depth)
    budget = max(1, min(budget, p.tree.num_nodes))
    u = np.zeros(Xt.shape[1])
    it = 0
    for it in range(1, iter_cap + 1):
        grad_step = u + (Xt.T @ (Y - Xt @ u)) / m
        new = project_group_tree_sparse(grad_step, p.tree, budget)
        delta = np.linalg.norm(new - u)
        u = new
        if delta <= tol * max(1.0, np.linalg.norm(u)):
            break
    resid = Y - Xt @ u
    w = p.solve_st(u)
    return SolverReport(w, float(resid @ resid), it, it < iter_cap,
                        time.perf_counter() - t0,
                        extras={"group_budget": budget, "u_groups": group_tree_sparsity(p, u)})


# ----------------------------------------------------------------------
# Baselines
# ----------------------------------------------------------------------

def ols(X: np.ndarray, Y: np.ndarray) -> SolverReport:
    t0 = time.perf_counter()
    w, *_ = np.linalg.lstsq(np.asarray(X, dtype=float), np.asarray(Y, dtype=float), rcond=None)
    resid = Y - X @ w
    return SolverReport(w, float(resid @ resid), 1, True, time.perf_counter() - t0)


def best_subset(X: np.ndarray, Y: np.ndarray, k: int, guard: int = 10**6) -> SolverReport:
    """Exhaustive size-<=k support search; per-support least squares."""
    from itertools import combinations

    t0 = time.perf_counter()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = X.shape[1]
    k = min(k, n)
    if comb(n, k) > guard:
        raise TooLarge(f"C({n},{k}) exceeds the {guard} support guard")
    best_obj, best_w = np.inf, np.zeros(n)
    for size in range(0, k + 1):
        for supp in combinations(range(n), size):
            if size == 0:
                obj = float(Y @ Y)
                w_s = None
            else:
                cols = X[:, list(supp)]
                w_s, *_ = np.linalg.lstsq(cols, Y, rcond=None)
                r = Y - cols @ w_s
                obj = float(r @ r)
            if obj < best_obj - 1e-15:
                best_obj = obj
                best_w = np.zeros(n)
                if size:
                    best_w[list(supp)] = w_s
    return SolverReport(best_w, best_obj, 1, True, time.perf_counter() - t0)

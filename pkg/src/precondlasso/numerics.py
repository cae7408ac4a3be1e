"""Matrix primitives shared by every other module.

Dense matrices are plain float64 ``numpy.ndarray``s.  Sparse matrices are
kept as unordered triplets at the interface (:class:`SparseMatrix`); the
CSR conversion used internally is an implementation detail.  Randomness
always flows through :class:`RngStream` so that (seed, stream_id) fully
determines every draw.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import NoConvergence, NotPositiveDefinite, SingularBlock

# Dense eigenproblems below this size are solved directly; above it we use
# Lanczos with shift-invert.
DENSE_EIG_LIMIT = 600

# Numerical-rank cutoff, relative to the Frobenius norm.  The constructions
# in this package treat exact kernels symbolically; any finite threshold is
# a choice of ours and is surfaced in certificates.
KERNEL_TOL = 1e-9


# ----------------------------------------------------------------------
# Seeded randomness
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """A named, replayable source of randomness.

    Identical (seed, stream_id) pairs reproduce identical draw sequences;
    distinct stream ids are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(self.stream_id & 0xFFFFFFFFFFFFFFFF,),
        )
        return np.random.default_rng(ss)

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id * 1_000_003 + offset)


def stream_id_for(*parts) -> int:
    """Stable 63-bit stream id derived from string-able parts.

    Used by the experiment harness so that (experiment, solver, m, trial)
    always maps to the same stream regardless of execution order.
    """
    h = hashlib.blake2b("|".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big") >> 1


def gaussian_draw(stream: RngStream, shape) -> np.ndarray:
    """I.i.d. standard normals of the given shape, deterministic per stream."""
    return stream.generator().standard_normal(shape)


# ----------------------------------------------------------------------
# Sparse triplets
# ----------------------------------------------------------------------

@dataclass
class SparseMatrix:
    """Unordered-triplet sparse matrix.

    Invariants: indices in range, at most one triplet per (row, col),
    stored values nonzero.  Construction coalesces nothing: duplicate
    coordinates are an error.
    """

    rows: int
    cols: int
    row: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    col: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    val: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.row = np.asarray(self.row, dtype=np.int64)
        self.col = np.asarray(self.col, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=float)
        if not (self.row.shape == self.col.shape == self.val.shape):
            raise ValueError("triplet arrays must have equal length")
        keep = self.val != 0.0
        if not keep.all():
            self.row, self.col, self.val = self.row[keep], self.col[keep], self.val[keep]
        if self.nnz:
            if self.row.min() < 0 or self.row.max() >= self.rows:
                raise ValueError("row index out of range")
            if self.col.min() < 0 or self.col.max() >= self.cols:
                raise ValueError("col index out of range")
            flat = self.row * self.cols + self.col
            if np.unique(flat).size != flat.size:
                raise ValueError("duplicate (row, col) triplet")

    @property
    def nnz(self) -> int:
        return int(self.val.size)

    @classmethod
    def from_dense(cls, a, tol: float = 0.0) -> "SparseMatrix":
        a = np.asarray(a, dtype=float)
        r, c = np.nonzero(np.abs(a) > tol)
        return cls(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        coo = scipy.sparse.coo_matrix(m)
        coo.sum_duplicates()
        return cls(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, n, idx, idx, np.ones(n))

    @classmethod
    def diagonal(cls, d) -> "SparseMatrix":
        d = np.asarray(d, dtype=float)
        idx = np.arange(d.size)
        return cls(d.size, d.size, idx, idx, d.copy())

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.rows, self.cols))
        a[self.row, self.col] = self.val
        return a

    def tocsr(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.val, (self.row, self.col)), shape=(self.rows, self.cols)
        )

    def tocsc(self) -> scipy.sparse.csc_matrix:
        return scipy.sparse.csc_matrix(
            (self.val, (self.row, self.col)), shape=(self.rows, self.cols)
        )

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self.cols, self.rows, self.col.copy(), self.row.copy(), self.val.copy())

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.tocsr() @ np.asarray(x, dtype=float)

    def frobenius(self) -> float:
        return float(np.sqrt(np.sum(self.val**2)))

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        if self.rows != self.cols:
            return False
        a = self.tocsr()
        d = a - a.T
        scale = max(np.abs(self.val).max(initial=0.0), 1e-300)
        return np.abs(d.data).max(initial=0.0) <= rtol * scale

    def bandwidth(self) -> int:
        if self.nnz == 0:
            return 0
        return int(np.abs(self.row - self.col).max())

    def max_row_nnz(self) -> int:
        if self.nnz == 0:
            return 0
        return int(np.bincount(self.row, minlength=self.rows).max())


def as_dense(m) -> np.ndarray:
    if isinstance(m, SparseMatrix):
        return m.to_dense()
    if scipy.sparse.issparse(m):
        return np.asarray(m.todense())
    return np.asarray(m, dtype=float)


# ----------------------------------------------------------------------
# Factorizations
# ----------------------------------------------------------------------

def _check_symmetric(a: np.ndarray, rtol: float = 1e-12):
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    if np.abs(a - a.T).max(initial=0.0) > rtol * scale:
        raise ValueError("matrix is not symmetric within tolerance")


def cholesky_spd(m) -> np.ndarray:
    """Lower-triangular L with L L^T = m, for symmetric positive definite m.

    Raises :class:`NotPositiveDefinite` when a pivot falls at or below
    1e-12 * trace(m)/n, which signals (numerical) rank deficiency.
    """
    a = as_dense(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("cholesky_spd needs a square matrix")
    _check_symmetric(a)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    pivot_floor = 1e-12 * max(np.trace(a), 0.0) / n
    L = np.zeros((n, n))
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= pivot_floor:
            raise NotPositiveDefinite(f"pivot {d:.3e} at index {j} (floor {pivot_floor:.3e})")
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def schur_complement(m, block) -> np.ndarray:
    """Schur complement of the given index block: M/A = D - C A^{-1} B.

    Returns the matrix on the complement of ``block``.  Raises
    :class:`SingularBlock` when the block submatrix is not SPD.
    """
    a = as_dense(m)
    _check_symmetric(a)
    n = a.shape[0]
    block = np.asarray(sorted(set(int(i) for i in block)), dtype=np.int64)
    comp = np.asarray([i for i in range(n) if i not in set(block.tolist())], dtype=np.int64)
    if block.size == 0:
        return a.copy()
    try:
        L = cholesky_spd(a[np.ix_(block, block)])
    except NotPositiveDefinite as e:
        raise SingularBlock(str(e)) from e
    if comp.size == 0:
        return np.zeros((0, 0))
    # W = L^{-1} A_{block,comp}; Schur = A_cc - W^T W
    w = scipy.linalg.solve_triangular(L, a[np.ix_(block, comp)], lower=True)
    s = a[np.ix_(comp, comp)] - w.T @ w
    return 0.5 * (s + s.T)


# ----------------------------------------------------------------------
# Eigen extremes
# ----------------------------------------------------------------------

def _frobenius(m) -> float:
    if isinstance(m, SparseMatrix):
        return m.frobenius()
    if scipy.sparse.issparse(m):
        return float(np.sqrt((m.multiply(m)).sum()))
    return float(np.linalg.norm(np.asarray(m, dtype=float)))


def eigen_extremes(m, which: str, tol: float = KERNEL_TOL):
    """Extreme eigen information of a symmetric (PSD for kernel queries) matrix.

    which = 'largest'          -> largest eigenvalue
    which = 'kernel-dim'       -> number of eigenvalues below tol * ||m||_F
    which = 'smallest-nonzero' -> least eigenvalue at or above that cutoff

    Raises :class:`NoConvergence` if the iterative path fails to settle.
    """
    if which not in ("largest", "smallest-nonzero", "kernel-dim"):
        raise ValueError(f"unknown query {which!r}")
    n = m.shape[0] if hasattr(m, "shape") else m.rows
    fro = _frobenius(m)
    cutoff = tol * fro
    if n <= DENSE_EIG_LIMIT:
        vals = np.linalg.eigvalsh(as_dense(m))
        if which == "largest":
            return float(vals[-1])
        kdim = int(np.sum(vals < cutoff))
        if which == "kernel-dim":
            return kdim
        above = vals[vals >= cutoff]
        if above.size == 0:
            raise SingularBlock("matrix has no eigenvalue above the rank cutoff")
        return float(above[0])

    a = m.tocsr() if isinstance(m, SparseMatrix) else scipy.sparse.csr_matrix(m)
    try:
        if which == "largest":
            val = scipy.sparse.linalg.eigsh(a, k=1, which="LA", return_eigenvectors=False)
            return float(val[0])
        # Shift-invert around a small negative shift keeps the factorization
        # nonsingular even when the matrix has an exact kernel.
        shift = max(cutoff, 1e-12 * fro, 1e-300)
        k = 16
        while True:
            k = min(k, n - 2)
            vals = scipy.sparse.linalg.eigsh(
                a.tocsc(), k=k, sigma=-shift, which="LM", return_eigenvectors=False
            )
            vals = np.sort(vals)
            if vals[-1] >= cutoff or k >= n - 2:
                break
            k *= 2
        kdim = int(np.sum(vals < cutoff))
        if which == "kernel-dim":
            if kdim == vals.size and k < n - 2:
                raise NoConvergence("kernel dimension exceeds the Lanczos batch", iterations=k)
            return kdim
        above = vals[vals >= cutoff]
        if above.size == 0:
            raise SingularBlock("no eigenvalue above the rank cutoff in the Lanczos window")
        return float(above[0])
    except scipy.sparse.linalg.ArpackNoConvergence as e:
        raise NoConvergence(f"Lanczos failed to converge: {e}", residual=None) from e


def rank_by_pivoted_qr(m, tol: float = KERNEL_TOL) -> int:
    """Numerical rank via pivoted QR; oracle counterpart of kernel-dim."""
    a = as_dense(m)
    if min(a.shape) == 0:
        return 0
    r = scipy.linalg.qr(a, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r))
    return int(np.sum(diag > tol * np.linalg.norm(a)))


# ----------------------------------------------------------------------
# Matrix text format
# ----------------------------------------------------------------------
# Header line "rows cols nnz", then nnz lines "row col value" (0-indexed,
# %.17g).  Dense matrices use nnz == rows*cols and list every entry.

def write_matrix_text(path, m) -> None:
    with open(path, "w") as f:
        if isinstance(m, SparseMatrix):
            f.write(f"{m.rows} {m.cols} {m.nnz}\n")
            order = np.lexsort((m.col, m.row))
            for i in order:
                f.write(f"{m.row[i]} {m.col[i]} {m.val[i]:.17g}\n")
        else:
            a = np.asarray(m, dtype=float)
            if a.ndim == 1:
                a = a.reshape(-1, 1)
            rows, cols = a.shape
            f.write(f"{rows} {cols} {rows * cols}\n")
            for i in range(rows):
                for j in range(cols):
                    f.write(f"{i} {j} {a[i, j]:.17g}\n")


def read_matrix_text(path):
    """Read the text format; dense content (nnz == rows*cols) comes back as
    an ndarray, anything else as a SparseMatrix."""
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad header")
        rows, cols, nnz = (int(x) for x in header)
        r = np.empty(nnz, dtype=np.int64)
        c = np.empty(nnz, dtype=np.int64)
        v = np.empty(nnz)
        for i in range(nnz):
            parts = f.readline().split()
            r[i], c[i] = int(parts[0]), int(parts[1])
            v[i] = float(parts[2])
    if nnz == rows * cols:
        a = np.zeros((rows, cols))
        a[r, c] = v
        return a
    return SparseMatrix(rows, cols, r, c, v)

"""Sparse matrix assembly and direct solves.

Thin deterministic layer over scipy.sparse: triplet assembly into CSR,
matvec, a direct LU solve with a residual contract, and named block-system
assembly for the coupled step systems.
"""

import re

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SOLVE_RTOL = 1e-8
PIVOT_RTOL = 1e-14


class SingularMatrixError(RuntimeError):
    """Raised when LU factorization hits a (near-)zero pivot.

    ``position`` is the original column index of the failing pivot, or -1
    when the factorization aborted before one could be identified.
    """

    def __init__(self, message, position=-1):
        super().__init__(message)
        self.position = position


class ResidualContractError(RuntimeError):
    """Solve finished but the relative residual exceeded the contract."""


def from_triplets(n_rows, n_cols, triplets):
    """Build a CSR matrix from (row, col, value) triplets, summing duplicates."""
    if len(triplets) == 0:
        return sp.csr_matrix((n_rows, n_cols))
    rows, cols, vals = zip(*triplets)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows
                      or cols.min() < 0 or cols.max() >= n_cols):
        raise IndexError("triplet index out of range")
    a = sp.coo_matrix((np.asarray(vals, dtype=float), (rows, cols)),
                      shape=(n_rows, n_cols)).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def matvec(a, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != a.shape[1]:
        raise ValueError("dimension mismatch in matvec")
    return a @ x


def factorize(a):
    """LU-factorize a square sparse matrix with deterministic ordering.

    Near-zero pivots (below 1e-14 * max|A|) are reported as singular with
    the offending column index.
    """
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    a_csc = sp.csc_matrix(a)
    try:
        lu = spla.splu(a_csc, permc_spec="COLAMD")
    except RuntimeError as exc:  # SuperLU signals exact singularity
        m = re.search(r"\d+", str(exc))
        pos = int(m.group()) if m else -1
        raise SingularMatrixError(f"singular matrix: {exc}", pos) from exc
    amax = np.abs(a_csc.data).max() if a_csc.nnz else 0.0
    pivots = np.abs(lu.U.diagonal())
    bad = np.where(pivots < PIVOT_RTOL * amax)[0]
    if bad.size:
        pos = int(lu.perm_c[bad[0]])
        raise SingularMatrixError(
            f"numerically singular matrix: pivot {pivots[bad[0]]:.3e} "
            f"at column {pos}", pos)
    return lu


def solve(a, b, lu=None):
    """Solve A x = b with relative residual <= 1e-8.

    One step of iterative refinement is applied if the direct solve misses
    the contract; a persistent miss raises ResidualContractError.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise ValueError("dimension mismatch in solve")
    if lu is None:
        lu = factorize(a)
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    res = np.linalg.norm(a @ x - b)
    if res > SOLVE_RTOL * bnorm:
        x = x + lu.solve(b - a @ x)
        res = np.linalg.norm(a @ x - b)
        if res > SOLVE_RTOL * bnorm:
            raise ResidualContractError(
                f"solve residual {res / bnorm:.3e} exceeds {SOLVE_RTOL:.0e}")
    return x


class BlockSystem:
    """Square sparse system over named field blocks of equal size.

    ``layout`` maps block names to offsets; matrix and rhs cover the
    concatenated unknowns.
    """

    def __init__(self, names, block_size, matrix, rhs):
        self.names = list(names)
        self.block_size = block_size
        self.matrix = matrix
        self.rhs = rhs

    def offset(self, name):
        return self.names.index(name) * self.block_size

    def set_rhs(self, name, values):
        off = self.offset(name)
        self.rhs[off:off + self.block_size] = values

    def extract(self, x, name):
        off = self.offset(name)
        return x[off:off + self.block_size]

    def solve(self):
        return solve(self.matrix, self.rhs)


def assemble_block(names, block_size, contributions):
    """Assemble a BlockSystem from per-block contributions.

    Each contribution is (block_row_name, block_col_name, matrix) with a
    block_size x block_size sparse or dense matrix (or a triplet list);
    overlapping contributions are summed.
    """
    names = list(names)
    n = block_size * len(names)
    offsets = {name: i * block_size for i, name in enumerate(names)}
    rows, cols, vals = [], [], []
    for row_name, col_name, mat in contributions:
        if row_name not in offsets or col_name not in offsets:
            raise KeyError(f"unknown block name {row_name!r}/{col_name!r}")
        if isinstance(mat, list):
            mat = from_triplets(block_size, block_size, mat)
        mat = sp.coo_matrix(mat)
        if mat.shape != (block_size, block_size):
            raise ValueError("contribution has wrong block dimensions")
        rows.append(mat.row + offsets[row_name])
        cols.append(mat.col + offsets[col_name])
        vals.append(mat.data)
    if rows:
        matrix = sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
        matrix.sum_duplicates()
        matrix.sort_indices()
    else:
        matrix = sp.csr_matrix((n, n))
    return BlockSystem(names, block_size, matrix, np.zeros(n))


def dump_coo(a, path):
    """Write a matrix in coordinate text format: 'n_rows n_cols nnz' header."""
    coo = sp.coo_matrix(a)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")

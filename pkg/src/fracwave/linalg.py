"""Sparse SPD linear algebra: CSR storage, COO assembly, Jacobi-PCG solver.

The solver is a plain sequential conjugate-gradient loop so that repeated
solves on identical inputs are bitwise identical; matrix-vector products go
through scipy's (single-threaded, deterministic) CSR kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class CgError(RuntimeError):
    """Conjugate-gradient failure; carries the last relative residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class PreconditionerError(ValueError):
    """Jacobi preconditioner cannot be formed (nonpositive diagonal)."""


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row matrix with sorted, duplicate-free columns."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def scipy(self) -> sp.csr_matrix:
        """Zero-copy scipy view of this matrix."""
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n)
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.scipy() @ x

    def diagonal(self) -> np.ndarray:
        return self.scipy().diagonal()

    def to_dense(self) -> np.ndarray:
        return self.scipy().toarray()

    def with_values(self, values: np.ndarray) -> "CsrMatrix":
        """Same sparsity, new values array."""
        if values.shape != self.values.shape:
            raise ValueError("values length does not match sparsity pattern")
        return CsrMatrix(self.n, self.row_offsets, self.col_indices, values)


@dataclass
class CooBuilder:
    """Triplet accumulator; duplicates are summed on conversion to CSR."""

    n: int
    rows: list = field(default_factory=list)
    cols: list = field(default_factory=list)
    vals: list = field(default_factory=list)

    def add(self, i: int, j: int, v: float) -> None:
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(f"entry ({i}, {j}) out of bounds for size {self.n}")
        self.rows.append(i)
        self.cols.append(j)
        self.vals.append(v)

    def add_many(self, rows, cols, vals) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (
            rows.min() < 0 or rows.max() >= self.n or cols.min() < 0 or cols.max() >= self.n
        ):
            raise IndexError(f"triplet index out of bounds for size {self.n}")
        self.rows.extend(rows.tolist())
        self.cols.extend(cols.tolist())
        self.vals.extend(np.asarray(vals, dtype=np.float64).tolist())

    def to_csr(self) -> CsrMatrix:
        return coo_to_csr(self)


@dataclass(frozen=True)
class SparsityPattern:
    """Frozen COO -> CSR mapping for repeated assembly on a fixed layout.

    Built once from the (row, col) arrays of an element loop; per step only
    the value array changes, so assembly reduces to a permutation gather and
    a segmented sum in a fixed order (bitwise reproducible).
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    perm: np.ndarray
    segment_starts: np.ndarray
    diag_positions: np.ndarray

    @classmethod
    def build(cls, n: int, rows: np.ndarray, cols: np.ndarray) -> "SparsityPattern":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise IndexError(f"triplet index out of bounds for size {n}")
        # Stable sort keeps duplicate contributions in insertion order.
        perm = np.lexsort((cols, rows))
        rs, cs = rows[perm], cols[perm]
        if rs.size:
            new_entry = np.empty(rs.size, dtype=bool)
            new_entry[0] = True
            new_entry[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
            starts = np.flatnonzero(new_entry)
            urows, ucols = rs[starts], cs[starts]
        else:
            starts = np.empty(0, dtype=np.int64)
            urows = ucols = np.empty(0, dtype=np.int64)
        row_offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(row_offsets[1:], urows, 1)
        row_offsets = np.cumsum(row_offsets)
        diag_positions = np.flatnonzero(urows == ucols)
        return cls(
            n=n,
            row_offsets=row_offsets,
            col_indices=ucols,
            perm=perm,
            segment_starts=starts,
            diag_positions=diag_positions,
        )

    def assemble(self, triplet_values: np.ndarray) -> CsrMatrix:
        vals = np.asarray(triplet_values, dtype=np.float64).ravel()
        if vals.size != self.perm.size:
            raise ValueError("triplet value count does not match pattern")
        summed = np.add.reduceat(vals[self.perm], self.segment_starts) if vals.size else vals
        return CsrMatrix(self.n, self.row_offsets, self.col_indices, summed)


def coo_to_csr(builder: CooBuilder) -> CsrMatrix:
    """Finalize a triplet builder: sum duplicates, sort columns per row."""
    rows = np.asarray(builder.rows, dtype=np.int64)
    cols = np.asarray(builder.cols, dtype=np.int64)
    vals = np.asarray(builder.vals, dtype=np.float64)
    pattern = SparsityPattern.build(builder.n, rows, cols)
    return pattern.assemble(vals)


def cg_solve(
    A: CsrMatrix | sp.csr_matrix,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Returns x with ||A x - b|| <= tol * ||b||. Iteration order and
    reductions are fixed, so identical inputs give identical bits.

    Raises
    ------
    PreconditionerError
        If the diagonal has a nonpositive entry.
    CgError
        On non-convergence within max_iter (carries the final relative
        residual) or loss of positive curvature (non-SPD operator).
    """
    A_sp = A.scipy() if isinstance(A, CsrMatrix) else A
    n = b.shape[0]
    if max_iter is None:
        max_iter = 20 * max(n, 1)
    if n == 0:
        return np.empty(0)

    diag = A_sp.diagonal()
    if (diag <= 0).any():
        bad = int(np.argmax(diag <= 0))
        raise PreconditionerError(
            f"nonpositive diagonal entry {diag[bad]!r} at index {bad}"
        )
    inv_diag = 1.0 / diag

    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n)

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = x0.astype(np.float64, copy=True)
        r = b - A_sp @ x

    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    res = np.linalg.norm(r)
    if res <= tol * b_norm:
        return x

    for _ in range(max_iter):
        Ap = A_sp @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise CgError(
                f"operator is not positive definite (p'Ap = {pAp!r})",
                residual=res / b_norm,
            )
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        res = np.linalg.norm(r)
        if res <= tol * b_norm:
            return x
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    raise CgError(
        f"no convergence in {max_iter} iterations (relative residual {res / b_norm:.3e})",
        residual=res / b_norm,
    )

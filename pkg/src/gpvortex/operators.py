"""Shared discrete operators for the travelling-wave equation.

Interior-node stencils of the travelling-wave residual, the sparse
real-symmetric matrix of the linearized operator on the interior
unknowns (Dirichlet data on the box edge), and the index machinery that
restricts linear solves to the symmetric quarter of the grid.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .field_core import ComplexField, Grid


def tw_residual_values(values: np.ndarray, grid: Grid, c: float) -> np.ndarray:
    """-ic d2 v - lap v - (1-|v|^2) v on interior nodes; boundary rows zero.

    The boundary ring of ``values`` enters the interior stencils as
    Dirichlet data, matching the linearized matrix exactly.
    """
    out = np.zeros_like(values, dtype=complex)
    v = values
    hx, hy = grid.hx, grid.hy
    lap = ((v[2:, 1:-1] - 2.0 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / hx**2
           + (v[1:-1, 2:] - 2.0 * v[1:-1, 1:-1] + v[1:-1, :-2]) / hy**2)
    d2 = (v[1:-1, 2:] - v[1:-1, :-2]) / (2.0 * hy)
    mid = v[1:-1, 1:-1]
    out[1:-1, 1:-1] = -1j * c * d2 - lap - (1.0 - np.abs(mid) ** 2) * mid
    return out


def _lap_1d(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="csr") / h**2


def _d_1d(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-1.0, 1.0], [-1, 1], shape=(n, n), format="csr") / (2.0 * h)


def linearized_matrix(Q: ComplexField, c: float) -> sp.csr_matrix:
    """Real 2m x 2m matrix of the linearized operator on interior nodes.

    Unknowns are [Re phi; Im phi] flattened row-major over the interior;
    the matrix is symmetric for the plain real pairing (uniform cell
    weights) because the centered transport block is antisymmetric.
    """
    g = Q.grid
    mx, my = g.nx - 2, g.ny - 2
    lap = sp.kron(_lap_1d(mx, g.hx), sp.identity(my, format="csr")) \
        + sp.kron(sp.identity(mx, format="csr"), _lap_1d(my, g.hy))
    d2 = sp.kron(sp.identity(mx, format="csr"), _d_1d(my, g.hy))

    q = Q.values[1:-1, 1:-1].ravel()
    a, b = q.real, q.imag
    w = 1.0 - (a * a + b * b)
    base = -lap - sp.diags(w)
    A = sp.bmat(
        [[base + sp.diags(2.0 * a * a), c * d2 + sp.diags(2.0 * a * b)],
         [-c * d2 + sp.diags(2.0 * a * b), base + sp.diags(2.0 * b * b)]],
        format="csr")
    return A


def interior_to_real(values: np.ndarray) -> np.ndarray:
    """Pack the interior of a complex array into the real dof vector."""
    v = values[1:-1, 1:-1].ravel()
    return np.concatenate([v.real, v.imag])


def real_to_interior(x: np.ndarray, grid: Grid) -> np.ndarray:
    """Unpack a real dof vector into a full-grid complex array (zero ring)."""
    m = (grid.nx - 2) * (grid.ny - 2)
    out = np.zeros((grid.nx, grid.ny), dtype=complex)
    out[1:-1, 1:-1] = (x[:m] + 1j * x[m:]).reshape(grid.nx - 2, grid.ny - 2)
    return out


def field_from_real(x: np.ndarray, grid: Grid) -> ComplexField:
    return ComplexField(grid, real_to_interior(x, grid))


class QuarterMaps:
    """Prolongation/restriction between full interior dofs and the
    symmetric quarter (even in x1, conjugate-even in x2)."""

    def __init__(self, grid: Grid):
        nx, ny = grid.nx, grid.ny
        mx, my = nx - 2, ny - 2
        m = mx * my
        cx, cy = (nx - 1) // 2, (ny - 1) // 2
        # interior index arrays (offset by 1 against full-grid indices)
        I = np.arange(1, nx - 1)[:, None] * np.ones((1, my), dtype=int)
        J = np.ones((mx, 1), dtype=int) * np.arange(1, ny - 1)[None, :]
        Im = cx + np.abs(I - cx)
        Jm = cy + np.abs(J - cy)
        sgn = np.where(J >= cy, 1.0, -1.0)

        qi = np.arange(cx, nx - 1)
        qj = np.arange(cy, ny - 1)
        nqx, nqy = qi.size, qj.size
        mq = nqx * nqy
        qindex = -np.ones((nx, ny), dtype=int)
        qindex[np.ix_(qi, qj)] = np.arange(mq).reshape(nqx, nqy)

        full_q = qindex[Im, Jm].ravel()
        rows = np.arange(m)
        Pu = sp.coo_matrix((np.ones(m), (rows, full_q)), shape=(m, mq))
        Pv = sp.coo_matrix((sgn.ravel(), (rows, full_q)), shape=(m, mq))
        self.P = sp.bmat([[Pu, None], [None, Pv]], format="csr")

        # representative full-interior dof for each quarter dof
        rep = np.empty(mq, dtype=int)
        k = (I - 1) * my + (J - 1)
        mask = (I == Im) & (J == Jm)
        rep[qindex[I[mask], J[mask]]] = k[mask]
        self.rep_rows = np.concatenate([rep, rep + m])

        # quarter v-dofs on the x2 axis are pinned to zero
        axis = qindex[qi, cy]
        self.pinned = mq + axis
        self.mq = mq
        self.m = m

    def reduce(self, A: sp.csr_matrix) -> sp.csr_matrix:
        """Restrict the full linearized matrix to the symmetric subspace."""
        Aq = A[self.rep_rows, :] @ self.P
        Aq = Aq.tolil()
        for r in self.pinned:
            Aq.rows[r] = [int(r)]
            Aq.data[r] = [1.0]
        return Aq.tocsr()

    def reduce_rhs(self, b: np.ndarray, pin_values: np.ndarray | None = None):
        bq = b[self.rep_rows].copy()
        bq[self.pinned] = 0.0 if pin_values is None else pin_values
        return bq

    def prolong(self, xq: np.ndarray) -> np.ndarray:
        return self.P @ xq

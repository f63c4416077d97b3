"""Sparse stencils on a flattened grid: 5-point Laplacian and Rouy-Tourin upwind gradient."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import Grid


class Stencil:
    """Index bookkeeping for one grid (nodes flattened in C order)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.h = grid.h
        n, m = grid.n, grid.nodes
        N = grid.size
        idx = np.arange(N).reshape(grid.shape)
        self.interior = grid.interior(1).ravel()
        self.boundary = ~self.interior
        # neighbours[k, 0] is the backward neighbour along axis k, [k, 1] forward; -1 if absent
        self.neighbours = np.full((n, 2, N), -1, dtype=np.int64)
        for k in range(n):
            back = np.full(grid.shape, -1, dtype=np.int64)
            fwd = np.full(grid.shape, -1, dtype=np.int64)
            sl_hi = [slice(None)] * n
            sl_lo = [slice(None)] * n
            sl_hi[k] = slice(1, None)
            sl_lo[k] = slice(None, -1)
            back[tuple(sl_hi)] = idx[tuple(sl_lo)]
            fwd[tuple(sl_lo)] = idx[tuple(sl_hi)]
            self.neighbours[k, 0] = back.ravel()
            self.neighbours[k, 1] = fwd.ravel()
        # inward neighbour used when the upwind gradient at a boundary node degenerates
        self.inward = np.full(N, -1, dtype=np.int64)
        multi = np.stack(np.unravel_index(np.arange(N), grid.shape))
        for k in reversed(range(n)):
            at_lo = multi[k] == 0
            at_hi = multi[k] == m - 1
            self.inward[at_lo] = self.neighbours[k, 1, at_lo]
            self.inward[at_hi] = self.neighbours[k, 0, at_hi]
        self.laplacian = self._laplacian()

    def _laplacian(self) -> sp.csr_matrix:
        """Discrete Laplacian with rows only on interior nodes (boundary rows are zero)."""
        N = self.grid.size
        inner = np.flatnonzero(self.interior)
        rows = [inner]
        cols = [inner]
        vals = [np.full(inner.size, -2.0 * self.grid.n / self.h**2)]
        for k in range(self.grid.n):
            for side in range(2):
                rows.append(inner)
                cols.append(self.neighbours[k, side, inner])
                vals.append(np.full(inner.size, 1.0 / self.h**2))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
        )

    def upwind(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis upwind slopes ``a_k = max(D^-u, -D^+u, 0)`` and the neighbour each one uses.

        Returns ``(a, nbr)`` of shape ``(n, N)``; ``nbr`` is -1 where ``a_k == 0``.
        Missing neighbours (box faces) never contribute.
        """
        n = self.grid.n
        a = np.zeros((n, u.size))
        nbr = np.full((n, u.size), -1, dtype=np.int64)
        for k in range(n):
            best = np.zeros(u.size)
            for side in range(2):
                j = self.neighbours[k, side]
                ok = j >= 0
                d = np.where(ok, (u - u[np.where(ok, j, 0)]) / self.h, -np.inf)
                take = d > best
                best = np.where(take, d, best)
                nbr[k] = np.where(take, j, nbr[k])
            a[k] = best
        return a, nbr

    def eikonal_rows(self, u: np.ndarray, rows: np.ndarray):
        """Linearization of ``|D^up u| - 1`` on the given rows.

        Returns ``(G, (r, c, v))``: the residual on those rows and COO triplets
        of its Jacobian.  The Jacobian of ``|a|`` in direction ``a/|a|`` is
        exact (the Howard policy for the eikonal branch).  Rows with ``a = 0``
        fall back to a one-sided slope toward the inward (or any) neighbour.
        """
        a, nbr = self.upwind(u)
        a = a[:, rows]
        nbr = nbr[:, rows]
        norm = np.sqrt(np.sum(a * a, axis=0))
        G = norm - 1.0
        r_list, c_list, v_list = [], [], []
        live = norm > 0
        safe = np.where(live, norm, 1.0)
        diag = np.zeros(rows.size)
        for k in range(self.grid.n):
            use = live & (nbr[k] >= 0)
            w = np.where(use, a[k] / safe, 0.0) / self.h
            diag += w
            r_list.append(rows[use])
            c_list.append(nbr[k][use])
            v_list.append(-w[use])
        dead = ~live
        if np.any(dead):
            fallback = self.inward[rows[dead]]
            missing = fallback < 0
            if np.any(missing):
                # interior node: pick its smallest neighbour
                dead_rows = rows[dead][missing]
                cand = self.neighbours[:, :, dead_rows].reshape(-1, dead_rows.size)
                vals = np.where(cand >= 0, u[np.where(cand >= 0, cand, 0)], np.inf)
                fallback[missing] = cand[np.argmin(vals, axis=0), np.arange(dead_rows.size)]
            diag[dead] = 1.0 / self.h
            r_list.append(rows[dead])
            c_list.append(fallback)
            v_list.append(np.full(fallback.size, -1.0 / self.h))
        r_list.append(rows)
        c_list.append(rows)
        v_list.append(diag)
        return G, (np.concatenate(r_list), np.concatenate(c_list), np.concatenate(v_list))

    def upwind_norm_sq(self, u: np.ndarray) -> np.ndarray:
        a, _ = self.upwind(u)
        return np.sum(a * a, axis=0)

    def upwind_norm_sq_jacobian(self, u: np.ndarray, rows: np.ndarray, scale: np.ndarray):
        """COO triplets of ``scale * d|D^up u|^2 / du`` on the given rows."""
        a, nbr = self.upwind(u)
        r_list, c_list, v_list = [], [], []
        diag = np.zeros(rows.size)
        for k in range(self.grid.n):
            ak = a[k, rows]
            jk = nbr[k, rows]
            use = jk >= 0
            w = scale * 2.0 * ak / self.h
            diag += np.where(use, w, 0.0)
            r_list.append(rows[use])
            c_list.append(jk[use])
            v_list.append(-w[use])
        r_list.append(rows)
        c_list.append(rows)
        v_list.append(diag)
        return np.concatenate(r_list), np.concatenate(c_list), np.concatenate(v_list)

"""Tridiagonal assembly of the interface-modified Schrodinger operators.

Node conventions follow the fictive-point construction of the modified
discrete Laplacian: the node at a carries the exterior trace u(a-), the node
at b carries the interior trace u(b-).  The sampled potential therefore
occupies the half-open range (a, b]: zero at idx_a, barrier values from
idx_a+1 through idx_b.  Exterior rows are scaled by exp(-2*theta); interface
rows use s = theta0 + theta.  Domain truncation is a hard (Dirichlet) wall.
"""

from __future__ import annotations

import cmath
from typing import Optional

import numpy as np

from .model import Grid, PotentialSpec


def potential_diagonal(spec: PotentialSpec, t: Optional[float] = None,
                       include_wells: bool = True,
                       h_for_delta: Optional[float] = None) -> np.ndarray:
    """Full-grid diagonal of V - W^h with the trace convention.

    Delta wells contribute -alpha_j(t) * h / dx at their node when
    ``h_for_delta`` is given.
    """
    g = spec.grid
    diag = np.zeros(g.n_points)
    vals = spec.barrier_at(t).copy()
    if include_wells:
        vals = vals - spec.w1_at(t)
    diag[g.idx_a + 1:g.idx_b + 1] = vals[1:]
    if include_wells and h_for_delta is not None:
        for idx, alpha in spec.delta_amplitudes(t):
            diag[idx] -= alpha * h_for_delta / g.dx
    return diag


def interface_tridiagonal(grid: Grid, diag_potential: np.ndarray, h_eff: float,
                          theta0: complex, theta: complex = 0.0):
    """(dl, d, du) of H = -h_eff^2 * eta * Lap_mod + diag_potential.

    ``eta`` multiplies the exterior rows by exp(-2*theta); the interface rows
    at idx_a, idx_a+1, idx_b, idx_b+1 carry the fictive-point stencils with
    s = theta0 + theta.
    """
    n = grid.n_points
    ja, jb = grid.idx_a, grid.idx_b
    c2 = h_eff * h_eff / (grid.dx * grid.dx)
    ext = cmath.exp(-2 * theta)
    s = theta0 + theta

    dl = np.empty(n - 1, dtype=complex)
    d = np.empty(n, dtype=complex)
    du = np.empty(n - 1, dtype=complex)
    # bulk: interior rows unscaled, exterior rows scaled by ext
    dl[:] = -c2
    du[:] = -c2
    d[:] = 2 * c2
    d[:ja] = 2 * c2 * ext
    d[jb + 1:] = 2 * c2 * ext
    dl[:ja] = -c2 * ext          # dl[j-1] feeds row j: rows 1..ja
    dl[jb:] = -c2 * ext          # rows jb+1 .. n-1
    du[:ja] = -c2 * ext          # du[j] feeds row j: rows 0..ja-1
    du[jb + 1:] = -c2 * ext      # rows jb+1 ..

    # row ja (exterior trace at a): u_{ja-1} - (1+e^s) u_ja + e^{3s/2} u_{ja+1}
    dl[ja - 1] = -c2 * ext
    d[ja] = c2 * ext * (1 + cmath.exp(s))
    du[ja] = -c2 * ext * cmath.exp(1.5 * s)
    # row ja+1 (first interior): e^{-s/2} u_ja - 2 u_{ja+1} + u_{ja+2}
    dl[ja] = -c2 * cmath.exp(-s / 2)
    d[ja + 1] = 2 * c2
    du[ja + 1] = -c2
    # row jb (interior trace at b): u_{jb-1} - (1+e^{-s}) u_jb + e^{-3s/2} u_{jb+1}
    dl[jb - 1] = -c2
    d[jb] = c2 * (1 + cmath.exp(-s))
    du[jb] = -c2 * cmath.exp(-1.5 * s)
    # row jb+1 (first exterior): e^{s/2} u_jb - 2 u_{jb+1} + u_{jb+2}
    dl[jb] = -c2 * ext * cmath.exp(s / 2)
    d[jb + 1] = 2 * c2 * ext

    d = d + diag_potential
    return dl, d, du


def nd_split(grid: Grid, dl, d, du, h_eff: float, theta0: complex,
             theta: complex = 0.0, z: complex = 0.0):
    """Decoupled Neumann-exterior / Dirichlet-interior counterpart of
    (H - z) given its monolithic diagonals (with z already subtracted).

    Returns (nd_dl, nd_d, nd_du, rows, row_deltas): the four modified row
    indices and for each the sparse difference (monolithic minus decoupled)
    as {column: value}.  The b-side exterior trace is kept in the rescaled
    variable that leaves the first exterior row untouched, which is what
    makes the correction exactly rank 4.
    """
    ja, jb = grid.idx_a, grid.idx_b
    c2 = h_eff * h_eff / (grid.dx * grid.dx)
    ext = cmath.exp(-2 * theta)
    s = theta0 + theta

    nd_dl, nd_d, nd_du = dl.copy(), d.copy(), du.copy()
    # exterior-left block: Neumann closure at the a- trace
    nd_dl[ja - 1] = -2 * c2 * ext
    nd_d[ja] = 2 * c2 * ext - z
    nd_du[ja] = 0.0
    # interior block: Dirichlet data zero at both ends
    nd_dl[ja] = 0.0
    nd_du[jb - 1] = 0.0
    # exterior-right block: Neumann closure, trace variable rescaled by e^{s/2}
    nd_dl[jb - 1] = 0.0
    nd_d[jb] = (2 * c2 * ext - z) * cmath.exp(s / 2)
    nd_du[jb] = -2 * c2 * ext

    rows = (ja, ja + 1, jb - 1, jb)
    deltas = []
    for r in rows:
        cols = {}
        if r > 0 and dl[r - 1] != nd_dl[r - 1]:
            cols[r - 1] = dl[r - 1] - nd_dl[r - 1]
        if d[r] != nd_d[r]:
            cols[r] = d[r] - nd_d[r]
        if r < grid.n_points - 1 and du[r] != nd_du[r]:
            cols[r + 1] = du[r] - nd_du[r]
        deltas.append(cols)
    return nd_dl, nd_d, nd_du, rows, deltas

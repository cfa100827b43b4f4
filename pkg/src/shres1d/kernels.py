"""Hot numeric kernels: complex tridiagonal solves and Crank-Nicolson loops.

Two interchangeable backends:

* ``numba`` (default): the kernels below are compiled with ``@njit``.
* fallback: plain numpy loops / LAPACK banded solves via scipy.

Set the environment variable ``SHRES1D_NUMBA=0`` (before import) to force the
fallback path.  ``BACKEND`` records which one is active;
``benchmarks/bench_kernels.py`` times both.
"""

import os

import numpy as np

_flag = os.environ.get("SHRES1D_NUMBA", "1").strip().lower()
USE_NUMBA = _flag not in ("0", "false", "off", "no")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:
        USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def _tridiag_factor(dl, d, du):
    """LU factors of a tridiagonal matrix (no pivoting).

    Returns (beta, gam, min_ratio): modified diagonal, scaled superdiagonal
    and the smallest |pivot| relative to the largest, for singularity
    detection.  Callers must keep the subdiagonal ``dl`` alongside.
    """
    n = d.shape[0]
    beta = np.empty(n, np.complex128)
    gam = np.empty(n - 1, np.complex128)
    beta[0] = d[0]
    pmin = abs(d[0])
    pmax = abs(d[0])
    for i in range(1, n):
        gam[i - 1] = du[i - 1] / beta[i - 1]
        beta[i] = d[i] - dl[i - 1] * gam[i - 1]
        p = abs(beta[i])
        if p < pmin:
            pmin = p
        if p > pmax:
            pmax = p
    if pmax == 0.0:
        return beta, gam, 0.0
    return beta, gam, pmin / pmax


def _tridiag_solve_factored(dl, beta, gam, rhs):
    """Solve with precomputed Thomas factors."""
    n = beta.shape[0]
    x = np.empty(n, np.complex128)
    x[0] = rhs[0] / beta[0]
    for i in range(1, n):
        x[i] = (rhs[i] - dl[i - 1] * x[i - 1]) / beta[i]
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - gam[i] * x[i + 1]
    return x


def _tbc_convolve(kern, trace, step):
    """sum_{k=1..step} kern[k] * trace[step-k] (discrete TBC memory term)."""
    s = 0.0 + 0.0j
    kmax = min(step, kern.shape[0] - 1)
    for k in range(1, kmax + 1):
        s += kern[k] * trace[step - k]
    return s


def _cn_evolve(lhs_dl, lhs_beta, lhs_gam, rhs_dl, rhs_d, rhs_du,
               u0, n_steps, kern, use_tbc, snap_every):
    """Run the full Crank-Nicolson loop.

    The LHS matrix is passed pre-factored (constant in time).  With
    ``use_tbc`` the first/last RHS entries are the boundary convolution
    sums; otherwise they come from the matrix rows (Dirichlet walls).
    Returns (snapshots, norms, left_trace, right_trace); traces hold the
    history of the nodes adjacent to the boundaries.
    """
    n = u0.shape[0]
    n_snap = n_steps // snap_every + 1
    snaps = np.empty((n_snap, n), np.complex128)
    norms = np.empty(n_steps + 1, np.float64)
    ltrace = np.zeros(n_steps + 1, np.complex128)
    rtrace = np.zeros(n_steps + 1, np.complex128)
    rhs = np.empty(n, np.complex128)
    u = u0.copy()
    snaps[0] = u
    norms[0] = np.sqrt(np.sum(np.abs(u) ** 2))
    ltrace[0] = u[1]
    rtrace[0] = u[n - 2]
    for step in range(1, n_steps + 1):
        rhs[0] = rhs_d[0] * u[0] + rhs_du[0] * u[1]
        for j in range(1, n - 1):
            rhs[j] = rhs_dl[j - 1] * u[j - 1] + rhs_d[j] * u[j] + rhs_du[j] * u[j + 1]
        rhs[n - 1] = rhs_dl[n - 2] * u[n - 2] + rhs_d[n - 1] * u[n - 1]
        if use_tbc:
            rhs[0] = _tbc_convolve(kern, ltrace, step)
            rhs[n - 1] = _tbc_convolve(kern, rtrace, step)
        u = _tridiag_solve_factored(lhs_dl, lhs_beta, lhs_gam, rhs)
        ltrace[step] = u[1]
        rtrace[step] = u[n - 2]
        norms[step] = np.sqrt(np.sum(np.abs(u) ** 2))
        if step % snap_every == 0:
            snaps[step // snap_every] = u
    return snaps, norms, ltrace, rtrace


if USE_NUMBA:
    tridiag_factor = njit(cache=True)(_tridiag_factor)
    tridiag_solve_factored = njit(cache=True)(_tridiag_solve_factored)
    tbc_convolve = njit(cache=True)(_tbc_convolve)
    # _cn_evolve calls the two helpers through module globals; rebind them to
    # the compiled versions before compiling the driver itself
    _tbc_convolve = tbc_convolve
    _tridiag_solve_factored = tridiag_solve_factored
    cn_evolve = njit(cache=True)(_cn_evolve)
else:
    from scipy.linalg import solve_banded

    tridiag_factor = _tridiag_factor
    tridiag_solve_factored = _tridiag_solve_factored

    def tbc_convolve(kern, trace, step):
        kmax = min(step, kern.shape[0] - 1)
        if kmax < 1:
            return 0.0 + 0.0j
        return np.dot(kern[1:kmax + 1], trace[step - 1::-1][:kmax])

    def cn_evolve(lhs_dl, lhs_beta, lhs_gam, rhs_dl, rhs_d, rhs_du,
                  u0, n_steps, kern, use_tbc, snap_every):
        n = u0.shape[0]
        lhs_d = np.empty(n, np.complex128)
        lhs_d[0] = lhs_beta[0]
        lhs_d[1:] = lhs_beta[1:] + lhs_dl * lhs_gam
        lhs_du = lhs_gam * lhs_beta[:-1]
        ab = np.zeros((3, n), np.complex128)
        ab[0, 1:] = lhs_du
        ab[1, :] = lhs_d
        ab[2, :-1] = lhs_dl
        n_snap = n_steps // snap_every + 1
        snaps = np.empty((n_snap, n), np.complex128)
        norms = np.empty(n_steps + 1, np.float64)
        ltrace = np.zeros(n_steps + 1, np.complex128)
        rtrace = np.zeros(n_steps + 1, np.complex128)
        rhs = np.empty(n, np.complex128)
        u = u0.copy()
        snaps[0] = u
        norms[0] = np.linalg.norm(u)
        ltrace[0] = u[1]
        rtrace[0] = u[n - 2]
        for step in range(1, n_steps + 1):
            rhs[0] = rhs_d[0] * u[0] + rhs_du[0] * u[1]
            rhs[1:-1] = rhs_dl[:-1] * u[:-2] + rhs_d[1:-1] * u[1:-1] + rhs_du[1:] * u[2:]
            rhs[-1] = rhs_dl[-1] * u[-2] + rhs_d[-1] * u[-1]
            if use_tbc:
                rhs[0] = tbc_convolve(kern, ltrace, step)
                rhs[-1] = tbc_convolve(kern, rtrace, step)
            u = solve_banded((1, 1), ab, rhs)
            ltrace[step] = u[1]
            rtrace[step] = u[n - 2]
            norms[step] = np.linalg.norm(u)
            if step % snap_every == 0:
                snaps[step // snap_every] = u
        return snaps, norms, ltrace, rtrace

"""Closed-form scattering data of the free interface model and generalized
eigenfunctions of the filled-well model (barrier only, wells off).

The interface conditions at a and b couple boundary traces through the
complex parameter theta0; the free model has explicit plane-wave
coefficients, the filled-well model is solved as a Robin boundary value
problem on [a, b].
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded, LinAlgError

from .errors import ConstraintViolation, DegenerateDenominator, SingularRobinSystem
from .model import PotentialSpec

_SMALL_THETA0 = 0.2


def branch_sqrt(z: complex) -> complex:
    """Complex square root with the determination arg z in [-pi/2, 3*pi/2).

    Coincides with |k| on the positive real axis and continues analytically
    across it into the lower half plane down to arg z = -pi/2.
    """
    arg = cmath.phase(z)
    if arg < -math.pi / 2:
        arg += 2 * math.pi
    return math.sqrt(abs(z)) * cmath.exp(0.5j * arg)


@dataclass(frozen=True)
class InterfaceParams:
    """Interface parameter theta0, exterior scaling theta and semiclassical h."""

    theta0: complex
    h: float
    theta: complex = 0.0

    def __post_init__(self):
        if abs(self.theta0.imag) >= math.pi / 4 or abs(self.theta.imag) >= math.pi / 4:
            raise ConstraintViolation("imaginary parts of theta0, theta must stay below pi/4")
        if self.h <= 0:
            raise ConstraintViolation("h must be positive")

    @property
    def c_plus(self) -> complex:
        return cmath.exp(self.theta0 / 2) + cmath.exp(1.5 * self.theta0)

    @property
    def c_minus(self) -> complex:
        return cmath.exp(self.theta0 / 2) - cmath.exp(1.5 * self.theta0)


@dataclass(frozen=True)
class ScatteringCoeffs:
    """Plane-wave coefficients A, B, T, R and the denominator d at momentum k.

    ``a_coef``/``b_coef`` are the interior coefficients of the free model;
    they are set to 0 when the coefficients were reconstructed from a
    filled-well eigenfunction (no interior plane waves exist there).
    """

    a_coef: complex
    b_coef: complex
    t_coef: complex
    r_coef: complex
    d: complex
    k: float

    @property
    def side(self) -> int:
        return 1 if self.k > 0 else -1


def free_coeffs(k: float, params: InterfaceParams, a: float, b: float) -> ScatteringCoeffs:
    """Scattering coefficients of the free interface model at momentum k != 0."""
    if k == 0:
        raise ConstraintViolation("momentum k must be nonzero")
    if params.theta != 0:
        raise ConstraintViolation("free coefficients are defined for theta = 0")
    h = params.h
    length = b - a
    cp, cm = params.c_plus, params.c_minus

    def _positive(kp: float):
        phase = cmath.exp(1j * kp * length / h)
        d = cp * cp / phase - cm * cm * phase
        if abs(d) < 1e-14:
            raise DegenerateDenominator(f"|d(theta0, k)| = {abs(d):.2e} at k = {kp}")
        e2a = cmath.exp(2j * kp * a / h)
        a_c = 2 * cp / (phase * d)
        b_c = -2 * cm * e2a * phase / d
        t_c = (cp * cp - cm * cm) / (phase * d)
        r_c = -2j * cp * cm * e2a * cmath.sin(kp * length / h) / d
        return a_c, b_c, t_c, r_c, d

    if k > 0:
        a_c, b_c, t_c, r_c, d = _positive(k)
    else:
        a_c, b_m, t_c, r_m, d = _positive(-k)
        flip = cmath.exp(4j * k * a / h) * cmath.exp(2j * k * length / h)
        b_c, r_c = flip * b_m, flip * r_m
    if params.theta0 == 0:
        a_c, b_c, t_c, r_c = 1.0 + 0j, 0j, 1.0 + 0j, 0j
    coeffs = ScatteringCoeffs(a_c, b_c, t_c, r_c, d, k)
    if abs(params.theta0) <= _SMALL_THETA0:
        assert abs(d) >= 1.0, f"|d| = {abs(d)} in the small-theta0 regime"
    return coeffs


def interface_residuals(coeffs: ScatteringCoeffs, params: InterfaceParams,
                        a: float, b: float) -> np.ndarray:
    """Relative residuals of the four interface conditions for the plane-wave
    ansatz carrying ``coeffs``.

    Each residual is normalized by the magnitude of the terms entering the
    condition, so machine-exact coefficients give values near 1e-16.
    """
    h, k = params.h, coeffs.k
    t0 = params.theta0
    A, B, T, R = coeffs.a_coef, coeffs.b_coef, coeffs.t_coef, coeffs.r_coef
    ika = cmath.exp(1j * k * a / h)
    ikb = cmath.exp(1j * k * b / h)
    dk = 1j * k / h
    if k > 0:
        ua_out, dua_out = ika + R / ika, dk * (ika - R / ika)
        ua_in, dua_in = A * ika + B / ika, dk * (A * ika - B / ika)
        ub_in, dub_in = A * ikb + B / ikb, dk * (A * ikb - B / ikb)
        ub_out, dub_out = T * ikb, dk * T * ikb
    else:
        ua_out, dua_out = T * ika, dk * T * ika
        ua_in, dua_in = A * ika + B / ika, dk * (A * ika - B / ika)
        ub_in, dub_in = A * ikb + B / ikb, dk * (A * ikb - B / ikb)
        ub_out, dub_out = ikb + R / ikb, dk * (ikb - R / ikb)
    ea, eb = cmath.exp(-t0 / 2), cmath.exp(-1.5 * t0)
    res = np.array([
        abs(ea * ua_out - ua_in) / max(abs(ea * ua_out), abs(ua_in), 1e-300),
        abs(eb * dua_out - dua_in) / max(abs(eb * dua_out), abs(dua_in), 1e-300),
        abs(ea * ub_out - ub_in) / max(abs(ea * ub_out), abs(ub_in), 1e-300),
        abs(eb * dub_out - dub_in) / max(abs(eb * dub_out), abs(dub_in), 1e-300),
    ])
    return res


def intertwiner_deviation(params: InterfaceParams, k_grid: np.ndarray,
                          a: float = -1.0, b: float = 1.0) -> float:
    """max over k of |A-1| + |B| + |T-1| + |R|, an upper proxy for the
    operator-norm distance of the intertwiner from the identity."""
    if abs(params.theta0) > _SMALL_THETA0:
        raise ConstraintViolation(f"|theta0| = {abs(params.theta0)} outside the small regime")
    worst = 0.0
    for k in np.asarray(k_grid, dtype=float):
        c = free_coeffs(k, params, a, b)
        dev = abs(c.a_coef - 1) + abs(c.b_coef) + abs(c.t_coef - 1) + abs(c.r_coef)
        worst = max(worst, dev)
    return worst


@dataclass(frozen=True)
class GeneralizedEigenfunction:
    """Interior samples of the filled-well generalized eigenfunction at
    momentum k, with reconstructed exterior data and the Agmon-weighted sup."""

    k: float
    interior: np.ndarray
    coeffs: ScatteringCoeffs
    weighted_sup: float
    boundary_residuals: tuple


def generalized_eigenfunction(spec: PotentialSpec, k: float,
                              params: InterfaceParams) -> GeneralizedEigenfunction:
    """Solve the reduced Robin boundary value problem for the filled-well
    model at momentum k (wells are ignored; tunneling regime V - k^2 >= c).
    """
    if k == 0:
        raise ConstraintViolation("momentum k must be nonzero")
    g = spec.grid
    h = params.h
    t0 = params.theta0
    v = spec.barrier_at(None)
    c_min = spec.c if spec.c is not None else 0.0
    if v.min() - k * k < c_min:
        raise ConstraintViolation(
            f"V - k^2 reaches {v.min() - k * k:.3g}; the tunneling regime needs >= {c_min:.3g}")
    m = v.size
    dx = g.dx
    kabs = abs(k)
    robin = 1j * kabs * cmath.exp(-t0)
    data_a = 2j * k * cmath.exp(-1.5 * t0) * cmath.exp(1j * k * g.a / h) if k > 0 else 0.0
    data_b = 2j * k * cmath.exp(-1.5 * t0) * cmath.exp(1j * k * g.b / h) if k < 0 else 0.0

    # rows: Robin at a (one-sided 2nd order), interior centered, Robin at b
    ab = np.zeros((5, m), dtype=complex)
    rhs = np.zeros(m, dtype=complex)
    c2 = h * h / (dx * dx)
    ab[2, 1:m - 1] = 2 * c2 + (v[1:m - 1] - k * k)
    ab[1, 2:m] = -c2
    ab[3, 0:m - 2] = -c2
    hd = h / (2 * dx)
    ab[2, 0] = -3 * hd + robin
    ab[1, 1] = 4 * hd
    ab[0, 2] = -hd
    rhs[0] = data_a
    ab[2, m - 1] = 3 * hd - robin
    ab[3, m - 2] = -4 * hd
    ab[4, m - 3] = hd
    rhs[m - 1] = data_b
    try:
        psi = solve_banded((2, 2), ab, rhs)
    except LinAlgError as exc:
        raise SingularRobinSystem(f"Robin system singular: {exc}") from exc
    scale = max(abs(data_a), abs(data_b))
    res_a = abs((-3 * psi[0] + 4 * psi[1] - psi[2]) * hd + robin * psi[0] - data_a)
    res_b = abs((3 * psi[m - 1] - 4 * psi[m - 2] + psi[m - 3]) * hd - robin * psi[m - 1] - data_b)
    if not np.all(np.isfinite(psi)) or max(res_a, res_b) > 1e-10 * scale:
        cond = float(np.abs(psi).max() * max(np.abs(ab).max(), 1.0) / max(scale, 1e-300))
        raise SingularRobinSystem(
            f"Robin system near-singular (condition estimate {cond:.2e})")

    ea = cmath.exp(t0 / 2)
    if k > 0:
        r_c = (ea * psi[0] - cmath.exp(1j * k * g.a / h)) * cmath.exp(1j * k * g.a / h)
        t_c = ea * psi[m - 1] * cmath.exp(-1j * k * g.b / h)
    else:
        t_c = ea * psi[0] * cmath.exp(-1j * k * g.a / h)
        r_c = (ea * psi[m - 1] - cmath.exp(1j * k * g.b / h)) * cmath.exp(1j * k * g.b / h)
    coeffs = ScatteringCoeffs(0j, 0j, t_c, r_c, 0j, k)

    w = np.sqrt(np.maximum(v - k * k, 0.0))
    phi = np.concatenate(([0.0], np.cumsum((w[1:] + w[:-1]) * 0.5 * dx)))
    if k < 0:
        phi = phi[-1] - phi
    weighted_sup = float(np.max(np.exp(phi / h) * np.abs(psi)))
    return GeneralizedEigenfunction(k, psi, coeffs, weighted_sup, (res_a, res_b))

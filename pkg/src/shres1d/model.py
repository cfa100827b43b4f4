"""Grids, potentials and Agmon distances.

The potential is a barrier V supported on [a, b] plus a well perturbation
subtracted from it: bounded profiles W1 and delta wells W2 = sum_j
alpha_j * h * delta(x - c_j).  Interfaces a, b and delta positions must sit
exactly on grid nodes; consumers discretize the delta wells themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonRepresentableInterface, NoWell

# relative slack (in index units) when deciding whether a position sits on a node
_NODE_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform 1D grid with two marked interface nodes a = x[idx_a], b = x[idx_b]."""

    x_min: float
    x_max: float
    n_points: int
    idx_a: int
    idx_b: int

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def a(self) -> float:
        return self.x_min + self.idx_a * self.dx

    @property
    def b(self) -> float:
        return self.x_min + self.idx_b * self.dx

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    def node_of(self, position: float, what: str = "position") -> int:
        """Index of the node carrying ``position``; error if off-lattice."""
        t = (position - self.x_min) / self.dx
        idx = int(round(t))
        if abs(t - idx) > _NODE_TOL * max(1.0, abs(t)):
            raise NonRepresentableInterface(
                f"{what} {position} is {abs(t - idx) * self.dx:.3e} away from the "
                f"nearest grid node (dx={self.dx:.3e})")
        if not 0 <= idx < self.n_points:
            raise NonRepresentableInterface(f"{what} {position} lies outside the grid")
        return idx


def build_grid(x_min: float, x_max: float, points_per_unit: int,
               a: float, b: float) -> Grid:
    """Uniform grid on [x_min, x_max] with interfaces a < b on lattice nodes."""
    if not x_min < a < b < x_max:
        raise ValueError(f"need x_min < a < b < x_max, got {x_min}, {a}, {b}, {x_max}")
    span = (x_max - x_min) * points_per_unit
    n_cells = int(round(span))
    if abs(span - n_cells) > _NODE_TOL * max(1.0, span):
        raise ValueError(f"domain length {x_max - x_min} not a multiple of 1/{points_per_unit}")
    grid = Grid(x_min, x_max, n_cells + 1, 0, 0)
    idx_a = grid.node_of(a, "interface a")
    idx_b = grid.node_of(b, "interface b")
    return Grid(x_min, x_max, n_cells + 1, idx_a, idx_b)


@dataclass(frozen=True)
class DeltaWell:
    """Attractive point well alpha * h * delta(x - position).

    ``profile`` optionally modulates the amplitude in time: alpha(t) =
    amplitude * profile(t), with profile(0) == 1 by convention.
    """

    position: float
    amplitude: float
    profile: Optional[Callable[[float], float]] = None

    def amplitude_at(self, t: Optional[float]) -> float:
        if t is None or self.profile is None:
            return self.amplitude
        return self.amplitude * self.profile(t)


@dataclass(frozen=True)
class SemiclassicalParams:
    """Semiclassical parameter h and the structural constant of the hypotheses."""

    h: float
    c: Optional[float] = None
    lambda0: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise ValueError(f"h must be in (0, 1], got {self.h}")
        if self.c is not None and self.c <= 0:
            raise ValueError(f"structural constant must be positive, got {self.c}")


@dataclass(frozen=True)
class PotentialSpec:
    """Barrier V on [a, b] plus well perturbation subtracted from it.

    ``barrier`` holds V sampled on the closed-interval nodes
    x[idx_a] .. x[idx_b]; V vanishes outside [a, b] by definition.
    ``wells_bounded`` are W1 profiles sampled on the same nodes, each
    supported strictly inside (a, b).  When a structural constant ``c`` is
    supplied the construction enforces c <= V on (a, b), ||V|| <= 1/c,
    ||W1|| <= 1/c and h * sum|alpha_j| <= h/c.
    """

    grid: Grid
    barrier: np.ndarray
    wells_bounded: tuple = ()
    wells_delta: tuple = ()
    barrier_profile: Optional[Callable[[float], float]] = None
    c: Optional[float] = None
    h_for_checks: Optional[float] = field(default=None, repr=False)

    def __post_init__(self):
        g = self.grid
        n_int = g.idx_b - g.idx_a + 1
        barrier = np.asarray(self.barrier, dtype=float)
        if barrier.shape != (n_int,):
            raise ValueError(f"barrier must have {n_int} samples (nodes a..b), got {barrier.shape}")
        object.__setattr__(self, "barrier", barrier)
        wells_bounded = tuple(np.asarray(w, dtype=float) for w in self.wells_bounded)
        for w in wells_bounded:
            if w.shape != (n_int,):
                raise ValueError("bounded-well profile must be sampled on the nodes a..b")
            if w[0] != 0.0 or w[-1] != 0.0:
                raise ValueError("bounded-well support must lie strictly inside (a, b)")
        object.__setattr__(self, "wells_bounded", wells_bounded)
        object.__setattr__(self, "wells_delta", tuple(self.wells_delta))
        for well in self.wells_delta:
            idx = g.node_of(well.position, "delta well")
            if not g.idx_a < idx < g.idx_b:
                raise NonRepresentableInterface(
                    f"delta well at {well.position} must lie strictly inside (a, b)")
            if well.amplitude <= 0:
                raise ValueError("delta amplitudes must be positive")
        if self.c is not None:
            c = self.c
            interior = barrier[1:-1] if n_int > 2 else barrier
            if interior.size and interior.min() < c:
                raise ValueError(f"barrier dips to {interior.min()} below the structural constant {c}")
            if np.abs(barrier).max(initial=0.0) > 1.0 / c:
                raise ValueError("barrier sup-norm exceeds 1/c")
            for w in wells_bounded:
                if np.abs(w).max(initial=0.0) > 1.0 / c:
                    raise ValueError("bounded-well sup-norm exceeds 1/c")
            total = sum(abs(w.amplitude) for w in self.wells_delta)
            if total > 1.0 / c:
                raise ValueError(f"total delta mass {total}*h exceeds h/c")

    @property
    def interval_nodes(self) -> np.ndarray:
        g = self.grid
        return g.x[g.idx_a:g.idx_b + 1]

    def barrier_at(self, t: Optional[float] = None) -> np.ndarray:
        """Barrier samples on the nodes a..b, with time modulation applied."""
        if t is None or self.barrier_profile is None:
            return self.barrier
        return self.barrier * self.barrier_profile(t)

    def w1_at(self, t: Optional[float] = None) -> np.ndarray:
        """Total bounded well W1 on the nodes a..b."""
        n_int = self.grid.idx_b - self.grid.idx_a + 1
        out = np.zeros(n_int)
        for w in self.wells_bounded:
            out += w
        return out

    def delta_amplitudes(self, t: Optional[float] = None):
        """List of (node index, alpha_j(t)) for the delta wells."""
        return [(self.grid.node_of(w.position), w.amplitude_at(t)) for w in self.wells_delta]

    def has_wells(self) -> bool:
        return bool(self.wells_delta) or any(np.any(w != 0.0) for w in self.wells_bounded)

    def agmon(self, lam: float, x: float, y: float) -> float:
        return agmon_distance(self.interval_nodes, self.barrier, lam, x, y)


def constant_barrier(grid: Grid, v0: float) -> np.ndarray:
    """V = v0 on [a, b], sampled on the interval nodes."""
    return np.full(grid.idx_b - grid.idx_a + 1, float(v0))


def agmon_distance(x_nodes: np.ndarray, v: np.ndarray, lam: float,
                   x: float, y: float) -> float:
    """Degenerate Agmon distance int_x^y sqrt((V(t) - lam)_+) dt.

    Composite trapezoid on the sampling nodes; x and y are snapped to the
    nearest nodes.  Symmetric in (x, y).
    """
    x_nodes = np.asarray(x_nodes, dtype=float)
    v = np.asarray(v, dtype=float)
    if x > y:
        x, y = y, x
    dx = x_nodes[1] - x_nodes[0]
    i = int(round((x - x_nodes[0]) / dx))
    j = int(round((y - x_nodes[0]) / dx))
    i = max(0, min(i, x_nodes.size - 1))
    j = max(0, min(j, x_nodes.size - 1))
    if j <= i:
        return 0.0
    integrand = np.sqrt(np.maximum(v[i:j + 1] - lam, 0.0))
    return float(np.trapezoid(integrand, dx=dx))


def s0_barrier_action(spec: PotentialSpec, lambda0: float) -> float:
    """Agmon distance from the interface points {a, b} to the well support."""
    g = spec.grid
    nodes = spec.interval_nodes
    points = [w.position for w in spec.wells_delta]
    for w in spec.wells_bounded:
        support = np.nonzero(w)[0]
        if support.size:
            points.extend(nodes[support])
    if not points:
        raise NoWell("potential has no wells; the barrier action is undefined")
    a, b = g.a, g.b
    return min(
        min(agmon_distance(nodes, spec.barrier, lambda0, a, p),
            agmon_distance(nodes, spec.barrier, lambda0, p, b))
        for p in points)

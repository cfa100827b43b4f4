"""1D Schrodinger operators with artificial complex interface conditions:
scattering data, shape resonances, transparent-boundary time evolution and
adiabatic driving of resonant states."""

__version__ = "0.1.0"

from . import errors, kernels, model, scattering  # noqa: F401

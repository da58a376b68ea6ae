"""Physical constants, thermal occupancy and resonator lineshapes.

All angular frequencies are in rad/s. The Bose-Einstein occupancy takes a
linear frequency in Hz because that is how the thermal source is specified.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import constants as _sc

from .errors import InvalidInputError

__all__ = [
    "PhysConstants",
    "CONSTANTS",
    "HBAR",
    "ResonatorParams",
    "bose_einstein_occupancy",
    "noise_transmission",
    "noise_reflection",
    "coherent_reflection",
]


@dataclass(frozen=True)
class PhysConstants:
    planck_h: float = _sc.h
    boltzmann_k: float = _sc.k

    def __post_init__(self):
        if not (self.planck_h > 0 and self.boltzmann_k > 0):
            raise InvalidInputError("physical constants must be strictly positive")

    @property
    def hbar(self):
        return self.planck_h / (2 * np.pi)


CONSTANTS = PhysConstants()
HBAR = CONSTANTS.hbar


@dataclass(frozen=True)
class ResonatorParams:
    """Single-mode resonator: resonance ``omega0`` and intrinsic/external rates (rad/s)."""

    omega0: float
    kappa_i: float
    kappa_e: float
    diagnostics: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if not self.omega0 > 0:
            raise InvalidInputError(f"omega0 must be > 0, got {self.omega0}")
        if self.kappa_i < 0 or self.kappa_e < 0:
            raise InvalidInputError("coupling rates must be non-negative")
        if not self.kappa_i + self.kappa_e > 0:
            raise InvalidInputError("total linewidth must be > 0")

    @property
    def kappa(self):
        return self.kappa_i + self.kappa_e


def bose_einstein_occupancy(f, T, constants=CONSTANTS):
    """Mean thermal photon number ``1/(exp(h f / k_B T) - 1)``.

    Vectorised over ``f`` and ``T``. ``T = 0`` gives exactly 0.
    """
    f = np.asarray(f, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(~(f > 0)):
        raise InvalidInputError("frequency must be strictly positive")
    if np.any(T < 0):
        raise InvalidInputError("temperature must be non-negative")
    f, T = np.broadcast_arrays(f, T)
    out = np.zeros(f.shape)
    hot = T > 0
    x = constants.planck_h * f[hot] / (constants.boltzmann_k * T[hot])
    with np.errstate(over="ignore"):  # exp overflow -> occupancy 0, which is the correct limit
        out[hot] = 1.0 / np.expm1(x)
    return out[()] if out.ndim == 0 else out


def noise_transmission(omega, r):
    """Fraction of intrinsic-bath noise reaching the output port."""
    omega = np.asarray(omega, dtype=float)
    half = 0.5 * r.kappa
    out = r.kappa_i * r.kappa_e / (half * half + (omega - r.omega0) ** 2)
    return out[()] if out.ndim == 0 else out


def noise_reflection(omega, r):
    return 1.0 - noise_transmission(omega, r)


def coherent_reflection(omega, r):
    """One-port amplitude reflection ``1 - kappa_e / (kappa/2 + i(omega - omega0))``."""
    omega = np.asarray(omega, dtype=float)
    out = np.asarray(1.0 - r.kappa_e / (0.5 * r.kappa + 1j * (omega - r.omega0)))
    return out[()] if out.ndim == 0 else out

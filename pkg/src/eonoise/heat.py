"""Optical heat budget and point-heater temperature scaling."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UndefinedRatioError

__all__ = [
    "WAVEGUIDE_LOSS_DB_PER_CM",
    "OpticalInterface",
    "ThermalLink",
    "heat_dissipated",
    "heat_reduction_factor",
    "equilibrium_temperature",
    "occupancy_powerlaw_consistency",
]

# Straight-waveguide propagation loss for thin-film LN; not part of heat_dissipated.
WAVEGUIDE_LOSS_DB_PER_CM = 0.03


@dataclass(frozen=True)
class OpticalInterface:
    """Fiber-chip couplers, cavity transmission ``|T|^2`` and on-chip power ``p_t`` (W)."""

    eta_in: float
    eta_out: float
    t_opt_sq: float
    p_t: float

    def __post_init__(self):
        if not (0 < self.eta_in <= 1 and 0 < self.eta_out <= 1):
            raise InvalidInputError("coupling efficiencies must lie in (0, 1]")
        if not 0 <= self.t_opt_sq <= 1:
            raise InvalidInputError("|T|^2 must lie in [0, 1]")
        if self.p_t < 0:
            raise InvalidInputError("p_t must be >= 0")

    @property
    def p_in(self):
        """Power launched into the input fiber."""
        return self.p_t / self.eta_in


def heat_dissipated(iface):
    """Total optical power dissipated: input-coupler loss plus output-coupler loss of the transmitted light."""
    return iface.p_t * (1.0 / iface.eta_in - 1.0 + iface.t_opt_sq * (1.0 - iface.eta_out))


def heat_reduction_factor(before, after):
    base = heat_dissipated(before)
    if not base > 0:
        raise UndefinedRatioError("baseline interface dissipates no heat")
    return 1.0 - heat_dissipated(after) / base


@dataclass(frozen=True)
class ThermalLink:
    """Solid link with conductivity ``k ~ T**conductivity_exponent``.

    ``reference_power`` dissipated at the heater holds it at
    ``reference_temperature`` above a bath at ``base_temperature``.
    """

    conductivity_exponent: float
    reference_power: float
    reference_temperature: float
    base_temperature: float

    def __post_init__(self):
        if self.conductivity_exponent < 0:
            raise InvalidInputError("conductivity exponent must be >= 0")
        if not (self.reference_temperature > 0 and self.base_temperature > 0):
            raise InvalidInputError("temperatures must be > 0")
        if not self.reference_power > 0:
            raise InvalidInputError("reference_power must be > 0")
        if not self.reference_temperature > self.base_temperature:
            raise InvalidInputError("reference temperature must exceed the base temperature")


def equilibrium_temperature(p, link):
    """Heater temperature for dissipated power ``p``.

    Heat flow through the link is the conductivity integral, so
    ``T**(a+1) - T_base**(a+1)`` is proportional to ``p``.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise InvalidInputError("power must be >= 0")
    m = link.conductivity_exponent + 1.0
    tb = link.base_temperature**m
    out = (tb + p / link.reference_power * (link.reference_temperature**m - tb)) ** (1.0 / m)
    return out[()] if out.ndim == 0 else out


def occupancy_powerlaw_consistency(exponent, anchor_power, anchor_occupancy, powers):
    """Occupancy curve ``n(P) = n_anchor * (P / P_anchor)**exponent``."""
    if not exponent > 0:
        raise InvalidInputError("exponent must be > 0")
    if not anchor_power > 0:
        raise InvalidInputError("anchor power must be > 0")
    powers = np.asarray(powers, dtype=float)
    out = anchor_occupancy * (powers / anchor_power) ** exponent
    return out[()] if out.ndim == 0 else out

"""Conversions between dimensionless simulation quantities and physical
units for the ultracold-atom realization.

Energy, length, and time units are E0 = hbar^2 / (4 m d1^2), x0 = 2 d1, and
t0 = hbar / E0, with d1 the short-lattice period.  The dimensionless norm N
maps to an actual atom number via N = (hbar w_perp |a_s| / (E0 d1)) Ntilde.
"""

from __future__ import annotations

from dataclasses import dataclass

from scipy.constants import hbar, physical_constants

__all__ = [
    "PhysicalSystem",
    "lithium7",
    "to_physical_time",
    "from_physical_time",
    "to_physical_length",
    "from_physical_length",
    "to_physical_energy",
    "from_physical_energy",
    "atom_number",
    "dimensionless_norm",
]

_ATOMIC_MASS_KG = physical_constants["atomic mass constant"][0]  # CODATA


@dataclass(frozen=True)
class PhysicalSystem:
    """Atom and trap parameters of a quasi-1D attractive condensate."""

    mass: float  # kg
    d1: float  # short-lattice real-space period, m
    a_s: float  # s-wave scattering length, m (negative: attractive)
    omega_perp: float  # transverse trap frequency, rad/s

    def __post_init__(self) -> None:
        if self.mass <= 0 or self.d1 <= 0 or self.omega_perp <= 0:
            raise ValueError("mass, d1, and omega_perp must be positive")
        if self.a_s >= 0:
            raise ValueError("attractive condensate needs a_s < 0")

    @property
    def energy_unit(self) -> float:
        return hbar**2 / (4.0 * self.mass * self.d1**2)

    @property
    def length_unit(self) -> float:
        return 2.0 * self.d1

    @property
    def time_unit(self) -> float:
        return hbar / self.energy_unit


def lithium7(
    d1: float = 532e-9,
    a_s: float = -1.43e-9,
    omega_perp: float = 2.0 * 3.141592653589793 * 710.0,
) -> PhysicalSystem:
    """Bright-soliton 7Li parameters (mass from the CODATA atomic mass unit)."""
    mass = 7.0160034366 * _ATOMIC_MASS_KG
    return PhysicalSystem(mass=mass, d1=d1, a_s=a_s, omega_perp=omega_perp)


def to_physical_time(t, system: PhysicalSystem):
    return t * system.time_unit


def from_physical_time(seconds, system: PhysicalSystem):
    return seconds / system.time_unit


def to_physical_length(x, system: PhysicalSystem):
    return x * system.length_unit


def from_physical_length(meters, system: PhysicalSystem):
    return meters / system.length_unit


def to_physical_energy(e, system: PhysicalSystem):
    return e * system.energy_unit


def from_physical_energy(joules, system: PhysicalSystem):
    return joules / system.energy_unit


def atom_number(norm_n, system: PhysicalSystem):
    """Actual atom count realizing a dimensionless norm."""
    return norm_n * system.energy_unit * system.d1 / (hbar * system.omega_perp * abs(system.a_s))


def dimensionless_norm(n_atoms, system: PhysicalSystem):
    return n_atoms * hbar * system.omega_perp * abs(system.a_s) / (system.energy_unit * system.d1)

"""Superlattice potentials and their commensuration structure.

The potential is a sum of two optical lattices,

    V(x, phi) = -depth_short * cos^2(2 pi x) - depth_long * cos^2(pi x / alpha + phi),

with ``alpha`` the ratio of the long lattice period to twice the short one.
For rational alpha (``2 alpha = p/q`` in lowest terms) the superlattice is
periodic with period ``p/2``; for irrational alpha it is quasiperiodic and is
approached through the rational convergents of alpha's continued fraction.
The drive slides one of the two lattices by advancing ``phi`` linearly in
time; one pump cycle advances ``phi`` by pi.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence, Union

import mpmath
import numpy as np

__all__ = [
    "PeriodRatio",
    "RationalApproximant",
    "DriveProtocol",
    "DrivenPotential",
    "SlidingTarget",
    "SuperlatticeSpec",
    "continued_fraction_expand",
    "convergent",
    "convergent_sequence",
    "potential_eval",
    "sliding_decomposition",
    "perturbation_tilt",
    "perturbed_potential",
    "NAMED_RATIOS",
]

#: Working precision (significant digits) for irrational period ratios.
RATIO_DPS = 50

#: Default guard for how far apart a tilt expansion's endpoints may be.
MAX_TILT_DETUNING = 0.05


def _named_ratio_values() -> dict:
    with mpmath.workdps(RATIO_DPS):
        return {
            "golden": (mpmath.sqrt(5) - 1) / 2,
            "sqrt3": mpmath.sqrt(3),
            "sqrt3/3": mpmath.sqrt(3) / 3,
            "sqrt5/5": mpmath.sqrt(5) / 5,
        }


#: Canonical high-precision decimal strings for the irrational ratios used
#: throughout; values are evaluated once at RATIO_DPS digits.
NAMED_RATIOS = {
    name: mpmath.nstr(val, RATIO_DPS, strip_zeros=False)
    for name, val in _named_ratio_values().items()
}


@dataclass(frozen=True)
class PeriodRatio:
    """The lattice-period ratio alpha, tagged rational or irrational.

    Rational values are exact fractions; irrational ones carry a decimal
    string with at least 30 significant digits so continued-fraction
    expansions stay trustworthy to high order.
    """

    kind: str  # "rational" | "irrational"
    fraction: Fraction | None = None
    decimal: str | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.kind == "rational":
            if self.fraction is None or self.fraction <= 0:
                raise ValueError("rational ratio needs a positive fraction")
        elif self.kind == "irrational":
            if self.decimal is None:
                raise ValueError("irrational ratio needs a decimal string")
            digits = sum(c.isdigit() for c in self.decimal.lstrip("-0."))
            if digits < 30:
                raise ValueError(
                    f"irrational ratio stored with {digits} significant digits; need >= 30"
                )
            if mpmath.mpf(self.decimal) <= 0:
                raise ValueError("ratio must be positive")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")

    # -- constructors -------------------------------------------------

    @staticmethod
    def rational(value: Union[Fraction, int, str, tuple]) -> "PeriodRatio":
        if isinstance(value, tuple):
            frac = Fraction(*value)
        else:
            frac = Fraction(value)
        return PeriodRatio(kind="rational", fraction=frac, label=str(frac))

    @staticmethod
    def irrational(decimal: str, label: str = "") -> "PeriodRatio":
        return PeriodRatio(kind="irrational", decimal=decimal, label=label or decimal[:12])

    @staticmethod
    def named(name: str) -> "PeriodRatio":
        try:
            dec = NAMED_RATIOS[name]
        except KeyError:
            raise KeyError(f"unknown ratio {name!r}; known: {sorted(NAMED_RATIOS)}") from None
        return PeriodRatio.irrational(dec, label=name)

    # -- views ---------------------------------------------------------

    @property
    def is_rational(self) -> bool:
        return self.kind == "rational"

    def mpf(self) -> mpmath.mpf:
        with mpmath.workdps(RATIO_DPS):
            if self.is_rational:
                return mpmath.mpf(self.fraction.numerator) / self.fraction.denominator
            return mpmath.mpf(self.decimal)

    def __float__(self) -> float:
        return float(self.mpf())

    @property
    def two_alpha(self) -> Fraction:
        """2*alpha = p/q in lowest terms (rational ratios only)."""
        if not self.is_rational:
            raise ValueError("two_alpha defined only for rational ratios")
        return 2 * self.fraction

    @property
    def superlattice_period(self) -> Fraction:
        """Spatial period p/2 of the two-lattice potential (rational only)."""
        return Fraction(self.two_alpha.numerator, 2)


@dataclass(frozen=True)
class RationalApproximant:
    """A continued-fraction convergent of a period ratio.

    ``period_L = p/2`` where ``2*value = p/q`` in lowest terms, and
    ``wavenumber_k = pi / value`` is the long-lattice wavenumber of the
    approximant superlattice.
    """

    order: int
    value: Fraction

    def __post_init__(self) -> None:
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.value < 0:
            raise ValueError("approximant must be >= 0")
        if self.value == 0 and self.order > 0:
            raise ValueError("only the order-0 convergent may vanish")

    @property
    def p(self) -> int:
        return (2 * self.value).numerator

    @property
    def q(self) -> int:
        return (2 * self.value).denominator

    @property
    def period_L(self) -> Fraction:
        return Fraction(self.p, 2)

    @property
    def wavenumber_k(self) -> float:
        return float(np.pi / float(self.value))

    def as_ratio(self) -> PeriodRatio:
        return PeriodRatio.rational(self.value)


def continued_fraction_expand(x, max_order: int = 30) -> list[int]:
    """Simple continued fraction coefficients [a0; a1, a2, ...] of x > 0.

    Exact (and naturally terminating) for Fraction input.  For floating /
    high-precision input the expansion stops early, with a warning, once the
    remaining precision can no longer support a trustworthy coefficient.
    """
    if max_order > 30:
        raise ValueError("max_order capped at 30 (precision budget)")
    if isinstance(x, PeriodRatio):
        x = x.fraction if x.is_rational else x.mpf()

    if isinstance(x, (Fraction, int)):
        val = Fraction(x)
        if val <= 0:
            raise ValueError("x must be positive")
        coeffs = []
        num, den = val.numerator, val.denominator
        while den != 0 and len(coeffs) <= max_order:
            a, rem = divmod(num, den)
            coeffs.append(int(a))
            num, den = den, rem
        return coeffs

    with mpmath.workdps(RATIO_DPS):
        val = mpmath.mpf(x)
        if val <= 0:
            raise ValueError("x must be positive")
        # A coefficient is trustworthy while the accumulated denominator
        # squared stays well below the input precision.
        q_prev, q_cur = 0, 1
        budget = mpmath.mpf(10) ** (RATIO_DPS - 5)
        coeffs = []
        rem = val
        for order in range(max_order + 1):
            a = int(mpmath.floor(rem))
            coeffs.append(a)
            frac = rem - a
            q_prev, q_cur = q_cur, a * q_cur + q_prev
            if frac == 0:
                break
            if mpmath.mpf(q_cur) ** 2 > budget:
                warnings.warn(
                    f"continued fraction truncated at order {order}: "
                    f"precision exhausted (denominator {q_cur})",
                    stacklevel=2,
                )
                break
            rem = 1 / frac
        return coeffs


def convergent(coefficients: Sequence[int], n: int) -> RationalApproximant:
    """The order-n convergent [a0; a1, ..., an] in lowest terms."""
    if n >= len(coefficients):
        raise ValueError(
            f"order {n} not available; expansion has {len(coefficients)} coefficients"
        )
    h_prev, h_cur = 1, coefficients[0]
    k_prev, k_cur = 0, 1
    for a in coefficients[1 : n + 1]:
        h_prev, h_cur = h_cur, a * h_cur + h_prev
        k_prev, k_cur = k_cur, a * k_cur + k_prev
    return RationalApproximant(order=n, value=Fraction(h_cur, k_cur))


def convergent_sequence(x, orders: Sequence[int]) -> list[RationalApproximant]:
    coeffs = continued_fraction_expand(x, max_order=max(orders))
    return [convergent(coeffs, n) for n in orders]


class SlidingTarget(Enum):
    """Which constitutive lattice the drive phase slides."""

    LONG = "long_lattice"
    SHORT = "short_lattice"


@dataclass(frozen=True)
class DriveProtocol:
    """Linear phase drive phi(t) = phi0 - rate * t.

    One pump cycle advances phi by pi, so the adiabatic period is
    ``T = pi / rate``.
    """

    rate: float
    phi0: float = 0.0

    @property
    def period(self) -> float:
        if self.rate == 0.0:
            return np.inf
        return np.pi / abs(self.rate)

    def phi(self, t):
        return self.phi0 - self.rate * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class SuperlatticeSpec:
    """Two-lattice potential with a sliding drive.

    ``depth_short`` multiplies the cos^2(2 pi x) lattice (period 1/2) and
    ``depth_long`` the cos^2(pi x / alpha) lattice (period alpha).  The drive
    phase enters the term selected by ``sliding``.
    """

    depth_short: float
    depth_long: float
    alpha: PeriodRatio
    drive: DriveProtocol = field(default_factory=lambda: DriveProtocol(rate=0.0))
    sliding: SlidingTarget = SlidingTarget.LONG

    def __post_init__(self) -> None:
        if self.depth_short < 0 or self.depth_long < 0:
            raise ValueError("lattice depths must be >= 0")

    @property
    def alpha_float(self) -> float:
        return float(self.alpha)

    def spatial_period(self) -> float | None:
        """Spatial period of V, or None when quasiperiodic.

        If one depth vanishes the period is that of the remaining lattice,
        regardless of alpha's rationality.
        """
        if self.depth_long == 0.0:
            return 0.5
        if self.depth_short == 0.0:
            return self.alpha_float
        if self.alpha.is_rational:
            return float(self.alpha.superlattice_period)
        return None

    def phi(self, t):
        return self.drive.phi(t)


def _phases(spec: SuperlatticeSpec, x, phi):
    x = np.asarray(x, dtype=float)
    theta_short = 2.0 * np.pi * x
    theta_long = np.pi * x / spec.alpha_float
    if spec.sliding is SlidingTarget.LONG:
        theta_long = theta_long + phi
    else:
        theta_short = theta_short + phi
    return theta_short, theta_long


def potential_at_phi(spec: SuperlatticeSpec, x, phi: float):
    """V(x) at a frozen drive phase."""
    theta_short, theta_long = _phases(spec, x, phi)
    return -spec.depth_short * np.cos(theta_short) ** 2 - spec.depth_long * np.cos(theta_long) ** 2


def potential_eval(spec: SuperlatticeSpec, x, t: float = 0.0):
    """V(x, t) with the drive phase evaluated at time t."""
    return potential_at_phi(spec, x, float(spec.phi(t)))


def sliding_decomposition(spec: SuperlatticeSpec, x):
    """Split V(x, phi) = base(x) + c(x) cos(2 phi) + s(x) sin(2 phi).

    Lets time propagation update the potential with two scalars per step
    instead of re-evaluating transcendentals on the grid.
    """
    x = np.asarray(x, dtype=float)
    theta_short = 2.0 * np.pi * x
    theta_long = np.pi * x / spec.alpha_float
    if spec.sliding is SlidingTarget.LONG:
        static_depth, static_theta = spec.depth_short, theta_short
        slide_depth, slide_theta = spec.depth_long, theta_long
    else:
        static_depth, static_theta = spec.depth_long, theta_long
        slide_depth, slide_theta = spec.depth_short, theta_short
    base = -static_depth * np.cos(static_theta) ** 2 - 0.5 * slide_depth * np.ones_like(x)
    c = -0.5 * slide_depth * np.cos(2.0 * slide_theta)
    s = +0.5 * slide_depth * np.sin(2.0 * slide_theta)
    return base, c, s


@dataclass(frozen=True)
class DrivenPotential:
    """A drive-phase family V(x, phi) = base(x) + c(x) cos(2 phi) + s(x) sin(2 phi).

    Both the plain superlattice and the tilt-perturbed approximant fit this
    form, so time propagation touches only two scalars per step.
    """

    drive: DriveProtocol
    base: np.ndarray
    ccoef: np.ndarray
    scoef: np.ndarray
    label: str = ""

    def at_phi(self, phi: float) -> np.ndarray:
        return self.base + self.ccoef * np.cos(2.0 * phi) + self.scoef * np.sin(2.0 * phi)

    def at_time(self, t: float) -> np.ndarray:
        return self.at_phi(float(self.drive.phi(t)))

    @staticmethod
    def from_spec(spec: SuperlatticeSpec, x) -> "DrivenPotential":
        base, c, s = sliding_decomposition(spec, x)
        return DrivenPotential(spec.drive, base, c, s, label="superlattice")

    @staticmethod
    def from_perturbed(
        spec_n: SuperlatticeSpec,
        target,
        x,
        max_detuning: float = MAX_TILT_DETUNING,
    ) -> "DrivenPotential":
        """Approximant superlattice plus the leading tilt toward ``target``.

        The tilt term sin(2 k_n x + 2 phi) splits over cos(2 phi) and
        sin(2 phi) exactly, so the family stays in DrivenPotential form.
        """
        if not spec_n.alpha.is_rational:
            raise ValueError("base spec must carry a rational (approximant) alpha")
        coeffs = continued_fraction_expand(spec_n.alpha.fraction)
        base_ap = convergent(coeffs, len(coeffs) - 1)
        alpha_target = (
            float(target.value) if isinstance(target, RationalApproximant) else float(target)
        )
        if abs(alpha_target - float(base_ap.value)) >= max_detuning:
            raise ValueError("approximants too far apart for the tilt expansion")
        k_n = base_ap.wavenumber_k
        dk = _target_wavenumber(target) - k_n
        x = np.asarray(x, dtype=float)
        amp = spec_n.depth_long * dk * x
        base, c, s = sliding_decomposition(spec_n, x)
        if spec_n.sliding is SlidingTarget.LONG:
            c = c + amp * np.sin(2.0 * k_n * x)
            s = s + amp * np.cos(2.0 * k_n * x)
        else:
            base = base + amp * np.sin(2.0 * k_n * x)
        return DrivenPotential(spec_n.drive, base, c, s, label="perturbed approximant")


def _target_wavenumber(target) -> float:
    if isinstance(target, RationalApproximant):
        return target.wavenumber_k
    if isinstance(target, PeriodRatio):
        return float(np.pi / float(target))
    return float(np.pi / float(target))


def perturbation_tilt(
    base: RationalApproximant,
    target,
    spec: SuperlatticeSpec,
    x,
    t: float = 0.0,
    max_detuning: float = MAX_TILT_DETUNING,
):
    """Leading-order long-wavelength tilt separating two nearby approximants.

    Expanding the long-lattice term of the target superlattice about the
    base approximant gives

        W(x, t) = depth_long * sin(2 k_n x + 2 phi(t)) * (k_target - k_n) * x,

    with ``k_n = pi / alpha_n``.  This is the potential difference
    ``V_target - V_base`` to first order in the wavenumber detuning; adding
    it to the base superlattice mimics the quasiperiodic system.
    """
    alpha_target = (
        float(target.value) if isinstance(target, RationalApproximant) else float(target)
    )
    if abs(alpha_target - float(base.value)) >= max_detuning:
        raise ValueError(
            f"approximants too far apart: |{alpha_target:.6f} - {float(base.value):.6f}| "
            f">= {max_detuning}"
        )
    k_n = base.wavenumber_k
    dk = _target_wavenumber(target) - k_n
    x = np.asarray(x, dtype=float)
    # The tilt expands the long-lattice term, so it carries the drive phase
    # only when the long lattice is the sliding one.
    phi = float(spec.phi(t)) if spec.sliding is SlidingTarget.LONG else 0.0
    return spec.depth_long * np.sin(2.0 * k_n * x + 2.0 * phi) * dk * x


def perturbed_potential(
    spec_n: SuperlatticeSpec,
    target,
    x,
    t: float = 0.0,
    max_detuning: float = MAX_TILT_DETUNING,
):
    """Base approximant potential plus the leading tilt toward ``target``."""
    if not spec_n.alpha.is_rational:
        raise ValueError("base spec must carry a rational (approximant) alpha")
    coeffs = continued_fraction_expand(spec_n.alpha.fraction)
    base = convergent(coeffs, len(coeffs) - 1)
    return potential_eval(spec_n, x, t) + perturbation_tilt(
        base, target, spec_n, x, t, max_detuning=max_detuning
    )

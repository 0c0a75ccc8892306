"""Effective center-of-mass model of the driven soliton.

A sech trial wavefunction reduces the driven GPE to a particle equation,

    d^2 x0/dt^2 = -(2 pi^3 / N) [ 4 p1 sin(4 pi x0) / sinh(4 pi^2 / N)
                  + p2 sin(2 pi x0 / alpha - 2 v t) / (alpha^2 sinh(2 pi^2 / (N alpha))) ],

whose two force amplitudes depend exponentially on the norm: small N feels
mostly the sliding lattice (transport), large N is pinned by the static one
(trapping).  The crossover is quantified by ``amplitude_ratio``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

__all__ = [
    "EffectiveParams",
    "EffectiveTrajectory",
    "integrate_effective",
    "force",
    "static_potential",
    "amplitude_ratio",
    "balance_norm",
    "classify_regime",
]


@dataclass(frozen=True)
class EffectiveParams:
    norm_n: float
    depth_short: float
    depth_long: float
    alpha: float
    rate: float

    def __post_init__(self) -> None:
        if self.norm_n <= 0:
            raise ValueError("norm must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def period(self) -> float:
        return math.pi / abs(self.rate) if self.rate else math.inf


@dataclass
class EffectiveTrajectory:
    times: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    params: EffectiveParams
    rtol: float

    def displacement(self) -> float:
        return float(self.position[-1] - self.position[0])


def _inv_sinh(z: float) -> float:
    """1/sinh(z) without overflow for large arguments."""
    if z > 700.0:
        return 0.0
    if z > 30.0:
        return 2.0 * math.exp(-z) / (1.0 - math.exp(-2.0 * z))
    return 1.0 / math.sinh(z)


def _amplitudes(p: EffectiveParams) -> tuple[float, float]:
    pref = 2.0 * math.pi**3 / p.norm_n
    a_static = pref * 4.0 * p.depth_short * _inv_sinh(4.0 * math.pi**2 / p.norm_n)
    a_slide = (
        pref
        * p.depth_long
        / p.alpha**2
        * _inv_sinh(2.0 * math.pi**2 / (p.norm_n * p.alpha))
    )
    return a_static, a_slide


def force(p: EffectiveParams, x0, t):
    """Right-hand side of the center-of-mass equation."""
    a_static, a_slide = _amplitudes(p)
    x0 = np.asarray(x0, dtype=float)
    return -(
        a_static * np.sin(4.0 * math.pi * x0)
        + a_slide * np.sin(2.0 * math.pi * x0 / p.alpha - 2.0 * p.rate * t)
    )


def static_potential(p: EffectiveParams, x0):
    """Potential whose gradient is the v=0 force (for the conserved-energy check)."""
    a_static, a_slide = _amplitudes(p)
    x0 = np.asarray(x0, dtype=float)
    return -(
        a_static * np.cos(4.0 * math.pi * x0) / (4.0 * math.pi)
        + a_slide * np.cos(2.0 * math.pi * x0 / p.alpha) * p.alpha / (2.0 * math.pi)
    )


def integrate_effective(
    params: EffectiveParams,
    x0_init: float,
    v0_init: float,
    t_end: float,
    rtol: float = 1e-9,
    n_samples: int = 1024,
) -> EffectiveTrajectory:
    """Adaptive explicit integration of the effective equation."""

    def rhs(t, y):
        return [y[1], float(force(params, y[0], t))]

    times = np.linspace(0.0, t_end, n_samples + 1)
    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        [x0_init, v0_init],
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-2,
        t_eval=times,
        dense_output=False,
    )
    if not sol.success:
        raise RuntimeError(f"effective integration failed: {sol.message}")
    return EffectiveTrajectory(
        times=sol.t, position=sol.y[0], velocity=sol.y[1], params=params, rtol=rtol
    )


def amplitude_ratio(p: EffectiveParams) -> float:
    """Static-to-sliding force amplitude ratio.

    Above one the static lattice pins the soliton; below one the sliding
    lattice carries it.  Strictly increasing in N when 2 alpha > 1.
    """
    if p.depth_short == 0.0:
        return 0.0
    if p.depth_long == 0.0:
        return math.inf
    # log-space: the sinh factors overflow long before the ratio does
    z1 = 4.0 * math.pi**2 / p.norm_n
    z2 = 2.0 * math.pi**2 / (p.norm_n * p.alpha)

    def log_sinh(z: float) -> float:
        if z > 30.0:
            return z - math.log(2.0) + math.log1p(-math.exp(-2.0 * z))
        return math.log(math.sinh(z))

    log_ratio = (
        math.log(4.0 * p.depth_short)
        - log_sinh(z1)
        - math.log(p.depth_long)
        + 2.0 * math.log(p.alpha)
        + log_sinh(z2)
    )
    return math.exp(log_ratio)


def balance_norm(
    p: EffectiveParams, n_lo: float = 0.5, n_hi: float = 200.0, tol: float = 1e-10
) -> float:
    """Norm at which the two force amplitudes balance (amplitude_ratio = 1)."""
    from dataclasses import replace

    def f(n):
        return math.log(amplitude_ratio(replace(p, norm_n=n)))

    lo, hi = n_lo, n_hi
    if f(lo) > 0 or f(hi) < 0:
        raise ValueError("balance point not bracketed; widen the norm window")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, mid):
            break
    return 0.5 * (lo + hi)


def classify_regime(
    traj: EffectiveTrajectory, cycles: float = 3.0
) -> str:
    """"pumped" when the net displacement beats one sliding period,
    "trapped" when it stays under half a short-lattice period."""
    disp = abs(traj.displacement())
    if disp > traj.params.alpha:
        return "pumped"
    if disp < 0.25:
        return "trapped"
    return "marginal"

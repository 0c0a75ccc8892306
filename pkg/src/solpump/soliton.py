"""Stationary gap solitons of the focusing Gross-Pitaevskii equation.

Solves -1/2 psi'' + V psi - |psi|^2 psi = mu psi on the periodic box by
Newton iteration in the real gauge, with the Jacobian applied spectrally
and inverted by preconditioned Krylov steps.  An outer secant iteration
pins the norm instead of the chemical potential, and a continuation helper
walks a whole family seeding each solve with the previous solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, lgmres

from .grid import ComplexField, Grid
from .lattice import DrivenPotential, SuperlatticeSpec, potential_at_phi

__all__ = [
    "SolitonSolution",
    "NewtonError",
    "newton_solve",
    "solve_at_norm",
    "continuation_in_norm",
    "energy",
    "initial_guess",
    "band_bottom",
    "save_solution",
    "load_solution",
]


class NewtonError(RuntimeError):
    """Newton iteration failed; carries the last residual seen."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolitonSolution:
    """A converged stationary state in the real-positive gauge."""

    psi: ComplexField
    mu: float
    norm_N: float
    residual: float
    phi: float
    iterations: int

    @property
    def grid(self) -> Grid:
        return self.psi.grid

    def density(self) -> np.ndarray:
        return self.psi.density()

    def edge_fraction(self) -> float:
        """Peak-relative density at the box boundary."""
        dens = self.density()
        peak = dens.max()
        if peak == 0:
            return 0.0
        edge = max(dens[0], dens[-1])
        return float(np.sqrt(edge / peak))  # amplitude ratio, matching |psi|


def resolve_potential(potential, grid: Grid, phi: float = 0.0) -> np.ndarray:
    """Frozen potential samples from a spec, driven family, callable or array."""
    if isinstance(potential, SuperlatticeSpec):
        return np.asarray(potential_at_phi(potential, grid.x, phi), dtype=float)
    if isinstance(potential, DrivenPotential):
        return np.asarray(potential.at_phi(phi), dtype=float)
    if callable(potential):
        return np.asarray(potential(grid.x), dtype=float)
    v = np.asarray(potential, dtype=float)
    if v.shape != (grid.n_points,):
        raise ValueError("potential array does not match the grid")
    return v


def _stationary_residual(u: np.ndarray, v: np.ndarray, mu: float, k2: np.ndarray) -> np.ndarray:
    kin = np.fft.irfft(-k2 * np.fft.rfft(u), n=len(u))
    return -0.5 * kin + (v - mu) * u - u**3


def newton_solve(
    potential,
    mu: float,
    guess: ComplexField,
    phi: float = 0.0,
    target_residual: float = 1e-11,
    max_iter: int = 200,
    residual_bound: float = 1e-10,
    edge_bound: float = 1e-8,
) -> SolitonSolution:
    """Newton-solve the stationary equation at fixed chemical potential.

    The returned solution is real, positive at its peak, converged below
    ``residual_bound`` in sup norm, and decayed below ``edge_bound`` (peak
    relative) at the box edge.  Divergence, convergence to the zero branch,
    and Krylov breakdown (a singular Jacobian, as at a bifurcation point)
    raise :class:`NewtonError` with the last residual attached.
    """
    grid = guess.grid
    v = resolve_potential(potential, grid, phi)
    u = np.real(guess.values).astype(float).copy()
    if np.max(np.abs(u)) == 0.0:
        raise NewtonError("guess is identically zero")
    n = grid.n_points
    k2 = np.fft.rfftfreq(n, d=grid.dx) ** 2 * (2.0 * np.pi) ** 2

    res_vec = _stationary_residual(u, v, mu, k2)
    res = float(np.max(np.abs(res_vec)))
    iterations = 0
    stall = 0
    for iterations in range(1, max_iter + 1):
        if res < target_residual:
            break
        if stall >= 3:
            # roundoff floor reached; accept if within the contract bound
            if res <= residual_bound:
                break
            raise NewtonError(
                f"Newton stagnated at residual {res:.3e} above bound "
                f"{residual_bound:.1e}",
                residual=res,
            )
        w = v - mu - 3.0 * u**2

        def j_mv(d, w=w):
            kin = np.fft.irfft(-k2 * np.fft.rfft(d), n=n)
            return -0.5 * kin + w * d

        sigma = 1.0 + max(0.0, -float(w.min()))

        def m_mv(d, sigma=sigma):
            return np.fft.irfft(np.fft.rfft(d) / (0.5 * k2 + sigma), n=n)

        op = LinearOperator((n, n), matvec=j_mv, dtype=float)
        pre = LinearOperator((n, n), matvec=m_mv, dtype=float)
        # modest constant forcing: each Newton step then lands a factor
        # ~1e-4 down (plus the quadratic gain), and the Krylov solve never
        # chases digits that roundoff will eat anyway
        delta, info = lgmres(op, -res_vec, M=pre, rtol=1e-4, atol=0.0, maxiter=300)
        if info != 0:
            if res <= residual_bound:
                break  # already good enough; the extra step was a luxury
            if not np.all(np.isfinite(delta)) or np.max(np.abs(delta)) == 0.0:
                raise NewtonError(
                    f"Krylov solve for the Newton step failed (info={info}); "
                    "singular Jacobian suspected (bifurcation point?)",
                    residual=res,
                )
            # fall through with the partial step; backtracking decides
        # backtracking keeps far-from-solution starts under control
        step = 1.0
        for _ in range(6):
            u_try = u + step * delta
            res_vec_try = _stationary_residual(u_try, v, mu, k2)
            res_try = float(np.max(np.abs(res_vec_try)))
            if res_try < res or res < 1e-8:
                break
            step *= 0.5
        else:
            raise NewtonError(
                f"Newton diverged after {iterations} iterations; last residual {res:.3e}",
                residual=res,
            )
        stall = stall + 1 if res_try > 0.9 * res else 0
        u, res_vec, res = u_try, res_vec_try, res_try
    else:
        raise NewtonError(
            f"Newton did not converge in {max_iter} iterations; last residual {res:.3e}",
            residual=res,
        )

    norm_n = float(np.sum(u**2) * grid.dx)
    peak = float(np.max(np.abs(u)))
    if norm_n < 1e-12 or peak < 1e-9:
        raise NewtonError("Newton converged to the zero branch", residual=res)
    if res > residual_bound:
        raise NewtonError(f"residual {res:.3e} above bound {residual_bound:.1e}", residual=res)
    # real-positive gauge at the peak
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    edge = max(abs(u[0]), abs(u[-1])) / peak
    if edge > edge_bound:
        raise NewtonError(
            f"solution does not decay: |psi|_edge/|psi|_peak = {edge:.2e} "
            f"(bound {edge_bound:g}); enlarge the box",
            residual=res,
        )
    return SolitonSolution(
        psi=grid.field(u.astype(complex)),
        mu=float(mu),
        norm_N=norm_n,
        residual=res,
        phi=float(phi),
        iterations=iterations,
    )


def band_bottom(
    potential, grid: Grid, phi: float = 0.0, steps: int = 400, dt: float = 0.02
) -> float:
    """Lowest linear eigenvalue on the box (the band edge solitons leave from).

    Imaginary-time relaxation from a localized seed; for deep lattices any
    lowest-band-dominated state already sits within the (tiny) bandwidth of
    the edge, so a few hundred steps give the edge to far better accuracy
    than the seeding that uses it requires.
    """
    v = resolve_potential(potential, grid, phi)
    n = grid.n_points
    k2 = np.fft.rfftfreq(n, d=grid.dx) ** 2 * (2.0 * np.pi) ** 2
    half_kin = np.exp(-0.25 * dt * k2)
    u = np.exp(-((grid.x - grid.x[np.argmin(v)]) ** 2))
    for _ in range(steps):
        u = np.fft.irfft(half_kin * np.fft.rfft(u), n=n)
        u *= np.exp(-dt * (v - v.min()))
        u = np.fft.irfft(half_kin * np.fft.rfft(u), n=n)
        u /= np.sqrt(np.sum(u**2) * grid.dx)
    kin = np.fft.irfft(-k2 * np.fft.rfft(u), n=n)
    rayleigh = np.sum(u * (-0.5 * kin + v * u)) * grid.dx
    return float(rayleigh)


def initial_guess(potential, grid: Grid, phi: float, target_n: float) -> ComplexField:
    """Localized seed scaled to the target norm.

    Shallow or flat potentials and large norms get the free-soliton sech
    profile; small norms in a real lattice get a Gaussian matched to the
    harmonic width of the deepest well near the box center (a stand-in for
    the lowest-band Wannier function).
    """
    v = resolve_potential(potential, grid, phi)
    depth = float(v.max() - v.min())
    mid = (grid.x_min + grid.x_max) / 2
    window = np.flatnonzero(np.abs(grid.x - mid) < grid.length / 8)
    deep = window[v[window] < v[window].min() + 1e-9 * max(1.0, depth)]
    idx = deep[np.argmin(np.abs(grid.x[deep] - mid))]  # tie-break toward center
    x0 = grid.x[idx]
    if target_n > 2.0 or depth < 0.5:
        u = (target_n / 2) / np.cosh(target_n * (grid.x - x0) / 2)
    else:
        # local curvature -> harmonic ground-state width
        vpp = np.gradient(np.gradient(v, grid.dx), grid.dx)
        curv = max(float(vpp[idx]), 1.0)
        width = curv ** (-0.25)
        u = np.exp(-((grid.x - x0) ** 2) / (2 * width**2))
    u *= np.sqrt(target_n / (np.sum(u**2) * grid.dx))
    return grid.field(u.astype(complex))


def relax_guess(
    potential,
    guess: ComplexField,
    target_n: float,
    phi: float = 0.0,
    steps: int = 600,
    dt: float = 0.005,
) -> ComplexField:
    """Normalized imaginary-time flow of the GP energy at fixed norm.

    Drives any localized seed toward the fundamental soliton of that norm;
    a few hundred steps land well inside Newton's basin.
    """
    grid = guess.grid
    v = resolve_potential(potential, grid, phi)
    n = grid.n_points
    k2 = np.fft.rfftfreq(n, d=grid.dx) ** 2 * (2.0 * np.pi) ** 2
    u = np.abs(np.real(guess.values)).astype(float)
    u *= np.sqrt(target_n / (np.sum(u**2) * grid.dx))
    # keep per-step phases O(0.3) even for strongly nonlinear seeds
    scale = max(float(v.max() - v.min()), float(np.max(u) ** 2), 1.0)
    dt = min(dt, 0.3 / scale)
    half_kin = np.exp(-0.25 * dt * k2)
    v0 = float(v.min())
    for _ in range(steps):
        u = np.fft.irfft(half_kin * np.fft.rfft(u), n=n)
        u *= np.exp(-dt * (v - v0 - u**2))
        u = np.fft.irfft(half_kin * np.fft.rfft(u), n=n)
        u *= np.sqrt(target_n / (np.sum(u**2) * grid.dx))
    return grid.field(u.astype(complex))


def solve_at_norm(
    potential,
    grid: Grid,
    target_n: float,
    phi: float = 0.0,
    seed_mu: float | None = None,
    guess: ComplexField | None = None,
    norm_tol: float = 1e-6,
    max_secant: int = 60,
    relax_steps: int = 600,
) -> SolitonSolution:
    """Find the family member with a prescribed norm by secant in mu."""
    if target_n <= 0:
        raise ValueError("target norm must be positive")
    v = resolve_potential(potential, grid, phi)
    if guess is None:
        guess = initial_guess(potential, grid, phi, target_n)
        if float(v.max() - v.min()) >= 0.5 and relax_steps > 0:
            guess = relax_guess(potential, guess, target_n, phi=phi, steps=relax_steps)
    if seed_mu is None:
        # the relaxed guess's own stationary value starts Newton consistently
        seed_mu = rayleigh_mu(potential, guess, phi)

    def attempt(mu: float, seed: ComplexField) -> SolitonSolution:
        scale = 1.0
        last: NewtonError | None = None
        for _ in range(3):
            try:
                return newton_solve(
                    potential, mu, seed.with_values(seed.values * scale), phi=phi
                )
            except NewtonError as err:
                last = err
                scale *= 3.0  # zero-branch capture: push the seed harder
        raise last  # type: ignore[misc]

    def attempt_toward(mu: float, mu_anchor: float, seed: ComplexField):
        """Solve at mu, bisecting back toward a known-good mu on failure."""
        for _ in range(6):
            try:
                return mu, attempt(mu, seed)
            except NewtonError:
                mu = 0.5 * (mu + mu_anchor)
        raise NewtonError(
            f"no convergent solution found near mu={mu:.6f} "
            f"(bracketing failure hunting N={target_n})"
        )

    mu0 = float(seed_mu)
    sol0 = attempt(mu0, guess)
    g0 = sol0.norm_N - target_n
    if abs(g0) < norm_tol:
        return sol0
    # second sample sized by the relative norm miss: deepen mu for more
    # norm, approach the edge for less
    scale = max(abs(mu0 - float(v.mean())), 0.1)
    step = float(np.clip(0.5 * scale * abs(g0) / target_n, 1e-4, 0.5))
    mu1, sol1 = attempt_toward(mu0 - step if g0 < 0 else mu0 + step, mu0, sol0.psi)
    g1 = sol1.norm_N - target_n
    for _ in range(max_secant):
        if abs(g1) < norm_tol:
            return sol1
        if g1 == g0:
            raise NewtonError(
                f"secant stalled: norm stuck at {sol1.norm_N:.6f} hunting {target_n}; "
                "target may lie outside this family branch (bracketing failure)"
            )
        mu2 = mu1 - g1 * (mu1 - mu0) / (g1 - g0)
        # cap wild extrapolations at triple the last move
        max_jump = 3.0 * max(abs(mu1 - mu0), 0.05)
        mu2 = float(np.clip(mu2, mu1 - max_jump, mu1 + max_jump))
        mu2, sol2 = attempt_toward(mu2, mu1, sol1.psi)
        mu0, g0 = mu1, g1
        mu1, g1, sol1 = mu2, sol2.norm_N - target_n, sol2
    raise NewtonError(
        f"norm iteration did not converge: |N - {target_n}| = {abs(g1):.2e} "
        "after secant budget (bracketing failure?)"
    )


def rayleigh_mu(potential, field: ComplexField, phi: float = 0.0) -> float:
    """Self-consistent chemical potential of a trial field.

    For a true stationary state this is exactly mu; for a localized guess it
    is the matching starting point for Newton.
    """
    grid = field.grid
    v = resolve_potential(potential, grid, phi)
    u = np.real(field.values)
    n = grid.n_points
    k2 = np.fft.rfftfreq(n, d=grid.dx) ** 2 * (2.0 * np.pi) ** 2
    kin = np.fft.irfft(-k2 * np.fft.rfft(u), n=n)
    num = np.sum(u * (-0.5 * kin + v * u) - u**4) * grid.dx
    den = np.sum(u**2) * grid.dx
    return float(num / den)


def continuation_in_norm(
    potential,
    grid: Grid,
    norms,
    phi: float = 0.0,
    branch_jump_tol: float | None = None,
) -> list[SolitonSolution]:
    """Solve a sorted family of norms, each solve seeding the next.

    Raises if consecutive solutions hop to a different lattice site (center
    moving more than half the branch-jump tolerance, default one superlattice
    period when known).
    """
    norms = list(norms)
    if norms != sorted(norms):
        raise ValueError("norm list must be sorted ascending")
    out: list[SolitonSolution] = []
    guess = None
    for n_target in norms:
        sol = solve_at_norm(potential, grid, n_target, phi=phi, guess=guess)
        if out:
            tol = branch_jump_tol
            if tol is None:
                tol = 1.0
            prev = out[-1]
            c_prev = _center(prev)
            c_new = _center(sol)
            if abs(c_new - c_prev) > tol / 2:
                raise NewtonError(
                    f"branch jump: center moved {abs(c_new - c_prev):.3f} "
                    f"between N={prev.norm_N:.3f} and N={sol.norm_N:.3f}"
                )
        out.append(sol)
        guess = sol.psi
    return out


def _center(sol: SolitonSolution) -> float:
    dens = sol.density()
    return float(np.sum(sol.grid.x * dens) / np.sum(dens))


def energy(potential, psi: ComplexField, phi: float = 0.0) -> float:
    """GP energy functional: kinetic + potential - attractive quartic."""
    grid = psi.grid
    v = resolve_potential(potential, grid, phi)
    dpsi = np.fft.ifft(1j * grid.k * np.fft.fft(psi.values))
    dens = psi.density()
    integrand = 0.5 * np.abs(dpsi) ** 2 + v * dens - 0.5 * dens**2
    return float(np.real(np.sum(integrand) * grid.dx))


def save_solution(path, sol: SolitonSolution) -> None:
    """Serialize grid, field, and scalars to a structured .npz file."""
    np.savez(
        Path(path),
        x_min=sol.grid.x_min,
        x_max=sol.grid.x_max,
        n_points=sol.grid.n_points,
        values=sol.psi.values,
        mu=sol.mu,
        norm_N=sol.norm_N,
        residual=sol.residual,
        phi=sol.phi,
        iterations=sol.iterations,
    )


def load_solution(path) -> SolitonSolution:
    with np.load(Path(path)) as data:
        grid = Grid(float(data["x_min"]), float(data["x_max"]), int(data["n_points"]))
        return SolitonSolution(
            psi=grid.field(data["values"]),
            mu=float(data["mu"]),
            norm_N=float(data["norm_N"]),
            residual=float(data["residual"]),
            phi=float(data["phi"]),
            iterations=int(data["iterations"]),
        )

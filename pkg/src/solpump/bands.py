"""Linear band theory for periodic lattices: Bloch bands, maximally
localized Wannier functions, Wannier-center winding, and Chern numbers.

Everything here operates on a frozen drive phase; pump topology is probed
by sweeping the phase through one cycle (phi decreasing by pi, matching the
drive convention) and winding the Wannier centers.

The Wannier gauge is the 1D-exact one: the band-projected position operator
(equivalently, the unimodular Wilson-loop link matrix) is diagonalized, so
functions and centers are deterministic and maximally localized without any
iterative spread minimization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .grid import ComplexField, Grid, hermitian_eigensolve
from .lattice import SlidingTarget, SuperlatticeSpec, potential_at_phi

__all__ = [
    "BlochSpectrum",
    "WannierBasis",
    "ChernResult",
    "bloch_bands",
    "bloch_states_on_grid",
    "wannier_center",
    "wannier_basis",
    "wannier_center_trajectory",
    "chern_number",
    "band_occupation",
    "occupations_from_states",
    "self_consistent_chern",
]


@dataclass(frozen=True)
class BlochSpectrum:
    """Bloch eigenpairs of one frozen-phase periodic Hamiltonian.

    ``coefficients[n, j, m]`` are plane-wave amplitudes of the periodic part
    of band ``n`` at ``k_samples[j]``; the plane-wave basis is
    ``exp(i G m x)`` with ``G = 2 pi / period`` and integer indices
    ``pw_index[m]``.
    """

    period: float
    phi: float
    n_bands: int
    k_samples: np.ndarray
    energies: np.ndarray
    coefficients: np.ndarray
    pw_index: np.ndarray

    @property
    def n_k(self) -> int:
        return len(self.k_samples)


@dataclass(frozen=True)
class WannierBasis:
    """Maximally localized Wannier functions of one band on a full grid."""

    band: int
    period: float
    grid: Grid
    cell_count: int
    centers: np.ndarray  # (cell_count,), ascending
    functions: np.ndarray  # (cell_count, n_points)


@dataclass(frozen=True)
class ChernResult:
    """Integer winding of a Wannier center over one pump cycle."""

    band: int
    chern: int
    winding: float
    unit: float
    phis: np.ndarray
    centers: np.ndarray


# ------------------------------------------------------------------ bands


def _potential_fourier(samples: np.ndarray) -> np.ndarray:
    """Fourier components V_m of a real periodic function from samples."""
    n = len(samples)
    comps = np.fft.fft(samples) / n
    return comps


def _hamiltonian(k: float, g: float, pw: np.ndarray, v_comp: np.ndarray) -> np.ndarray:
    n_fft = len(v_comp)
    kin = 0.5 * (k + g * pw) ** 2
    diff = (pw[:, None] - pw[None, :]) % n_fft
    h = v_comp[diff]
    h = h + np.diag(kin)
    return h


def bloch_bands(
    potential: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    period: float,
    n_bands: int = 5,
    n_k: int = 16,
    n_pw: int = 128,
    k_samples: np.ndarray | None = None,
    check_convergence: bool = False,
    convergence_tol: float = 1e-8,
    phi: float = 0.0,
) -> BlochSpectrum:
    """Diagonalize -1/2 d^2/dx^2 + V on a Bloch momentum grid.

    Parameters
    ----------
    potential
        Either a callable ``V(x)`` evaluated over one period, or an array of
        samples on the uniform period grid ``x_i = i * period / len(samples)``.
    period
        Spatial period of the potential.
    n_k
        Number of momenta; defaults to a uniform half-open Brillouin zone
        ``[-pi/period, pi/period)`` unless ``k_samples`` is given.
    n_pw
        Plane waves kept in the expansion.
    check_convergence
        Re-solve with twice the cutoff and require band energies to move by
        less than ``convergence_tol``.
    """
    if n_k < 2 and k_samples is None:
        raise ValueError("need at least 2 momenta")
    g = 2.0 * np.pi / period
    if callable(potential):
        n_fft = max(4 * n_pw, 512)
        xs = np.arange(n_fft) * (period / n_fft)
        samples = np.asarray(potential(xs), dtype=float)
    else:
        samples = np.asarray(potential, dtype=float)
        n_fft = len(samples)
        if n_fft < 2 * n_pw:
            raise ValueError("potential samples must resolve the plane-wave cutoff")
    v_comp = _potential_fourier(samples)

    if k_samples is None:
        dk = 2.0 * np.pi / (period * n_k)
        k_samples = -np.pi / period + dk * np.arange(n_k)
    else:
        k_samples = np.asarray(k_samples, dtype=float)

    pw = np.arange(-(n_pw // 2), n_pw - n_pw // 2)

    def solve(pw_idx: np.ndarray):
        nb = n_bands
        energies = np.empty((nb, len(k_samples)))
        coeffs = np.empty((nb, len(k_samples), len(pw_idx)), dtype=complex)
        for j, k in enumerate(k_samples):
            vals, vecs = hermitian_eigensolve(_hamiltonian(k, g, pw_idx, v_comp), k=nb)
            energies[:, j] = vals
            coeffs[:, j, :] = vecs.T
        return energies, coeffs

    energies, coeffs = solve(pw)
    if check_convergence:
        n_pw2 = 2 * n_pw
        if n_fft < 2 * n_pw2:
            raise ValueError("convergence check needs finer potential sampling")
        pw2 = np.arange(-(n_pw2 // 2), n_pw2 - n_pw2 // 2)
        energies2, _ = solve(pw2)
        shift = float(np.max(np.abs(energies - energies2)))
        if shift > convergence_tol:
            raise RuntimeError(
                f"plane-wave cutoff not converged: doubling {n_pw}->{n_pw2} moved "
                f"band energies by {shift:.3e} (> {convergence_tol:.1e})"
            )
    return BlochSpectrum(
        period=float(period),
        phi=float(phi),
        n_bands=n_bands,
        k_samples=k_samples,
        energies=energies,
        coefficients=coeffs,
        pw_index=pw,
    )


def superlattice_bands(
    spec: SuperlatticeSpec,
    phi: float,
    n_bands: int = 5,
    n_k: int = 16,
    n_pw: int = 128,
    k_samples: np.ndarray | None = None,
    check_convergence: bool = False,
) -> BlochSpectrum:
    """Bloch bands of a (rational or single-lattice) superlattice."""
    period = spec.spatial_period()
    if period is None:
        raise ValueError("quasiperiodic potential has no Bloch bands; use an approximant")
    return bloch_bands(
        lambda x: potential_at_phi(spec, x, phi),
        period,
        n_bands=n_bands,
        n_k=n_k,
        n_pw=n_pw,
        k_samples=k_samples,
        check_convergence=check_convergence,
        phi=phi,
    )


def band_isolation(spectrum: BlochSpectrum, band: int) -> tuple[float, float]:
    """(bandwidth, min gap to the neighbors) for a 1-indexed band."""
    b = band - 1
    e = spectrum.energies
    width = float(e[b].max() - e[b].min())
    gaps = []
    if b > 0:
        gaps.append(float(e[b].min() - e[b - 1].max()))
    if b + 1 < spectrum.n_bands:
        gaps.append(float(e[b + 1].min() - e[b].max()))
    gap = min(gaps) if gaps else np.inf
    return width, gap


def _band_links(spectrum: BlochSpectrum, band: int) -> np.ndarray:
    """Wilson-loop link overlaps <u_k | u_{k+dk}> around the BZ.

    The closing link applies the reciprocal shift ``m -> m + 1`` that maps
    ``u_{k0 + G}`` back onto ``u_{k0}``'s plane-wave basis.
    """
    c = spectrum.coefficients[band - 1]
    n_k = c.shape[0]
    links = np.empty(n_k, dtype=complex)
    for j in range(n_k - 1):
        links[j] = np.vdot(c[j], c[j + 1])
    shifted = np.zeros_like(c[0])
    shifted[:-1] = c[0][1:]  # coefficient of m picked from m+1
    links[-1] = np.vdot(c[-1], shifted)
    if np.any(np.abs(links) < 1e-6):
        raise RuntimeError(
            "vanishing Wilson link: band crossing within the sampled momenta"
        )
    return links


def wannier_center(spectrum: BlochSpectrum, band: int) -> float:
    """Berry-phase Wannier center of a band, in [0, period)."""
    links = _band_links(spectrum, band)
    theta = -np.angle(np.prod(links / np.abs(links)))
    x = theta * spectrum.period / (2.0 * np.pi)
    return float(x % spectrum.period)


# ------------------------------------------------------- states on a grid


def bloch_states_on_grid(spectrum: BlochSpectrum, grid: Grid) -> np.ndarray:
    """Box-normalized Bloch states evaluated on a commensurate grid.

    The box must hold an integer (even) number of periods M, and the
    spectrum's momenta must be exactly the box-allowed ones; use
    ``box_momenta`` to build them.

    Returns an array of shape (n_bands, n_k, n_points).
    """
    m_cells = grid.length / spectrum.period
    if abs(m_cells - round(m_cells)) > 1e-8:
        raise ValueError(
            f"box length {grid.length} is not a multiple of period {spectrum.period}"
        )
    m_cells = int(round(m_cells))
    if m_cells != spectrum.n_k:
        raise ValueError(
            f"spectrum has {spectrum.n_k} momenta but the box holds {m_cells} cells"
        )
    g = 2.0 * np.pi / spectrum.period
    x = grid.x
    basis = np.exp(1j * g * np.outer(spectrum.pw_index, x))  # (n_pw, n_points)
    states = np.einsum("nkm,mx->nkx", spectrum.coefficients, basis)
    states *= np.exp(1j * np.outer(spectrum.k_samples, x))[np.newaxis, :, :]
    states /= np.sqrt(grid.length)
    return states


def box_momenta(grid: Grid, period: float) -> np.ndarray:
    """The box-allowed momenta folded into the first Brillouin zone."""
    m_cells = grid.length / period
    if abs(m_cells - round(m_cells)) > 1e-8:
        raise ValueError("box not commensurate with the period")
    m_cells = int(round(m_cells))
    if m_cells % 2:
        raise ValueError("need an even number of cells in the box")
    dk = 2.0 * np.pi / grid.length
    return dk * np.arange(-(m_cells // 2), m_cells // 2)


def _gauge_phases(links: np.ndarray) -> tuple[np.ndarray, float]:
    """Parallel-transport phases making every link real-positive, with the
    closing Berry phase spread uniformly (projected-position gauge)."""
    n_k = len(links)
    tau = links / np.abs(links)
    phases = np.empty(n_k, dtype=complex)
    phases[0] = 1.0
    for j in range(n_k - 1):
        phases[j + 1] = phases[j] * tau[j]
    total = np.angle(np.prod(tau))
    twist = np.exp(-1j * total * np.arange(n_k) / n_k)
    return phases.conj() * twist, total


def wannier_basis(
    spectrum: BlochSpectrum,
    band: int,
    grid: Grid,
    states: np.ndarray | None = None,
    isolation_factor: float = 10.0,
) -> WannierBasis:
    """Maximally localized Wannier functions of one isolated band.

    The construction diagonalizes the band-projected position operator
    (exact in 1D): in the Bloch basis that operator is the unimodularized
    Wilson link matrix, whose eigenvector phases are applied here in their
    closed parallel-transport form.  Centers come out equally spaced by one
    period; functions are cyclic translates of each other.

    ``isolation_factor`` rejects bands whose spectral gap is not at least
    that many times the bandwidth.
    """
    width, gap = band_isolation(spectrum, band)
    if gap <= 0:
        raise ValueError(f"band {band} crosses a neighbor within the sampled momenta")
    if width > 0 and gap < isolation_factor * width:
        raise ValueError(
            f"band {band} not isolated: gap {gap:.3e} < {isolation_factor} x width {width:.3e}"
        )
    if states is None:
        states = bloch_states_on_grid(spectrum, grid)
    links = _band_links(spectrum, band)
    gauge, total = _gauge_phases(links)
    m_cells = spectrum.n_k
    period = spectrum.period

    center0 = (-total * period / (2.0 * np.pi)) % period
    # place the first center inside the box
    center0 = grid.x_min + ((center0 - grid.x_min) % period)
    centers = center0 + period * np.arange(m_cells)

    smooth = states[band - 1] * gauge[:, np.newaxis]  # (n_k, n_points)
    shifts = np.exp(
        -1j * np.outer(centers - centers[0], spectrum.k_samples)
    )  # (m, n_k)
    funcs = (shifts @ smooth) / np.sqrt(m_cells)
    # global phase: make the peak sample of each function real-positive
    peak = funcs[np.arange(m_cells), np.argmax(np.abs(funcs), axis=1)]
    funcs = funcs * (np.abs(peak) / peak)[:, np.newaxis]
    return WannierBasis(
        band=band,
        period=period,
        grid=grid,
        cell_count=m_cells,
        centers=centers,
        functions=funcs,
    )


# ------------------------------------------------------------ occupations


def band_occupation(
    psi: ComplexField, bases: Sequence[WannierBasis]
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Band weights and Wannier amplitudes of a localized field.

    Returns ``(rho, coeffs)`` where ``coeffs[n][m] = <w_{n,m}|psi>/sqrt(N)``
    and ``rho[n] = sum_m |coeffs[n][m]|^2``; the weights obey the Bessel
    bound ``sum_n rho[n] <= 1`` for any field.
    """
    n = psi.norm()
    if n <= 0:
        raise ValueError("field has zero norm")
    dx = psi.grid.dx
    coeffs = []
    rho = np.empty(len(bases))
    for i, basis in enumerate(bases):
        a = (basis.functions.conj() @ psi.values) * dx / np.sqrt(n)
        coeffs.append(a)
        rho[i] = float(np.sum(np.abs(a) ** 2))
    return rho, coeffs


def occupations_from_states(psi: ComplexField, states: np.ndarray) -> np.ndarray:
    """Gauge-invariant band weights from Bloch states on the field's grid."""
    n = psi.norm()
    if n <= 0:
        raise ValueError("field has zero norm")
    amps = np.einsum("nkx,x->nk", states.conj(), psi.values) * psi.grid.dx
    return np.sum(np.abs(amps) ** 2, axis=1) / n


# ------------------------------------------------------------------ Chern


def _matched_centers(raw: list[float], period: float) -> np.ndarray:
    """Unwrap a mod-period center sequence into a continuous trace."""
    out = [raw[0]]
    for x in raw[1:]:
        prev = out[-1]
        shift = np.round((prev - x) / period)
        cand = x + period * shift
        if abs(cand - prev) > period / 2 + 1e-9:
            raise RuntimeError("branch matching failed: center jump >= period/2")
        out.append(cand)
    return np.asarray(out)


def wannier_center_trajectory(
    spec: SuperlatticeSpec,
    band: int,
    n_phi: int = 48,
    n_k: int = 16,
    n_pw: int = 128,
    phi_start: float | None = None,
    max_refinements: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Branch-matched Wannier-center trace over one pump cycle.

    The phase runs from ``phi_start`` through one cycle of pi in the drive's
    own direction (down for positive rate), inclusive of both endpoints.  If
    consecutive samples jump by half a period the phase grid is refined up
    to ``max_refinements`` times before giving up.
    """
    if phi_start is None:
        phi_start = spec.drive.phi0
    direction = -1.0 if spec.drive.rate >= 0 else +1.0
    period = spec.spatial_period()
    if period is None:
        raise ValueError("Chern diagnostics need a periodic (rational) lattice")
    attempt = n_phi
    for _ in range(max_refinements + 1):
        phis = phi_start + direction * np.pi * np.arange(attempt + 1) / attempt
        try:
            raw = [
                wannier_center(
                    superlattice_bands(spec, phi, n_bands=band + 1, n_k=n_k, n_pw=n_pw),
                    band,
                )
                for phi in phis
            ]
            return phis, _matched_centers(raw, period)
        except RuntimeError:
            attempt *= 2
    raise RuntimeError(
        f"branch matching failed for band {band} even at {attempt // 2} phase samples"
    )


def chern_number(
    spec: SuperlatticeSpec,
    band: int,
    n_phi: int = 48,
    n_k: int = 16,
    n_pw: int = 128,
    tol: float = 0.01,
    max_refinements: int = 2,
) -> ChernResult:
    """Chern number of a band as the Wannier-center winding per cycle.

    The winding is quantized in units of the lattice period; a non-integer
    result beyond ``tol`` (gap closing along the cycle) is rejected.
    """
    period = spec.spatial_period()
    phis, centers = wannier_center_trajectory(
        spec, band, n_phi=n_phi, n_k=n_k, n_pw=n_pw, max_refinements=max_refinements
    )
    winding = float(centers[-1] - centers[0])
    c = winding / period
    c_int = int(np.round(c))
    if abs(c - c_int) > tol:
        raise RuntimeError(
            f"non-integer Wannier winding {c:.4f} periods for band {band}; "
            "suspect a gap closing along the pump cycle"
        )
    return ChernResult(
        band=band, chern=c_int, winding=winding, unit=float(period), phis=phis, centers=centers
    )


# ------------------------------------------- self-consistent supercell


def self_consistent_chern(
    spec: SuperlatticeSpec,
    soliton_density: ComplexField | None,
    supercell_periods: int = 3,
    n_phi: int = 16,
    n_k: int = 8,
    n_pw: int = 160,
    n_bands: int = 20,
    edge_tol: float = 1e-8,
    tol: float = 0.05,
) -> ChernResult:
    """Chern number of the band reconstructed by a frozen soliton density.

    The density (modulus squared of the soliton, acting as an attractive
    well) is tiled with the period of a supercell of ``supercell_periods``
    lattice periods and co-translated rigidly with the sliding lattice,
    which is the center it tracks during pumped dynamics.  The co-translated
    family closes after one reset period (enough drive cycles for the
    sliding offset to accumulate a full lattice period L), at which point
    the whole configuration is the initial one translated by L; the winding
    of the density-bound band's Wannier center over that closed cycle,
    divided by L, is its Chern number.

    With no density nothing breaks the supercell folding, so the result is
    the linear lattice's Chern number over a single drive cycle.
    """
    period = spec.spatial_period()
    if period is None:
        raise ValueError("supercell analysis needs a rational approximant lattice")

    if soliton_density is None or float(np.max(np.abs(soliton_density.values))) == 0.0:
        # nothing breaks the folding symmetry; the supercell adds nothing
        return chern_number(spec, band=1, n_phi=max(n_phi, 32), n_k=max(n_k, 12), n_pw=n_pw)

    dens_grid = soliton_density.grid
    dens = np.abs(soliton_density.values).astype(float)
    p_sc = supercell_periods * period
    peak = float(dens.max())
    com = float(np.sum(dens_grid.x * dens) / np.sum(dens))
    # density must fit well inside the supercell
    rel = (dens_grid.x - com + p_sc / 2) % p_sc - p_sc / 2
    at_edge = np.abs(np.abs(rel) - p_sc / 2) < 2 * dens_grid.dx
    if np.any(dens[at_edge] > edge_tol * peak):
        raise ValueError(
            f"density at the supercell edge exceeds {edge_tol:g} of its peak; "
            "enlarge supercell_periods"
        )

    # density profile re-sampled over one supercell, centered on its own com
    n_fft = max(4 * n_pw, 1024)
    xi = np.arange(n_fft) * (p_sc / n_fft)
    wrapped = (xi + p_sc / 2) % p_sc - p_sc / 2
    order = np.argsort(rel)
    profile = np.interp(wrapped, rel[order], dens[order], left=0.0, right=0.0)
    prof_hat = np.fft.fft(profile) / n_fft
    g_sc = 2.0 * np.pi / p_sc
    harmonics = np.rint(np.fft.fftfreq(n_fft, d=1.0 / n_fft)).astype(int)

    if spec.sliding is SlidingTarget.LONG:
        slide_period = float(spec.alpha)
    else:
        slide_period = 0.5
    reset_cycles = int(round(period / slide_period))
    direction = -1.0 if spec.drive.rate >= 0 else +1.0

    n_samples = n_phi * reset_cycles
    phis = spec.drive.phi0 + direction * np.pi * reset_cycles * np.arange(n_samples + 1) / n_samples
    centers_raw: list[float] = []
    for phi in phis:
        # sliding offset accumulated since phi0, in the drive's direction
        slid = slide_period * abs(phi - spec.drive.phi0) / np.pi
        s = com + np.sign(spec.drive.rate if spec.drive.rate else 1.0) * slid
        lattice_samples = potential_at_phi(spec, xi, phi)
        dens_samples = np.real(np.fft.ifft(prof_hat * np.exp(-1j * g_sc * harmonics * s)) * n_fft)
        spectrum = bloch_bands(
            lattice_samples - dens_samples, p_sc, n_bands=n_bands, n_k=n_k, n_pw=n_pw, phi=phi
        )
        centers_b = np.array([wannier_center(spectrum, b + 1) for b in range(n_bands)])
        dist = np.abs((centers_b - s + p_sc / 2) % p_sc - p_sc / 2)
        band_pick = int(np.argmin(dist))
        if dist[band_pick] > 0.45 * slide_period:
            raise RuntimeError(
                f"no band center within {0.45 * slide_period:.3f} of the co-translated "
                f"density at phi={phi:.3f}; the density does not bind a band there"
            )
        centers_raw.append(float(centers_b[band_pick]))

    centers = _matched_centers(centers_raw, p_sc)
    winding = float(centers[-1] - centers[0])
    c = winding / period
    c_int = int(np.round(c))
    if abs(c - c_int) > tol:
        raise RuntimeError(
            f"reconstructed-band winding {winding:.4f} over the reset period is not "
            f"an integer multiple of the lattice period {period:.4f}"
        )
    return ChernResult(
        band=0,
        chern=c_int,
        winding=winding,
        unit=float(period),
        phis=phis,
        centers=centers,
    )

import dataclasses
from fractions import Fraction

import numpy as np
import pytest

from solpump.bands import (
    band_isolation,
    band_occupation,
    bloch_bands,
    bloch_states_on_grid,
    box_momenta,
    chern_number,
    occupations_from_states,
    self_consistent_chern,
    superlattice_bands,
    wannier_basis,
    wannier_center,
    wannier_center_trajectory,
)
from solpump.grid import Grid
from solpump.lattice import (
    DriveProtocol,
    PeriodRatio,
    SuperlatticeSpec,
    potential_at_phi,
)

ALPHA_58 = PeriodRatio.rational(Fraction(5, 8))
GOLDEN = PeriodRatio.named("golden")


def spec_58(p1=25.0, p2=25.0, rate=0.1):
    return SuperlatticeSpec(p1, p2, ALPHA_58, DriveProtocol(rate=rate))


@pytest.fixture(scope="module")
def spectrum_58():
    grid = grid_58()
    return superlattice_bands(spec_58(), phi=0.0, n_bands=5, n_k=16, n_pw=128)


def grid_58(cells=16):
    return Grid(-cells * 1.25, cells * 1.25, cells * 128)


# ----------------------------------------------------------------- bands


def test_free_particle_band():
    sp = bloch_bands(lambda x: 0.0 * x, period=1.0, n_bands=1, n_k=12, n_pw=32)
    expected = 0.5 * sp.k_samples**2
    assert np.max(np.abs(sp.energies[0] - expected)) < 1e-10


def test_lowest_band_isolated_deep_superlattice(spectrum_58):
    width, gap = band_isolation(spectrum_58, 1)
    assert gap > 10 * width


def test_spectrum_symmetric_under_k_reflection():
    # at phi = 0 the potential is inversion symmetric, so E(k) = E(-k)
    ks = np.linspace(-np.pi / 2.5, np.pi / 2.5, 9)
    sp_plus = superlattice_bands(spec_58(), 0.0, n_bands=3, k_samples=ks, n_pw=128)
    sp_minus = superlattice_bands(spec_58(), 0.0, n_bands=3, k_samples=-ks, n_pw=128)
    assert np.max(np.abs(sp_plus.energies - sp_minus.energies)) < 1e-9


def test_cutoff_convergence_check_passes():
    superlattice_bands(spec_58(), 0.3, n_bands=3, n_k=4, n_pw=96, check_convergence=True)


def test_cutoff_convergence_check_fires_when_starved():
    with pytest.raises(RuntimeError, match="not converged"):
        superlattice_bands(spec_58(), 0.3, n_bands=3, n_k=4, n_pw=12, check_convergence=True)


# --------------------------------------------------------------- Wannier


def test_wannier_center_tracks_a_displaced_lattice():
    a = 1.3
    for s in (0.0, 0.3, 0.9):
        sp = bloch_bands(lambda x: -10.0 * np.cos(np.pi * (x - s) / a) ** 2, a, n_bands=1, n_k=16, n_pw=64)
        assert wannier_center(sp, 1) == pytest.approx(s, abs=1e-9)


def test_wannier_functions_orthonormal_and_evenly_spaced(spectrum_58):
    grid = grid_58()
    basis = wannier_basis(spectrum_58, 1, grid)
    overlaps = basis.functions.conj() @ basis.functions.T * grid.dx
    assert np.max(np.abs(overlaps - np.eye(basis.cell_count))) < 1e-6
    spacing = np.diff(basis.centers)
    assert np.max(np.abs(spacing - 2.5)) < 1e-6


def test_wannier_density_peaks_at_potential_minimum(spectrum_58):
    grid = grid_58()
    basis = wannier_basis(spectrum_58, 1, grid)
    m = basis.cell_count // 2
    dens = np.abs(basis.functions[m]) ** 2
    x_peak = grid.x[np.argmax(dens)]
    v = potential_at_phi(spec_58(), grid.x, 0.0)
    window = np.abs(grid.x - x_peak) < 0.3
    x_min = grid.x[window][np.argmin(v[window])]
    assert abs(x_peak - x_min) <= grid.dx + 1e-12


def test_wannier_density_even_about_center(spectrum_58):
    grid = grid_58()
    basis = wannier_basis(spectrum_58, 1, grid)
    m = basis.cell_count // 2
    dens = np.abs(basis.functions[m]) ** 2
    x0 = basis.centers[m]
    # reflect through the center by interpolation
    xs = np.linspace(-1.0, 1.0, 301)
    left = np.interp(x0 - xs, grid.x, dens)
    right = np.interp(x0 + xs, grid.x, dens)
    assert np.max(np.abs(left - right)) < 1e-6 * dens.max()


def test_wannier_rejects_non_isolated_band(spectrum_58):
    with pytest.raises(ValueError, match="not isolated"):
        wannier_basis(spectrum_58, 3, grid_58(), isolation_factor=1e6)


# ----------------------------------------------------------- occupations


def wannier_frame(spec, grid, n_bands=5):
    mom = box_momenta(grid, 2.5)
    sp = superlattice_bands(spec, 0.0, n_bands=n_bands, k_samples=mom, n_pw=128)
    states = bloch_states_on_grid(sp, grid)
    bases = [wannier_basis(sp, b + 1, grid, states=states, isolation_factor=0.0) for b in range(n_bands)]
    return sp, states, bases


def test_occupation_of_a_basis_element():
    grid = grid_58()
    _, _, bases = wannier_frame(spec_58(), grid)
    n_target = 0.2
    psi = grid.field(np.sqrt(n_target) * bases[0].functions[bases[0].cell_count // 2])
    rho, coeffs = band_occupation(psi, bases)
    assert rho[0] == pytest.approx(1.0, abs=1e-8)
    assert np.max(rho[1:]) < 1e-10
    assert abs(coeffs[0][bases[0].cell_count // 2]) == pytest.approx(1.0, abs=1e-8)


def test_occupation_of_orthogonal_field():
    grid = grid_58()
    _, states, bases = wannier_frame(spec_58(), grid)
    # project a random field out of every computed band
    rng = np.random.default_rng(2)
    vals = rng.standard_normal(grid.n_points) * np.exp(-(grid.x**2) / 16)
    vals = vals.astype(complex)
    for basis in bases:
        amps = basis.functions.conj() @ vals * grid.dx
        vals = vals - amps @ basis.functions
    psi = grid.field(vals)
    rho, _ = band_occupation(psi, bases)
    assert np.max(rho) < 1e-8


def test_bessel_inequality_and_monotonicity():
    grid = grid_58()
    _, _, bases = wannier_frame(spec_58(), grid)
    rng = np.random.default_rng(5)
    vals = (rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)) * np.exp(
        -(grid.x**2) / 9
    )
    psi = grid.field(vals)
    rho, _ = band_occupation(psi, bases)
    totals = np.cumsum(rho)
    assert np.all(np.diff(totals) >= -1e-12)
    assert totals[-1] <= 1.0 + 1e-8


def test_occupations_gauge_invariant():
    grid = grid_58()
    sp, states, bases = wannier_frame(spec_58(), grid)
    vals = np.exp(-(grid.x**2)) * (1.0 + 0.3j)
    psi = grid.field(vals)
    rho_ref, _ = band_occupation(psi, bases)

    rng = np.random.default_rng(11)
    phases = np.exp(2j * np.pi * rng.random(sp.coefficients.shape[:2]))
    scrambled = dataclasses.replace(sp, coefficients=sp.coefficients * phases[:, :, None])
    states2 = bloch_states_on_grid(scrambled, grid)
    bases2 = [
        wannier_basis(scrambled, b + 1, grid, states=states2, isolation_factor=0.0)
        for b in range(len(bases))
    ]
    rho2, _ = band_occupation(psi, bases2)
    assert np.max(np.abs(rho2 - rho_ref)) < 1e-10
    rho3 = occupations_from_states(psi, states2)
    assert np.max(np.abs(rho3 - rho_ref)) < 1e-10


def test_wannier_and_bloch_occupations_agree():
    grid = grid_58()
    _, states, bases = wannier_frame(spec_58(), grid)
    vals = np.exp(-((grid.x - 1.2) ** 2) / 2) * np.exp(0.4j * grid.x)
    psi = grid.field(vals)
    rho_w, _ = band_occupation(psi, bases)
    rho_b = occupations_from_states(psi, states)
    assert np.max(np.abs(rho_w - rho_b)) < 1e-9


# ----------------------------------------------------------------- Chern


def test_sliding_single_lattice_chern_plus_one():
    for alpha in (GOLDEN, PeriodRatio.named("sqrt3"), PeriodRatio.rational(Fraction(5, 3))):
        spec = SuperlatticeSpec(0.0, 10.0, alpha, DriveProtocol(rate=0.1))
        res = chern_number(spec, 1, n_phi=24, n_k=8, n_pw=64)
        assert res.chern == 1
        assert res.unit == pytest.approx(float(alpha))


def test_reversed_drive_flips_winding():
    spec_fwd = SuperlatticeSpec(0.0, 10.0, GOLDEN, DriveProtocol(rate=0.1))
    spec_rev = SuperlatticeSpec(0.0, 10.0, GOLDEN, DriveProtocol(rate=-0.1))
    assert chern_number(spec_fwd, 1, n_phi=24, n_k=8, n_pw=64).chern == 1
    assert chern_number(spec_rev, 1, n_phi=24, n_k=8, n_pw=64).chern == -1


def test_superlattice_chern_ground_truth():
    # frozen as acceptance ground truth: lowest band of the alpha=5/8
    # superlattice winds by exactly -L per pump cycle
    res = chern_number(spec_58(), 1, n_phi=48, n_k=16, n_pw=128)
    assert res.chern == -1
    assert res.winding == pytest.approx(-2.5, abs=0.01)


def test_chern_stable_under_grid_refinement():
    spec = SuperlatticeSpec(25.0, 25.0, PeriodRatio.rational(Fraction(2, 3)), DriveProtocol(rate=0.1))
    coarse = chern_number(spec, 1, n_phi=16, n_k=8, n_pw=96)
    fine = chern_number(spec, 1, n_phi=32, n_k=16, n_pw=96)
    assert coarse.chern == fine.chern == -1


def test_gap_closing_cycle_rejected():
    # equal depths at alpha=1/2 make the potential exactly flat mid-cycle
    spec = SuperlatticeSpec(25.0, 25.0, PeriodRatio.rational(Fraction(1, 2)), DriveProtocol(rate=0.1))
    with pytest.raises(RuntimeError):
        chern_number(spec, 1, n_phi=32, n_k=16, n_pw=128, max_refinements=1)


def test_trajectory_endpoints_quantized():
    phis, centers = wannier_center_trajectory(spec_58(), 1, n_phi=32, n_k=12, n_pw=128)
    assert len(phis) == 33
    assert (centers[-1] - centers[0]) / 2.5 == pytest.approx(-1.0, abs=0.01)
    assert np.max(np.abs(np.diff(centers))) < 1.25  # branch-matched


# -------------------------------------------- self-consistent supercell


@pytest.fixture(scope="module")
def pinned_density():
    grid = Grid(-15.0, 15.0, 2048)
    dens = 12.0 * np.exp(-((grid.x) / 0.35) ** 2)
    return grid.field(dens)


def test_self_consistent_chern_follows_sliding_band(pinned_density):
    spec = SuperlatticeSpec(15.0, 15.0, ALPHA_58, DriveProtocol(rate=0.1))
    res = self_consistent_chern(spec, pinned_density, supercell_periods=3)
    assert res.chern == 1
    assert res.winding == pytest.approx(2.5, abs=0.05)


def test_self_consistent_chern_supercell_size_independent(pinned_density):
    spec = SuperlatticeSpec(15.0, 15.0, ALPHA_58, DriveProtocol(rate=0.1))
    r3 = self_consistent_chern(spec, pinned_density, supercell_periods=3)
    r5 = self_consistent_chern(spec, pinned_density, supercell_periods=5, n_pw=224, n_bands=26)
    assert r3.chern == r5.chern


def test_self_consistent_chern_zero_density_reduction(pinned_density):
    spec = SuperlatticeSpec(15.0, 15.0, ALPHA_58, DriveProtocol(rate=0.1))
    grid = pinned_density.grid
    rz = self_consistent_chern(spec, grid.field(np.zeros(grid.n_points)), supercell_periods=3)
    rl = chern_number(spec, 1, n_phi=32, n_k=12, n_pw=160)
    assert rz.chern == rl.chern


def test_self_consistent_chern_rejects_edge_density():
    grid = Grid(-3.75, 3.75, 1024)  # exactly one 3-period supercell of L=2.5
    dens = 12.0 * np.exp(-((grid.x) / 2.0) ** 2)  # too wide to fit
    spec = SuperlatticeSpec(15.0, 15.0, ALPHA_58, DriveProtocol(rate=0.1))
    with pytest.raises(ValueError, match="supercell edge"):
        self_consistent_chern(spec, grid.field(dens), supercell_periods=3)

import json
from fractions import Fraction

import numpy as np
import pytest

from solpump.dynamics import (
    AnalysisOptions,
    PropagationError,
    analysis_spec,
    band_occupation_timeseries,
    center_of_mass,
    dynamical_offset,
    per_cycle_displacement,
    propagate,
)
from solpump.grid import Grid
from solpump.lattice import (
    DriveProtocol,
    DrivenPotential,
    PeriodRatio,
    SlidingTarget,
    SuperlatticeSpec,
)
from solpump.soliton import energy, solve_at_norm

RATE = 0.1
T = np.pi / RATE


def spec_23(rate=RATE, phi0=0.0):
    return SuperlatticeSpec(
        25.0, 25.0, PeriodRatio.rational(Fraction(2, 3)), DriveProtocol(rate=rate, phi0=phi0)
    )


@pytest.fixture(scope="module")
def grid_23():
    return Grid(-24.0, 24.0, 4096)


@pytest.fixture(scope="module")
def soliton_23(grid_23):
    return solve_at_norm(spec_23(), grid_23, 0.2)


def free_potential(grid, rate=0.0):
    zeros = np.zeros(grid.n_points)
    return DrivenPotential(DriveProtocol(rate=rate), zeros, zeros.copy(), zeros.copy())


# -------------------------------------------------------------- center


def test_center_of_mass_even_density(grid_23):
    psi = grid_23.field(np.exp(-((grid_23.x - 3.0) ** 2)).astype(complex))
    assert center_of_mass(psi) == pytest.approx(3.0, abs=1e-10)


def test_center_of_mass_translation_covariance(grid_23):
    g = grid_23
    psi = g.field((1.0 / np.cosh(g.x + 5.0)).astype(complex))
    shift_pts = 300
    shifted = g.field(np.roll(psi.values, shift_pts))
    assert center_of_mass(shifted) - center_of_mass(psi) == pytest.approx(
        shift_pts * g.dx, abs=1e-10
    )


def test_center_of_mass_unwraps_across_the_seam(grid_23):
    g = grid_23
    psi = g.field((1.0 / np.cosh(2 * (np.abs(np.abs(g.x) - 24.0)))).astype(complex))
    xc = center_of_mass(psi)
    # density peaked at the seam: either image is acceptable, not the naive mean 0
    assert min(abs(xc - 24.0), abs(xc + 24.0)) < 0.05


def test_center_of_mass_rejects_delocalized(grid_23):
    psi = grid_23.field(np.ones(grid_23.n_points, dtype=complex))
    with pytest.raises(ValueError, match="unwrap anchor"):
        center_of_mass(psi)


# --------------------------------------------------------- propagation


def test_static_soliton_stays_put(grid_23, soliton_23):
    spec = spec_23(rate=0.0)
    traj = propagate(soliton_23, spec, T, dt=1e-3)
    assert abs(traj.displacement()) < 1e-4
    assert np.max(np.abs(traj.x_c - traj.x_c[0])) < 1e-4


def test_energy_conserved_static_drive(grid_23, soliton_23):
    spec = spec_23(rate=0.0)
    traj = propagate(
        soliton_23,
        spec,
        T,
        dt=5e-4,
        options=AnalysisOptions(absorber_fraction=0.0, edge_bound=1e-4),
    )
    e0 = energy(spec, soliton_23.psi)
    e1 = energy(spec, traj.final_state)
    assert abs(e1 - e0) / abs(e0) < 1e-8


def test_norm_conserved_to_rounding_without_absorber(grid_23, soliton_23):
    # the shed radiation wraps the box when nothing absorbs it (hence the
    # loose edge bound here), but the integrator itself is norm-preserving
    traj = propagate(
        soliton_23,
        spec_23(),
        T,
        dt=1e-3,
        options=AnalysisOptions(absorber_fraction=0.0, edge_bound=1e-2),
    )
    assert traj.norm_drift < 1e-6


def test_galilean_boost():
    grid = Grid(-200.0, 200.0, 4096)
    v0 = 0.5
    psi = grid.field(0.5 / np.cosh(0.5 * grid.x) * np.exp(1j * v0 * grid.x))
    traj = propagate(psi, free_potential(grid), 20.0, dt=1e-3)
    assert traj.displacement() == pytest.approx(v0 * 20.0, abs=1e-6)


def test_exact_time_reversibility_of_the_integrator(grid_23, soliton_23):
    # conjugating the state and reversing the drive must retrace the path
    # to roundoff, independent of any adiabaticity
    opts = AnalysisOptions(absorber_fraction=0.0, edge_bound=1e-2, norm_drift_bound=1e-2)
    fwd = propagate(soliton_23, spec_23(), T / 8, dt=1e-3, options=opts)
    spec_back = spec_23(rate=-RATE, phi0=float(spec_23().drive.phi(T / 8)))
    back = propagate(
        grid_23.field(fwd.final_state.values.conj()), spec_back, T / 8, dt=1e-3, options=opts
    )
    err = np.max(np.abs(back.final_state.values.conj() - soliton_23.psi.values))
    assert err < 1e-9


def test_dt_upper_bound_enforced(grid_23, soliton_23):
    with pytest.raises(ValueError, match="1e-2"):
        propagate(soliton_23, spec_23(), T, dt=0.02)


def test_edge_violation_aborts_with_partial_trajectory():
    grid = Grid(-40.0, 40.0, 2048)
    v0 = 2.0
    psi = grid.field(0.5 / np.cosh(0.5 * grid.x) * np.exp(1j * v0 * grid.x))
    with pytest.raises(PropagationError) as err:
        propagate(
            psi,
            free_potential(grid),
            60.0,
            dt=1e-3,
            options=AnalysisOptions(absorber_fraction=0.0),
        )
    traj = err.value.trajectory
    assert traj is not None
    assert traj.times[-1] < 60.0
    assert traj.x_c[-1] > 5.0  # it was moving before the abort


def test_per_cycle_displacement_static(grid_23, soliton_23):
    traj = propagate(soliton_23, spec_23(rate=0.0), T, dt=1e-3)
    # no finite drive period: no completed cycles to report
    assert per_cycle_displacement(traj).size == 0
    traj2 = propagate(soliton_23, spec_23(), T, dt=1e-3, options=AnalysisOptions(norm_drift_bound=5e-3))
    assert per_cycle_displacement(traj2).size == 1


# ----------------------------------------------------- band observables


def test_analysis_spec_variants():
    spec = SuperlatticeSpec(25.0, 25.0, PeriodRatio.named("sqrt3"), DriveProtocol(rate=RATE))
    sliding = analysis_spec(spec, AnalysisOptions(basis="sliding"))
    assert sliding.depth_short == 0.0
    approx = analysis_spec(spec, AnalysisOptions(basis="approximant", approximant_order=4))
    assert approx.alpha.is_rational
    short_slide = SuperlatticeSpec(
        25.0, 25.0, PeriodRatio.named("sqrt3"), DriveProtocol(rate=RATE), SlidingTarget.SHORT
    )
    sliding_short = analysis_spec(short_slide, AnalysisOptions(basis="sliding"))
    assert sliding_short.depth_long == 0.0
    with pytest.raises(ValueError, match="periodic"):
        analysis_spec(spec, AnalysisOptions(basis="superlattice"))


def test_occupations_recorded_during_run(grid_23, soliton_23):
    traj = propagate(
        soliton_23,
        spec_23(),
        T / 4,
        dt=1e-3,
        options=AnalysisOptions(
            basis="superlattice",
            samples_per_cycle=128,
            band_samples_per_cycle=16,
            norm_drift_bound=5e-3,
        ),
    )
    assert traj.rho is not None and traj.rho.shape[0] == 5
    assert traj.rho[0, 0] > 0.95  # starts almost fully in the lowest band
    assert np.all(traj.rho.sum(axis=0) <= 1.0 + 1e-8)


def test_projector_matches_wannier_occupations(grid_23, soliton_23):
    from solpump.bands import (
        band_occupation,
        bloch_states_on_grid,
        box_momenta,
        superlattice_bands,
        wannier_basis,
    )

    spec = spec_23()
    mom = box_momenta(grid_23, 2.0)
    sp = superlattice_bands(spec, 0.0, n_bands=5, k_samples=mom, n_pw=128)
    states = bloch_states_on_grid(sp, grid_23)
    bases = [
        wannier_basis(sp, b + 1, grid_23, states=states, isolation_factor=0.0) for b in range(5)
    ]
    rho_w, _ = band_occupation(soliton_23.psi, bases)

    ts, rho_p = band_occupation_timeseries(
        [(0.0, soliton_23.psi)], spec, AnalysisOptions(basis="superlattice")
    )
    assert np.max(np.abs(rho_p[:, 0] - rho_w)) < 1e-9


def test_dynamical_offset_static_symmetric(grid_23, soliton_23):
    d_direct, d_dec, weight = dynamical_offset(soliton_23.psi, spec_23(), phi=0.0)
    assert weight > 0.95
    assert abs(d_direct) < 1e-6
    assert abs(d_dec - d_direct) < 1e-3  # single-band truncation error


# ------------------------------------------------------------- exports


def test_trajectory_csv_roundtrip(tmp_path, grid_23, soliton_23):
    traj = propagate(
        soliton_23,
        spec_23(),
        T / 8,
        dt=1e-3,
        options=AnalysisOptions(
            basis="superlattice", samples_per_cycle=64, band_samples_per_cycle=8,
            norm_drift_bound=5e-3,
        ),
    )
    path = tmp_path / "traj.csv"
    traj.write_csv(path, manifest={"case": "unit"})
    lines = path.read_text().splitlines()
    assert json.loads(lines[0][2:]) == {"case": "unit"}
    header = lines[1].split(",")
    assert header[:4] == ["t", "phi", "x_c", "norm"]
    assert header[-1] == "rho_5"
    assert len(lines) == 2 + len(traj.times)
    # data rows parse and match
    row = lines[2].split(",")
    assert float(row[2]) == traj.x_c[0]

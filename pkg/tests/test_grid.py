import numpy as np
import pytest

from solpump.grid import (
    ComplexField,
    Grid,
    hermitian_eigensolve,
    norm,
    spectral_second_derivative,
)


@pytest.fixture
def box():
    return Grid(-20.0, 20.0, 1024)


def test_grid_spacing_and_axes(box):
    assert box.dx == pytest.approx(40.0 / 1024)
    assert box.x[0] == pytest.approx(-20.0)
    # endpoint excluded: last point one dx short of x_max
    assert box.x[-1] == pytest.approx(20.0 - box.dx)
    assert len(box.k) == box.n_points


def test_grid_rejects_tiny_production_grids():
    with pytest.raises(ValueError, match="production guard"):
        Grid(0.0, 1.0, 64)
    Grid(0.0, 1.0, 64, relax_resolution_guard=True)


def test_field_length_must_match(box):
    with pytest.raises(ValueError, match="does not match grid"):
        ComplexField(box, np.zeros(10, dtype=complex))


def test_second_derivative_of_constant_is_zero(box):
    f = box.field(np.full(box.n_points, 3.7 + 0.2j))
    d2 = spectral_second_derivative(f)
    assert np.max(np.abs(d2.values)) < 1e-12


def test_second_derivative_plane_wave_eigenfunction(box):
    # wavelength commensurate with the box: 8 periods across 40 units
    lam = 5.0
    f = box.field(np.exp(2j * np.pi * box.x / lam))
    d2 = spectral_second_derivative(f)
    expected = -((2 * np.pi / lam) ** 2) * f.values
    assert np.max(np.abs(d2.values - expected)) < 1e-10


def test_second_derivative_gaussian_vs_finite_difference(box):
    # independent oracle: 5-point central finite difference
    f = box.field(np.exp(-(box.x**2) / 4.0))
    d2 = spectral_second_derivative(f).values.real
    v = f.values.real
    fd = (
        -np.roll(v, -2) + 16 * np.roll(v, -1) - 30 * v + 16 * np.roll(v, 1) - np.roll(v, 2)
    ) / (12 * box.dx**2)
    interior = np.abs(box.x) < 10.0
    scale = np.max(np.abs(d2))
    assert np.max(np.abs(d2[interior] - fd[interior])) / scale < 1e-6


def test_second_derivative_is_linear(box):
    rng = np.random.default_rng(7)
    f = box.field(rng.standard_normal(box.n_points) + 1j * rng.standard_normal(box.n_points))
    g = box.field(rng.standard_normal(box.n_points) + 1j * rng.standard_normal(box.n_points))
    a, b = 1.3 - 0.4j, -0.7 + 2.1j
    lhs = spectral_second_derivative(box.field(a * f.values + b * g.values)).values
    rhs = a * spectral_second_derivative(f).values + b * spectral_second_derivative(g).values
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * max(1.0, np.max(np.abs(rhs)))


def test_second_derivative_rejects_nonfinite(box):
    vals = np.ones(box.n_points, dtype=complex)
    vals[5] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        spectral_second_derivative(box.field(vals))


def test_parseval(box):
    rng = np.random.default_rng(11)
    f = box.field(rng.standard_normal(box.n_points) + 1j * rng.standard_normal(box.n_points))
    power_x = np.sum(np.abs(f.values) ** 2) * box.dx
    fhat = np.fft.fft(f.values)
    power_k = np.sum(np.abs(fhat) ** 2) * box.dx / box.n_points
    assert power_x == pytest.approx(power_k, rel=1e-10)


def test_norm_zero_field(box):
    assert norm(box.field(np.zeros(box.n_points))) == 0.0


def test_norm_sech_soliton_analytic():
    # integral of (N/2)^2 sech^2((N/2) x) over the line equals N
    grid = Grid(-400.0, 400.0, 8192)
    n_target = 0.2
    psi = (n_target / 2) / np.cosh((n_target / 2) * grid.x)
    assert norm(grid.field(psi)) == pytest.approx(n_target, abs=1e-8)


def test_eigensolve_diagonal():
    vals, _ = hermitian_eigensolve(np.diag([1.0, 2.0]))
    assert np.allclose(vals, [1.0, 2.0])


def test_eigensolve_pauli_x():
    vals, vecs = hermitian_eigensolve(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(vals, [-1.0, 1.0])
    # orthonormal
    assert np.allclose(vecs.conj().T @ vecs, np.eye(2), atol=1e-12)


def test_eigensolve_random_hermitian_residual():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    h = 0.5 * (a + a.conj().T)
    vals, vecs = hermitian_eigensolve(h)
    assert np.all(np.diff(vals) >= -1e-14)
    res = h @ vecs - vecs * vals[np.newaxis, :]
    assert np.max(np.abs(res)) < 1e-10
    # deterministic: identical input gives identical output including phases
    vals2, vecs2 = hermitian_eigensolve(h.copy())
    assert np.array_equal(vals, vals2)
    assert np.array_equal(vecs, vecs2)


def test_eigensolve_phase_convention():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    h = 0.5 * (a + a.conj().T)
    _, vecs = hermitian_eigensolve(h)
    for j in range(6):
        anchor = vecs[np.argmax(np.abs(vecs[:, j])), j]
        assert abs(anchor.imag) < 1e-12
        assert anchor.real > 0


def test_eigensolve_rejects_non_hermitian():
    with pytest.raises(ValueError, match="not Hermitian"):
        hermitian_eigensolve(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="square"):
        hermitian_eigensolve(np.zeros((2, 3)))

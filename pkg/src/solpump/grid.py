"""Shared numerical substrate: periodic grids, complex fields, spectral
derivatives, and dense Hermitian eigensolves.

All types are immutable value objects; all operations are pure functions.
The spatial domain is a periodic box (the point at ``x_max`` is identified
with ``x_min``), which stands in for the infinite line: every field this
package produces decays exponentially well inside the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "ComplexField",
    "norm",
    "spectral_second_derivative",
    "hermitian_eigensolve",
]

#: Minimum production resolution; constructors accept smaller grids only
#: when explicitly told to (tests, toys).
MIN_PRODUCTION_POINTS = 256


@dataclass(frozen=True)
class Grid:
    """Uniform periodic 1D grid on [x_min, x_max).

    ``dx = (x_max - x_min) / n_points``; the endpoint is excluded because it
    is identified with ``x_min``.
    """

    x_min: float
    x_max: float
    n_points: int
    relax_resolution_guard: bool = field(default=False, repr=False)

    def __post_init__(self) -> None:
        if self.x_max <= self.x_min:
            raise ValueError(f"empty box: [{self.x_min}, {self.x_max})")
        if self.n_points < 4:
            raise ValueError("need at least 4 grid points")
        if self.n_points < MIN_PRODUCTION_POINTS and not self.relax_resolution_guard:
            raise ValueError(
                f"n_points={self.n_points} below production guard "
                f"{MIN_PRODUCTION_POINTS}; pass relax_resolution_guard=True for toys"
            )

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """FFT angular wavenumbers matching numpy's fft ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def field(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self, np.asarray(values, dtype=complex))


@dataclass(frozen=True)
class ComplexField:
    """Complex wavefunction samples on a periodic grid.

    The ``values`` array is owned by the field and must not be mutated;
    operations always allocate fresh arrays.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.grid.n_points,):
            raise ValueError(
                f"field length {self.values.shape} does not match grid "
                f"({self.grid.n_points},)"
            )

    def norm(self) -> float:
        return norm(self)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self.grid, np.asarray(values, dtype=complex))


def norm(f: ComplexField) -> float:
    """Total power sum(|psi_i|^2) * dx."""
    return float(np.sum(np.abs(f.values) ** 2) * f.grid.dx)


def spectral_second_derivative(f: ComplexField) -> ComplexField:
    """Second spatial derivative via the discrete Fourier transform.

    Exact for fields band-limited on the periodic box.  Rejects non-finite
    input values.
    """
    if not np.all(np.isfinite(f.values)):
        bad = int(np.flatnonzero(~np.isfinite(f.values))[0])
        raise ValueError(f"non-finite field value at grid index {bad}")
    k = f.grid.k
    out = np.fft.ifft(-(k**2) * np.fft.fft(f.values))
    return f.with_values(out)


def hermitian_eigensolve(
    H: np.ndarray,
    k: int | None = None,
    hermiticity_tol: float = 1e-10,
):
    """Ascending eigenpairs of a dense Hermitian matrix.

    The input must be square and Hermitian to ``hermiticity_tol`` (relative
    to its largest entry); it is then explicitly symmetrized so repeated
    calls are bitwise reproducible.  Eigenvector phases are fixed by making
    each vector's largest-magnitude component real and positive.

    Parameters
    ----------
    H : ndarray
        Dense complex (or real) Hermitian matrix.
    k : int, optional
        Keep only the lowest ``k`` eigenpairs.

    Returns
    -------
    (eigenvalues, eigenvectors)
        ``eigenvalues[i]`` ascending real; ``eigenvectors[:, i]`` the
        matching orthonormal column.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"matrix must be square, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H))))
    dev = float(np.max(np.abs(H - H.conj().T)))
    if dev > hermiticity_tol * scale:
        raise ValueError(
            f"matrix not Hermitian: max|H - H^dag| = {dev:.3e} "
            f"(tolerance {hermiticity_tol * scale:.3e})"
        )
    Hs = 0.5 * (H + H.conj().T)
    vals, vecs = np.linalg.eigh(Hs)
    if k is not None:
        vals = vals[:k]
        vecs = vecs[:, :k]
    # Fixed sign/phase convention: largest-|component| entry real-positive.
    idx = np.argmax(np.abs(vecs), axis=0)
    anchors = vecs[idx, np.arange(vecs.shape[1])]
    phases = anchors / np.abs(anchors)
    vecs = vecs / phases[np.newaxis, :]
    return vals, vecs

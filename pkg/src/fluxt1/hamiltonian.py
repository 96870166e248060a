"""Fluxonium circuit spectrum: eigenenergies and operator matrix elements.

The circuit Hamiltonian is

    H = 4 E_C n^2 - E_J cos(phi) + E_L (phi - 2 pi Phi_ext/Phi0)^2 / 2

with all energies handled as linear frequencies (Hz, i.e. E/h). Angular
frequencies appear only inside downstream rate formulas. Diagonalization
uses the harmonic-oscillator basis of the linear LC sub-circuit, shifted so
the quadratic well is centered (the external flux then lives inside the
cosine). The basis is grown until retained energies are stable to one part
in 1e9, so results do not depend on the starting truncation.

All functions here are pure; ``Spectrum`` values are immutable (backing
arrays are write-locked) and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from .constants import E_CHARGE, H
from .errors import ConvergenceError

DEFAULT_BASIS_DIM = 120
BASIS_GROWTH = 20
MAX_BASIS_DIM = 600
CONVERGENCE_RTOL = 1e-9


@dataclass(frozen=True)
class FluxoniumParams:
    """Circuit energies as linear frequencies: ej = E_J/h, ec = E_C/h, el = E_L/h (Hz)."""

    ej: float
    ec: float
    el: float

    def __post_init__(self):
        for name in ("ej", "ec", "el"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def c_sigma(self) -> float:
        """Total shunt capacitance (F), from E_C = e^2 / (2 C_sigma)."""
        return E_CHARGE**2 / (2.0 * H * self.ec)


@dataclass(frozen=True)
class FluxBias:
    """External flux in units of the flux quantum, Phi_ext/Phi0."""

    phi_ext: float

    def __post_init__(self):
        if not math.isfinite(self.phi_ext):
            raise ValueError(f"phi_ext must be finite, got {self.phi_ext!r}")


@dataclass(frozen=True)
class Spectrum:
    """Truncated eigensystem of the fluxonium circuit.

    energies are ascending eigenenergies in Hz. n_elem, phi_elem and
    sin_half_elem are n_levels x n_levels matrix elements of the reduced
    charge, phase, and sin(phi/2) operators in the energy eigenbasis. The
    generating parameters and bias are carried along because downstream rate
    formulas need the circuit energies together with the matrix elements.
    """

    params: FluxoniumParams
    bias: FluxBias
    energies: np.ndarray
    n_elem: np.ndarray
    phi_elem: np.ndarray
    sin_half_elem: np.ndarray
    basis_dim: int
    n_levels: int
    # diagonal of phi' (well-centered phase) per level, used for flux dispersion
    _phi_centered_diag: np.ndarray = field(repr=False, default=None)

    def transition_frequency(self, i: int, j: int) -> float:
        return transition_frequency(self, i, j)


def _lock(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=8)
def _phase_basis(dim: int):
    """Eigenbasis of the dimensionless phase quadrature x = a + a^dag.

    Returns (lam, d2_x, d_x): eigenvalues of the truncated x, plus the
    truncated (a^dag - a)^2 and (a^dag - a) operators rotated into that
    eigenbasis. Everything here is parameter-free, so one decomposition per
    truncation serves all circuits; in the x eigenbasis the potential is
    diagonal and only the kinetic term stays dense.
    """
    ladder = np.sqrt(np.arange(1.0, dim))
    lam, u = eigh_tridiagonal(np.zeros(dim), ladder)
    a = np.diag(ladder, 1)
    d = a.T - a
    d_x = u.T @ d @ u
    d2_x = d_x @ d_x
    for arr in (lam, d2_x, d_x):
        arr.setflags(write=False)
    return lam, d2_x, d_x


def _solve_basis(params: FluxoniumParams, phi_ext: float, n_levels: int, dim: int):
    """Diagonalize at a fixed oscillator-basis truncation ``dim``."""
    phi_zpf = (2.0 * params.ec / params.el) ** 0.25
    n_zpf = 0.5 / phi_zpf
    theta = 2.0 * np.pi * phi_ext

    lam, d2_x, d_x = _phase_basis(dim)
    phi_grid = phi_zpf * lam  # diagonal of phi' in its own eigenbasis
    h_mat = -4.0 * params.ec * n_zpf**2 * d2_x
    idx = np.arange(dim)
    h_mat[idx, idx] += -params.ej * np.cos(phi_grid + theta) + 0.5 * params.el * phi_grid**2
    energies, vecs = eigh(h_mat)

    v = vecs[:, :n_levels]
    phi_centered = (v.T * phi_grid) @ v
    n_elem = 1j * n_zpf * (v.T @ d_x @ v)
    sin_half_elem = (v.T * np.sin(0.5 * (phi_grid + theta))) @ v
    phi_elem = phi_centered + theta * np.eye(n_levels)

    return energies[:n_levels].copy(), n_elem, phi_elem, sin_half_elem, np.diag(phi_centered).copy()


def diagonalize(
    params: FluxoniumParams,
    bias: FluxBias,
    n_levels: int = 6,
    basis_dim: int = DEFAULT_BASIS_DIM,
    convergence_rtol: float = CONVERGENCE_RTOL,
) -> Spectrum:
    """Diagonalize the circuit and return a converged ``Spectrum``.

    The truncation starts at ``basis_dim`` and grows in steps of 20 until the
    retained energies move by less than ``convergence_rtol`` (relative to the
    spectrum scale) under one further growth step. Raises
    :class:`ConvergenceError` carrying the last delta if the cap is reached.
    """
    if n_levels < 2:
        raise ValueError(f"n_levels must be >= 2, got {n_levels}")
    dim = max(int(basis_dim), n_levels + 10)

    prev_energies, *_ = _solve_basis(params, bias.phi_ext, n_levels, dim)
    delta = np.inf
    while dim + BASIS_GROWTH <= MAX_BASIS_DIM:
        dim += BASIS_GROWTH
        energies, n_elem, phi_elem, sin_half_elem, phi_diag = _solve_basis(
            params, bias.phi_ext, n_levels, dim
        )
        scale = max(float(np.max(np.abs(energies))), 1.0)
        delta = float(np.max(np.abs(energies - prev_energies))) / scale
        if delta < convergence_rtol:
            return Spectrum(
                params=params,
                bias=bias,
                energies=_lock(energies),
                n_elem=_lock(n_elem),
                phi_elem=_lock(phi_elem),
                sin_half_elem=_lock(sin_half_elem),
                basis_dim=dim,
                n_levels=n_levels,
                _phi_centered_diag=_lock(phi_diag),
            )
        prev_energies = energies
    raise ConvergenceError(
        f"spectrum not converged at basis_dim={dim} "
        f"(last relative change {delta:.3e} >= {convergence_rtol:.1e})",
        last_delta=delta,
    )


def transition_frequency(spec: Spectrum, i: int, j: int) -> float:
    """Signed transition frequency energies[j] - energies[i] in Hz."""
    n = spec.n_levels
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"level indices ({i}, {j}) out of range for n_levels={n}")
    return float(spec.energies[j] - spec.energies[i])


def flux_dispersion(params: FluxoniumParams, bias: FluxBias, **diag_kwargs) -> float:
    """Slope of the 0->1 angular transition frequency vs external flux.

    Returns d(omega_01)/d(Phi_ext/Phi0) in rad/s per Phi0, computed via the
    Hellmann-Feynman derivative of the inductive term:
    dE_k/d(phi_ext) = -2 pi E_L <k|phi - 2 pi phi_ext|k>.
    """
    spec = diagonalize(params, bias, n_levels=max(2, diag_kwargs.pop("n_levels", 2)), **diag_kwargs)
    de = -2.0 * np.pi * params.el * spec._phi_centered_diag
    return float(2.0 * np.pi * (de[1] - de[0]))


def spectrum_vs_flux(
    params: FluxoniumParams,
    flux_grid: list[FluxBias],
    n_levels: int = 6,
    **diag_kwargs,
) -> list[Spectrum]:
    """Diagonalize at every bias in ``flux_grid`` (order preserved)."""
    if len(flux_grid) == 0:
        raise ValueError("flux_grid must be nonempty")
    out = []
    for k, bias in enumerate(flux_grid):
        try:
            out.append(diagonalize(params, bias, n_levels=n_levels, **diag_kwargs))
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"diagonalization failed at flux grid index {k} "
                f"(phi_ext={bias.phi_ext}): {exc}",
                last_delta=exc.last_delta,
            ) from exc
    return out

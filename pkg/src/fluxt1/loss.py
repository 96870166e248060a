"""Directional transition rates for every modeled energy-relaxation channel.

Each mechanism yields a full table of rates Gamma_{i->j} between circuit
eigenstates, generalizing the usual 0<->1 golden-rule expressions to arbitrary
level pairs. Mechanisms driven by a thermal bath split their symmetrized pair
rate into directional emission/absorption factors (coth(x) +- 1)/2, the unique
split whose stationary state is the Boltzmann distribution. 1/f flux noise is
treated as classical symmetric noise (equal up/down rates): its temperature
dependence lives inside the measured noise amplitude, so imposing a quantum
asymmetry on top would double count.

Temperatures: the Purcell channel thermalizes with the readout environment
(t_res); every other thermal channel uses the qubit temperature (t_qubit).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .constants import E_CHARGE, H, HBAR, K_B, PHI0
from .errors import QuasiparticleEnergyWarning, ZeroTransitionError
from .hamiltonian import Spectrum
from .resonator import ResonatorParams, coupling_capacitance

# Control and readout lines present a matched microwave environment.
LINE_IMPEDANCE = 50.0  # Ohm

Q_REFERENCE_FREQUENCY = 6e9  # Hz, pivot of the quality-factor power law


class Mechanism(str, Enum):
    CAPACITIVE = "capacitive"
    FLUX_NOISE = "flux_noise"
    QP_JUNCTION = "qp_junction"
    QP_ARRAY = "qp_array"
    CHARGE_LINE = "charge_line"
    FLUX_LINE = "flux_line"
    PURCELL = "purcell"


# Channels included when converting measured relaxation into a capacitive
# quality factor (quasiparticle tunneling is treated as negligible).
ANALYSIS_MECHANISMS = (
    Mechanism.CAPACITIVE,
    Mechanism.FLUX_NOISE,
    Mechanism.CHARGE_LINE,
    Mechanism.FLUX_LINE,
    Mechanism.PURCELL,
)

# Channels other than the capacitive one whose predictions gate the
# exclusion filter in the analysis pipeline.
BACKGROUND_MECHANISMS = (
    Mechanism.FLUX_NOISE,
    Mechanism.CHARGE_LINE,
    Mechanism.FLUX_LINE,
    Mechanism.PURCELL,
)


@dataclass(frozen=True)
class Environment:
    """Bath temperatures, noise amplitudes, and coupling constants.

    a_phi is the 1/f flux-noise power at 1 Hz in units of Phi0^2 (the square
    of the usual sqrt(A_phi) quoted in uPhi0/sqrt(Hz)). gap is the
    superconducting gap as a frequency (44 GHz is thin-film aluminum).
    qc_eff and epsilon parameterize the frequency-dependent capacitive
    quality factor Q'(f) = qc_eff * (6 GHz / f)^epsilon.
    """

    t_qubit: float = 0.040
    t_res: float = 0.065
    a_phi: float = 0.0
    alpha: float = 1.0
    x_qp: float = 0.0
    gap: float = 44e9
    c_drive: float = 20e-18
    m_drive: float = PHI0 / 0.0215
    n_array: int = 151
    qc_eff: float = 3.0e5
    epsilon: float = 0.25

    def __post_init__(self):
        if not self.t_qubit > 0.0:
            raise ValueError(f"t_qubit must be > 0, got {self.t_qubit!r}")
        if not self.t_res > 0.0:
            raise ValueError(f"t_res must be > 0, got {self.t_res!r}")
        if not self.qc_eff > 0.0:
            raise ValueError(f"qc_eff must be > 0, got {self.qc_eff!r}")
        if self.n_array < 1:
            raise ValueError(f"n_array must be >= 1, got {self.n_array!r}")
        for name in ("a_phi", "x_qp"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if not self.gap > 0.0:
            raise ValueError(f"gap must be > 0, got {self.gap!r}")


@dataclass(frozen=True)
class MechanismRateTable:
    """N x N directional rates for one mechanism; rates[i, j] = Gamma_{i->j}."""

    mechanism: Mechanism
    rates: np.ndarray

    @property
    def n(self) -> int:
        return self.rates.shape[0]

    def pair_sum(self, i: int = 0, j: int = 1) -> float:
        """Gamma_{i->j} + Gamma_{j->i}, the symmetrized two-level rate."""
        return float(self.rates[i, j] + self.rates[j, i])


def q_of_frequency(env: Environment, f: float) -> float:
    """Capacitive quality factor at transition frequency f (Hz)."""
    if not f > 0.0:
        raise ValueError(f"frequency must be > 0, got {f!r}")
    return env.qc_eff * (Q_REFERENCE_FREQUENCY / f) ** env.epsilon


def _directional_factors(f: float, temperature: float) -> tuple[float, float]:
    """(emission, absorption) thermal factors (coth(x) +- 1)/2 at x = hf/2kT.

    Their sum is coth(x) and their ratio is exp(hf/kT), so a pair built from
    them keeps the symmetrized total while obeying detailed balance. Written
    via expm1 so the high-frequency limit (emission -> 1, absorption -> 0)
    is exact instead of overflowing.
    """
    x = H * f / (2.0 * K_B * temperature)
    absorption = 0.0 if x > 350.0 else 1.0 / math.expm1(2.0 * x)
    return 1.0 + absorption, absorption


def _pair(spec: Spectrum, i: int, j: int) -> tuple[float, bool]:
    """(|transition frequency| in Hz, True if i->j emits energy)."""
    if i == j:
        raise ValueError(f"level pair requires i != j, got i=j={i}")
    n = spec.n_levels
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"level indices ({i}, {j}) out of range for n_levels={n}")
    f_ij = float(spec.energies[j] - spec.energies[i])
    return abs(f_ij), f_ij < 0.0


def _elem2(matrix, i: int, j: int) -> float:
    """|matrix element|^2 read from the canonical (lower, upper) slot.

    |M_ij| = |M_ji| holds mathematically, but the two float entries can differ
    at roundoff on parity-forbidden pairs; reading one canonical slot keeps
    up/down rate pairs exactly consistent.
    """
    lo, hi = (i, j) if i < j else (j, i)
    return abs(matrix[lo, hi]) ** 2


def rate_capacitive(spec: Spectrum, env: Environment, i: int, j: int) -> float:
    """Dielectric (capacitive) loss rate Gamma_{i->j} in 1/s.

    Pair total: (16 E_C / (hbar Q'(f))) |<i|n|j>|^2 coth(hf/2kT).
    """
    f, downward = _pair(spec, i, j)
    elem2 = _elem2(spec.n_elem, i, j)
    if elem2 == 0.0:
        return 0.0
    if f == 0.0:
        raise ZeroTransitionError(f"degenerate pair ({i}, {j}): capacitive rate undefined")
    prefactor = 16.0 * H * spec.params.ec / (HBAR * q_of_frequency(env, f)) * elem2
    down, up = _directional_factors(f, env.t_qubit)
    return prefactor * (down if downward else up)


def rate_flux_noise(spec: Spectrum, env: Environment, i: int, j: int) -> float:
    """1/f flux-noise rate Gamma_{i->j} = Gamma_{j->i} in 1/s.

    Golden rule with S_Phi(w) = (2 pi A_phi / w)^alpha and inductive coupling
    (2 pi E_L / Phi0) phi; at alpha = 1 this is
    4 pi (2 pi E_L / (hbar Phi0))^2 |<i|phi|j>|^2 A_phi / w.
    """
    f, _ = _pair(spec, i, j)
    if env.a_phi == 0.0:
        return 0.0
    if f == 0.0:
        raise ZeroTransitionError(f"degenerate pair ({i}, {j}): flux-noise rate undefined")
    omega = 2.0 * math.pi * f
    coupling = 2.0 * math.pi * H * spec.params.el / PHI0
    elem2 = _elem2(spec.phi_elem, i, j)
    s_phi = (2.0 * math.pi * env.a_phi * PHI0**2 / omega) ** env.alpha
    return 2.0 / HBAR**2 * coupling**2 * elem2 * s_phi


def rate_quasiparticle(
    spec: Spectrum, env: Environment, i: int, j: int, site: str | Mechanism = "junction"
) -> float:
    """Quasiparticle tunneling rate Gamma_{i->j} in 1/s.

    site="junction": tunneling across the single junction, coupling through
    sin(phi/2) with E_J prefactor. site="array": summed tunneling across the
    series array junctions; with the per-junction phase drop linearized the
    junction count cancels and the printed closed form carries 2 E_L and the
    full |<i|phi|j>|^2 element. Upward rates carry the Boltzmann suppression
    exp(-hf/kT) consistent with detailed balance.
    """
    f, downward = _pair(spec, i, j)
    if env.x_qp == 0.0:
        return 0.0
    if f == 0.0:
        raise ZeroTransitionError(f"degenerate pair ({i}, {j}): quasiparticle rate undefined")
    if f > env.gap / 10.0:
        warnings.warn(
            f"transition ({i}, {j}) at {f:.3e} Hz is above gap/10 = {env.gap / 10:.3e} Hz; "
            "the low-energy quasiparticle spectral density is inaccurate here",
            QuasiparticleEnergyWarning,
            stacklevel=2,
        )
    site_name = site.value if isinstance(site, Mechanism) else str(site)
    if site_name in ("junction", Mechanism.QP_JUNCTION.value):
        prefactor = 16.0 * H * spec.params.ej * env.x_qp / (math.pi * HBAR)
        elem2 = _elem2(spec.sin_half_elem, i, j)
    elif site_name in ("array", Mechanism.QP_ARRAY.value):
        prefactor = 2.0 * H * spec.params.el * env.x_qp / (math.pi * HBAR)
        elem2 = _elem2(spec.phi_elem, i, j)
    else:
        raise ValueError(f"unknown quasiparticle site {site!r}")
    down_rate = prefactor * math.sqrt(2.0 * env.gap / f) * elem2
    if downward:
        return down_rate
    return down_rate * math.exp(-H * f / (K_B * env.t_qubit))


def rate_radiative(
    spec: Spectrum, env: Environment, i: int, j: int, line: str | Mechanism = "charge"
) -> float:
    """Radiative loss to a control line, Gamma_{i->j} in 1/s.

    line="charge": voltage noise from the matched environment couples through
    the drive capacitance C_d across the charge operator,
    Gamma = (2/hbar^2) (2e C_d/C_Sigma)^2 |<i|n|j>|^2 S_V with
    S_V = hbar w Z coth(x). line="flux": current noise couples through the
    mutual M_d across the phase operator,
    Gamma = (2/hbar^2) (2 pi E_L M_d/Phi0)^2 |<i|phi|j>|^2 S_I with
    S_I = hbar w coth(x) / Z.
    """
    f, downward = _pair(spec, i, j)
    line_name = line.value if isinstance(line, Mechanism) else str(line)
    if line_name in ("charge", Mechanism.CHARGE_LINE.value):
        if env.c_drive == 0.0:
            return 0.0
        coupling = 2.0 * E_CHARGE * env.c_drive / spec.params.c_sigma
        elem2 = _elem2(spec.n_elem, i, j)
        spectral = HBAR * (2.0 * math.pi * f) * LINE_IMPEDANCE
    elif line_name in ("flux", Mechanism.FLUX_LINE.value):
        if env.m_drive == 0.0:
            return 0.0
        coupling = 2.0 * math.pi * H * spec.params.el * env.m_drive / PHI0
        elem2 = _elem2(spec.phi_elem, i, j)
        spectral = HBAR * (2.0 * math.pi * f) / LINE_IMPEDANCE
    else:
        raise ValueError(f"unknown radiative line {line!r}")
    if elem2 == 0.0 or f == 0.0:
        return 0.0
    pair_total = 2.0 / HBAR**2 * coupling**2 * elem2 * spectral
    down, up = _directional_factors(f, env.t_qubit)
    return pair_total * (down if downward else up)


def purcell_impedance(res: ResonatorParams, f: float) -> complex:
    """Input impedance (Ohm) of the feedline filtered by the readout resonator.

    Quarter-wave line of impedance Z0, inductively coupled to a matched
    feedline with mutual M inferred from the resonator quality factor:
    M = (Z0/w_res) sqrt(pi/(2 Q_res)). Written with cos/sin instead of cot so
    cotangent poles evaluate to their finite limits.
    """
    if not f > 0.0:
        raise ValueError(f"frequency must be > 0, got {f!r}")
    omega = 2.0 * math.pi * f
    omega_res = 2.0 * math.pi * res.omega_res
    m = purcell_mutual_inductance(res)
    theta = math.pi * f / (2.0 * res.omega_res)
    c, s = math.cos(theta), math.sin(theta)
    z0 = res.z0
    num = omega**2 * m**2 * c + 2j * z0**2 * s
    den = 2.0 * z0**2 * c + 1j * omega**2 * m**2 * s
    return complex(z0 * num / den)


def purcell_mutual_inductance(res: ResonatorParams) -> float:
    """Resonator-feedline mutual (H) implied by the loaded quality factor."""
    omega_res = 2.0 * math.pi * res.omega_res
    return res.z0 / omega_res * math.sqrt(math.pi / (2.0 * res.q_res))


def rate_purcell(
    spec: Spectrum, res: ResonatorParams, env: Environment, i: int, j: int
) -> float:
    """Radiative loss through the readout resonator, Gamma_{i->j} in 1/s.

    Pair total (8 e^2 w / hbar) (C_c/C_Sigma)^2 |<i|n|j>|^2 Re[Z_in(w)] coth(x),
    thermalized with the resonator environment at t_res.
    """
    f, downward = _pair(spec, i, j)
    if res.g == 0.0:
        return 0.0
    elem2 = _elem2(spec.n_elem, i, j)
    if elem2 == 0.0:
        return 0.0
    if f == 0.0:
        raise ZeroTransitionError(f"degenerate pair ({i}, {j}): Purcell rate undefined")
    c_sigma = spec.params.c_sigma
    c_c = coupling_capacitance(res, c_sigma)
    omega = 2.0 * math.pi * f
    re_zin = purcell_impedance(res, f).real
    pair_total = (
        8.0 * E_CHARGE**2 * omega / HBAR * (c_c / c_sigma) ** 2 * elem2 * re_zin
    )
    down, up = _directional_factors(f, env.t_res)
    return pair_total * (down if downward else up)


def build_mechanism_table(
    spec: Spectrum,
    res: ResonatorParams | None,
    env: Environment,
    mechanism: Mechanism,
) -> MechanismRateTable:
    """Fill the full directional rate table for one mechanism.

    ``res`` is only consulted by the Purcell channel and may be None for the
    others. Per-pair errors propagate with the offending indices in their
    message.
    """
    mechanism = Mechanism(mechanism)
    if mechanism is Mechanism.PURCELL:
        if res is None:
            raise ValueError("Purcell rates require resonator parameters")
        rate = lambda i, j: rate_purcell(spec, res, env, i, j)  # noqa: E731
    elif mechanism is Mechanism.CAPACITIVE:
        rate = lambda i, j: rate_capacitive(spec, env, i, j)  # noqa: E731
    elif mechanism is Mechanism.FLUX_NOISE:
        rate = lambda i, j: rate_flux_noise(spec, env, i, j)  # noqa: E731
    elif mechanism is Mechanism.QP_JUNCTION:
        rate = lambda i, j: rate_quasiparticle(spec, env, i, j, site="junction")  # noqa: E731
    elif mechanism is Mechanism.QP_ARRAY:
        rate = lambda i, j: rate_quasiparticle(spec, env, i, j, site="array")  # noqa: E731
    elif mechanism is Mechanism.CHARGE_LINE:
        rate = lambda i, j: rate_radiative(spec, env, i, j, line="charge")  # noqa: E731
    else:
        rate = lambda i, j: rate_radiative(spec, env, i, j, line="flux")  # noqa: E731

    n = spec.n_levels
    rates = np.zeros((n, n))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for i in range(n):
            for j in range(n):
                if i != j:
                    rates[i, j] = rate(i, j)
    # collapse the per-pair quasiparticle-energy warnings into one per table
    qp_pairs = sum(1 for w in caught if issubclass(w.category, QuasiparticleEnergyWarning))
    for w in caught:
        if not issubclass(w.category, QuasiparticleEnergyWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    if qp_pairs:
        warnings.warn(
            f"{mechanism.value}: {qp_pairs} level pairs lie above gap/10; "
            "the low-energy quasiparticle spectral density is inaccurate there",
            QuasiparticleEnergyWarning,
            stacklevel=2,
        )
    rates.setflags(write=False)
    return MechanismRateTable(mechanism=mechanism, rates=rates)

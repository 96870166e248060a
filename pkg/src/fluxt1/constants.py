"""Physical constants used across the rate formulas (SI, CODATA via scipy)."""

from scipy.constants import e as E_CHARGE
from scipy.constants import h as H
from scipy.constants import hbar as HBAR
from scipy.constants import k as K_B

# Superconducting flux quantum h/(2e), in Wb.
PHI0 = H / (2.0 * E_CHARGE)

__all__ = ["E_CHARGE", "H", "HBAR", "K_B", "PHI0"]

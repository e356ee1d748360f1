"""Physical constants and unit conversions.

Internal unit system: micrometers, microseconds, volts, atomic mass units,
elementary charges.  Potential energies are bookkept in eV (charge in units
of e times potential in V); dynamics run in "mechanical" units u*um^2/us^2.
Values are CODATA 2018.
"""

import math

# SI values
ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
ATOMIC_MASS = 1.66053906660e-27  # kg
EPSILON_0 = 8.8541878128e-12  # F/m
HBAR_SI = 1.054571817e-34  # J s
MU_BOHR = 9.2740100783e-24  # J/T

# Lande g-factor of the Ca+ 4S_1/2 ground state (Chwalla et al. 2009).
G_J_CA = 2.00225664

# 1 u*um^2/us^2 equals ATOMIC_MASS joules, so the eV <-> mechanical
# conversion is e/u (numerically the C/kg charge-to-mass ratio of a proton
# mass unit).
EV_TO_MECH = ELEMENTARY_CHARGE / ATOMIC_MASS

# Coulomb energy prefactor for unit charges: U[eV] = K_COULOMB_EV_UM / r[um].
K_COULOMB_EV_UM = ELEMENTARY_CHARGE / (4.0 * math.pi * EPSILON_0) * 1e6

# Same in mechanical units: U[u um^2/us^2] = K_COULOMB_MECH / r[um].
K_COULOMB_MECH = K_COULOMB_EV_UM * EV_TO_MECH

# hbar in mechanical-energy * us.
HBAR_MECH_US = HBAR_SI / ATOMIC_MASS * 1e6

# Zeeman phase accumulation rate: d(phi)/dt = PHASE_RATE * dB, with dB in
# tesla and t in us (mu_B g_J / hbar scaled to 1/us).
PHASE_RATE_PER_US_T = MU_BOHR * G_J_CA / HBAR_SI * 1e-6

# Default ion species: 40Ca+ modeled at 40 u, charge +1e.
ION_MASS_U = 40.0
ION_CHARGE_E = 1.0

TWO_PI = 2.0 * math.pi


def secular_curvature(freq_mhz: float, mass_u: float = ION_MASS_U,
                      charge_e: float = ION_CHARGE_E) -> float:
    """Potential curvature (V/um^2) giving a secular frequency in MHz."""
    omega = TWO_PI * freq_mhz  # rad/us
    return mass_u * omega * omega / (EV_TO_MECH * charge_e)


def curvature_to_freq_mhz(curv_v_per_um2: float, mass_u: float = ION_MASS_U,
                          charge_e: float = ION_CHARGE_E) -> float:
    """Secular frequency (MHz) of a curvature in V/um^2 (must be >= 0)."""
    omega2 = curv_v_per_um2 * EV_TO_MECH * charge_e / mass_u
    return math.sqrt(omega2) / TWO_PI

"""Free-space constants (SI)."""

import math

MU0 = 4.0e-7 * math.pi
EPS0 = 8.8541878128e-12
C0 = 1.0 / math.sqrt(MU0 * EPS0)
ETA0 = math.sqrt(MU0 / EPS0)


def wavenumber(frequency):
    """k = omega * sqrt(mu * eps) in rad/m."""
    return 2.0 * math.pi * frequency * math.sqrt(MU0 * EPS0)


def wavelength(frequency):
    return C0 / frequency

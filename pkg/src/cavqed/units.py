"""Unit helpers.

Rates are carried internally as angular frequencies (rad/s).  Reported
values follow the "value/2pi in GHz" convention, so ``ghz(x) == 0.36``
means ``x == 2*pi*0.36e9`` rad/s.
"""

import numpy as np
from scipy import constants

TWO_PI_GHZ = 2 * np.pi * 1e9

C = constants.c
HBAR = constants.hbar
EPS0 = constants.epsilon_0


def from_ghz(value):
    """value/2pi in GHz -> rad/s"""
    return np.asarray(value, dtype=float) * TWO_PI_GHZ if np.ndim(value) else float(value) * TWO_PI_GHZ


def to_ghz(rate):
    """rad/s -> value/2pi in GHz"""
    return np.asarray(rate, dtype=float) / TWO_PI_GHZ if np.ndim(rate) else float(rate) / TWO_PI_GHZ


def rate_from_lifetime(tau):
    """Angular decay rate of a lifetime ``tau`` (s); gamma = 1/tau."""
    if tau <= 0:
        raise ValueError(f"lifetime must be positive, got {tau}")
    return 1.0 / tau

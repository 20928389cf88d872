"""Emitter non-idealities that reduce g below the ideal coupling g0.

(g / g0)^2 = eta_QE * eta_DW * eta_BR * eta_Z * cos^2(alpha)
"""

from dataclasses import dataclass, fields

import numpy as np

from .fitting import MeasuredValue

__all__ = ["EfficiencyLedger", "qe_bound", "eta_z", "unity_qe_straggle"]

FACTORS = ("eta_qe", "eta_dw", "eta_br", "eta_z", "cos2_alpha")


def _mv(v):
    if v is None or isinstance(v, MeasuredValue):
        return v
    return MeasuredValue(float(v), 0.0)


@dataclass(frozen=True)
class EfficiencyLedger:
    """Efficiency factors; each a float, MeasuredValue or None (unknown)."""

    eta_qe: object = None
    eta_dw: object = None
    eta_br: object = None
    eta_z: object = None
    cos2_alpha: object = None

    def __post_init__(self):
        for f in fields(self):
            v = _mv(getattr(self, f.name))
            if v is not None and not 0 <= v.value <= 1:
                raise ValueError(f"{f.name} = {v.value} outside [0, 1]")
            object.__setattr__(self, f.name, v)

    def supplied(self, exclude=()):
        return {k: getattr(self, k) for k in FACTORS if k not in exclude and getattr(self, k) is not None}

    def product(self, exclude=()):
        """Product of the supplied factors with first-order error propagation."""
        vals = self.supplied(exclude)
        p = float(np.prod([v.value for v in vals.values()])) if vals else 1.0
        rel2 = sum((v.sigma / v.value) ** 2 for v in vals.values() if v.value > 0)
        return MeasuredValue(p, abs(p) * float(np.sqrt(rel2)))


def _ratio_sq(g, g0):
    g, g0 = _mv(g), _mv(g0)
    if not 0 < g.value <= g0.value:
        raise ValueError("need 0 < g <= g0")
    r = (g.value / g0.value) ** 2
    rel2 = 4 * (g.sigma / g.value) ** 2 + 4 * (g0.sigma / g0.value) ** 2
    return r, rel2


def qe_bound(g, g0, ledger=None):
    """Lower bound on the quantum efficiency, (g/g0)^2 over the supplied factors.

    Factors left unset count as one, which can only lower the bound.  The
    ledger's own ``eta_qe`` is ignored.  Raises ValueError when the bound
    exceeds one (inputs inconsistent).
    """
    ledger = ledger or EfficiencyLedger()
    r, rel2 = _ratio_sq(g, g0)
    prod = ledger.product(exclude=("eta_qe",))
    if prod.value <= 0:
        raise ValueError("efficiency factors must be positive")
    bound = r / prod.value
    rel2 += (prod.sigma / prod.value) ** 2
    if bound > 1 + 1e-12:
        raise ValueError(f"quantum-efficiency bound {bound:.3f} exceeds 1: inconsistent inputs")
    return MeasuredValue(bound, bound * float(np.sqrt(rel2)))


def eta_z(z, n=2.41, wavelength=602e-9):
    """Field-intensity reduction cos^2(2 pi n z / lambda) for a displacement z from the antinode."""
    return np.cos(2 * np.pi * n * np.asarray(z, dtype=float) / wavelength) ** 2


def unity_qe_straggle(g, g0, ledger, n=2.41, wavelength=602e-9):
    """Displacement z (m) at which the ledger with eta_QE = 1 reproduces (g/g0)^2.

    ``ledger.eta_z`` and ``ledger.eta_qe`` are ignored.
    """
    r, _ = _ratio_sq(g, g0)
    prod = ledger.product(exclude=("eta_qe", "eta_z")).value
    need = r / prod
    if need > 1:
        raise ValueError(f"required eta_Z = {need:.3f} > 1: unity efficiency infeasible")
    return float(np.arccos(np.sqrt(need)) * wavelength / (2 * np.pi * n))

"""Weak-coupling cavity QED of a two-level emitter in a single-mode cavity.

Covers the full Lindblad dynamics in the one-photon truncated basis
{|g,0>, |e,0>, |g,1>, |e,1>}, the adiabatic-elimination closed forms for
populations and emission probabilities, the Purcell-enhanced decay rate,
and the incoherently pumped steady state (linewidth, amplitude and
saturation pump rate).

All rates are angular frequencies (rad/s).
"""

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from .units import from_ghz, rate_from_lifetime

__all__ = [
    "CqedParams",
    "PopulationTrace",
    "SteadyState",
    "SaturationRate",
    "gev1_params",
    "transfer_rate",
    "solve_lindblad_numeric",
    "populations_analytic",
    "emission_probabilities",
    "cavity_decay_rate",
    "lifetime_reduction",
    "cooperativities",
    "cavity_occupation",
    "driven_steady_state",
    "cw_linewidth_amplitude",
    "saturation_pump_rate",
    "pump_rate_from_power",
    "dephasing_from_linewidth",
]


@dataclass(frozen=True)
class CqedParams:
    """Rate set of the coupled emitter-cavity system (rad/s).

    ``detuning`` is the emitter-cavity detuning delta and may be negative.
    """

    g: float
    kappa: float
    gamma: float
    gamma_star: float = 0.0
    pump: float = 0.0
    detuning: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "gamma_star", "pump"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            if v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if not np.isfinite(self.detuning):
            raise ValueError(f"detuning must be finite, got {self.detuning}")

    @classmethod
    def from_ghz(cls, g, kappa, gamma, gamma_star=0.0, pump=0.0, detuning=0.0):
        """Build from values quoted as rate/2pi in GHz."""
        return cls(
            g=from_ghz(g),
            kappa=from_ghz(kappa),
            gamma=from_ghz(gamma),
            gamma_star=from_ghz(gamma_star),
            pump=from_ghz(pump),
            detuning=from_ghz(detuning),
        )

    @property
    def Gamma(self):
        """Total decoherence rate gamma + gamma* + kappa."""
        return self.gamma + self.gamma_star + self.kappa

    @property
    def Gamma_cw(self):
        """Total dephasing rate under incoherent pumping."""
        return self.gamma + self.gamma_star + self.kappa + self.pump

    def replace(self, **changes):
        return replace(self, **changes)


def gev1_params(**overrides):
    """Central values for the best-characterised emitter (GeV 1).

    g/2pi = 0.36 GHz, kappa/2pi = 2.07 GHz, gamma*/2pi = 1.0 GHz and a
    bare lifetime of 6.1 ns; undriven and on resonance unless overridden.
    """
    p = CqedParams(
        g=from_ghz(0.36),
        kappa=from_ghz(2.07),
        gamma=rate_from_lifetime(6.1e-9),
        gamma_star=from_ghz(1.0),
    )
    return p.replace(**overrides) if overrides else p


@dataclass
class PopulationTrace:
    times: np.ndarray
    rho_aa: np.ndarray
    rho_cc: np.ndarray
    rho_gg: np.ndarray = field(default=None)
    rho_bb: np.ndarray = field(default=None)

    @property
    def total(self):
        parts = [self.rho_aa, self.rho_cc]
        parts += [p for p in (self.rho_gg, self.rho_bb) if p is not None]
        return np.sum(parts, axis=0)


@dataclass
class SteadyState:
    n_expect: float
    rho_gg: float
    rho_aa: float
    rho_cc: float
    rho_bb: float


class SaturationRate(NamedTuple):
    exact: float
    approx: float


def transfer_rate(params, detuning=None):
    """Incoherent emitter -> cavity transfer rate R after adiabatic elimination.

    R = 4 g^2 Gamma / (Gamma^2 + 4 delta^2).  ``detuning`` may be an array
    and overrides ``params.detuning``.
    """
    d = params.detuning if detuning is None else np.asarray(detuning, dtype=float)
    G = params.Gamma
    if G == 0:
        if params.g == 0:
            return np.zeros_like(d, dtype=float) if np.ndim(d) else 0.0
        raise ValueError("transfer rate undefined for Gamma = 0 with g > 0")
    return 4 * params.g**2 * G / (G**2 + 4 * np.square(d))


# ---------------------------------------------------------------- numerics

# basis ordering: 0 = |g,0>, 1 = |e,0> (a), 2 = |g,1> (c), 3 = |e,1> (b)
_IDX_GG, _IDX_AA, _IDX_CC, _IDX_BB = 0, 1, 2, 3


def _operators():
    sm = np.array([[0.0, 1.0], [0.0, 0.0]])  # sigma_ge = |g><e|
    a1 = np.array([[0.0, 1.0], [0.0, 0.0]])  # a truncated to {0, 1}
    eye = np.eye(2)
    # kron(atom, photon): index = 2*atom + photon -> g0, g1, e0, e1
    perm = [0, 2, 1, 3]  # -> g0, e0, g1, e1
    P = np.eye(4)[perm]

    def emb(op):
        return P @ op @ P.T

    S = emb(np.kron(sm, eye))
    A = emb(np.kron(eye, a1))
    See = emb(np.kron(np.diag([0.0, 1.0]), eye))
    return S, A, See


def _liouvillian(params, driven):
    """Complex 16x16 Liouvillian acting on row-major vec(rho)."""
    S, A, See = _operators()
    H = params.detuning * See + params.g * (A @ S.T + A.T @ S)
    eye = np.eye(4)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    jumps = [(params.gamma, S), (params.gamma_star, See), (params.kappa, A)]
    if driven:
        jumps.append((params.pump, S.T))
    for rate, O in jumps:
        if rate == 0:
            continue
        OdO = O.T @ O
        L += rate * (np.kron(O, O) - 0.5 * np.kron(OdO, eye) - 0.5 * np.kron(eye, OdO.T))
    return L


class _StepLimit(Exception):
    pass


def _real_form(L):
    return np.block([[L.real, -L.imag], [L.imag, L.real]])


def solve_lindblad_numeric(params, t_grid, driven=False, rtol=1e-9, atol=1e-12,
                           method="Radau", max_steps=200_000):
    """Integrate the Lindblad master equation on the one-photon basis.

    Jump operators: sigma_ge (gamma), sigma_ee (gamma*), a (kappa) and, when
    ``driven``, sigma_eg (pump).  The undriven run starts with the emitter
    excited and the cavity empty; the driven run starts in the ground state.

    Parameters
    ----------
    params : CqedParams
    t_grid : array_like
        Output times in seconds, strictly increasing and starting at 0.
    driven : bool
    rtol, atol : float
        Local error tolerances of the adaptive integrator.
    method : str
        Any implicit-capable ``scipy.integrate.solve_ivp`` method.

    Returns
    -------
    PopulationTrace
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("t_grid must be a 1D sequence with at least two points")
    if t[0] != 0:
        raise ValueError("t_grid must start at 0")
    if np.any(np.diff(t) <= 0):
        bad = int(np.argmax(np.diff(t) <= 0)) + 1
        raise ValueError(f"t_grid must be strictly increasing (violated at index {bad})")

    M = _real_form(_liouvillian(params, driven))
    rho0 = np.zeros((4, 4))
    rho0[(_IDX_GG, _IDX_GG) if driven else (_IDX_AA, _IDX_AA)] = 1.0
    y0 = np.concatenate([rho0.ravel(), np.zeros(16)])

    calls = 0

    def rhs(_t, y):
        nonlocal calls
        calls += 1
        if calls > max_steps:
            raise _StepLimit
        return M @ y

    try:
        sol = solve_ivp(rhs, (0.0, t[-1]), y0, method=method, t_eval=t,
                        rtol=rtol, atol=atol, jac=M)
    except _StepLimit:
        raise RuntimeError(
            f"tolerance rtol={rtol:g} not met within {max_steps} right-hand-side evaluations"
        ) from None
    if sol.status != 0:
        raise RuntimeError(f"Lindblad integration failed: {sol.message}")

    diag = sol.y[:16].reshape(4, 4, -1)
    pops = np.clip(np.stack([diag[i, i] for i in range(4)]), 0.0, 1.0)
    return PopulationTrace(times=t, rho_aa=pops[_IDX_AA], rho_cc=pops[_IDX_CC],
                           rho_gg=pops[_IDX_GG], rho_bb=pops[_IDX_BB])


# ---------------------------------------------------------------- closed forms

def _expm1_ratio(alpha, t):
    """(1 - exp(-alpha t)) / alpha with the alpha -> 0 limit handled."""
    alpha = np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)
    at = alpha * t
    small = np.abs(at) < 1e-6
    safe = np.where(small, 1.0, alpha)
    exact = -np.expm1(-at) / safe
    series = t * (1 - at / 2 + at**2 / 6)
    return np.where(small, series, exact)


def populations_analytic(params, t, detuning=None):
    """Excited-emitter and cavity populations from adiabatic elimination.

    Returns ``(rho_aa, rho_cc)`` for the undriven system started in |e,0>.
    ``t`` and ``detuning`` broadcast against each other.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    R = transfer_rate(params, detuning)
    gam, kap = params.gamma, params.kappa
    alpha = np.sqrt(4 * R**2 + (gam - kap) ** 2)
    slow = (2 * R + gam + kap - alpha) / 2
    h = _expm1_ratio(alpha, t)
    decay = np.exp(-slow * t)
    rho_cc = R * decay * h
    rho_aa = decay * ((2 - alpha * h) / 2 - (gam - kap) / 2 * h)
    return rho_aa, rho_cc


def emission_probabilities(params):
    """Total emission probabilities ``(p_a, p_c)`` via emitter and cavity."""
    R = transfer_rate(params)
    gam, kap = params.gamma, params.kappa
    den = gam * kap + R * (gam + kap)
    if den == 0:
        raise ValueError("emission partition undefined: gamma and R both vanish")
    p_c = kap * R / den
    return 1.0 - p_c, p_c


def cavity_decay_rate(params, detuning=None):
    """Cavity-mediated decay rate gamma_cav = R kappa / (R + kappa)."""
    if params.kappa <= 0:
        raise ValueError("kappa must be positive")
    R = transfer_rate(params, detuning)
    return R * params.kappa / (R + params.kappa)


def lifetime_reduction(params, tau_bare, detuning=None):
    """Lifetime reduction factor tau / tau_P for a bare lifetime ``tau_bare``.

    gamma is taken as 1/tau_bare; ``params.gamma`` is ignored.
    """
    if tau_bare <= 0:
        raise ValueError("tau_bare must be positive")
    if params.kappa <= 0:
        raise ValueError("kappa must be positive")
    p = params.replace(gamma=1.0 / tau_bare)
    d = p.detuning if detuning is None else np.asarray(detuning, dtype=float)
    g2, kap, gam, G = p.g**2, p.kappa, p.gamma, p.Gamma
    width2 = G**2 + 4 * g2 * G / kap
    return 1 + (4 * g2 / (kap * gam)) * (kap**2 / (4 * g2 + G * kap)) * (width2 / (width2 + 4 * np.square(d)))


def cooperativities(params):
    """Return ``(C_inc, C)``: 4g^2/(kappa gamma) and 4g^2/(kappa (gamma + gamma*))."""
    kap, gam = params.kappa, params.gamma
    if kap <= 0 or gam <= 0:
        raise ValueError("kappa and gamma must be positive")
    c_inc = 4 * params.g**2 / (kap * gam)
    c = 4 * params.g**2 / (kap * (gam + params.gamma_star))
    return c_inc, c


def cavity_occupation(params, detuning=None):
    """Steady-state mean cavity photon number under incoherent pumping."""
    d = params.detuning if detuning is None else np.asarray(detuning, dtype=float)
    g2, P, kap, gam, Gc = params.g**2, params.pump, params.kappa, params.gamma, params.Gamma_cw
    den = 4 * g2 * Gc * (gam + kap + P) + kap * (gam + P) * (4 * np.square(d) + Gc**2)
    if np.any(den == 0):
        if P == 0:
            return np.zeros_like(d, dtype=float) if np.ndim(d) else 0.0
        raise ValueError("cavity occupation undefined for vanishing rates")
    return 4 * g2 * P * Gc / den


def driven_steady_state(params):
    """Steady state of the incoherently pumped system.

    ``n_expect`` is the closed form; the four occupations come from the
    null space of the one-photon Liouvillian.  ``rho_bb`` measures how much
    weight sits in the doubly excited state and so audits the truncation.
    """
    rates = [params.g, params.kappa, params.gamma, params.gamma_star, params.pump]
    if all(r == 0 for r in rates):
        raise ValueError("steady state undefined when all rates vanish")
    if params.pump == 0:
        return SteadyState(n_expect=0.0, rho_gg=1.0, rho_aa=0.0, rho_cc=0.0, rho_bb=0.0)
    L = _liouvillian(params, driven=True)
    A = np.vstack([L, np.eye(4).reshape(1, -1)])
    b = np.zeros(17, dtype=complex)
    b[-1] = 1.0
    rho = np.linalg.lstsq(A, b, rcond=None)[0].reshape(4, 4)
    p = np.real(np.diag(rho))
    return SteadyState(n_expect=float(cavity_occupation(params)), rho_gg=p[_IDX_GG],
                       rho_aa=p[_IDX_AA], rho_cc=p[_IDX_CC], rho_bb=p[_IDX_BB])


def cw_linewidth_amplitude(params):
    """Linewidth and amplitude of the cavity-coupled fluorescence Lorentzian.

    Returns ``(Delta_cw, A_cw)`` such that kappa*<n>(delta) equals
    A_cw * Delta_cw^2 / (Delta_cw^2 + 4 delta^2).
    """
    g2, P, kap, gam, Gc = params.g**2, params.pump, params.kappa, params.gamma, params.Gamma_cw
    if kap <= 0 or gam + P <= 0:
        raise ValueError("need kappa > 0 and gamma + pump > 0")
    broad = 4 * g2 * (gam + P + kap) / (kap * (gam + P))
    delta_cw = np.sqrt(Gc * (Gc + broad))
    amp = 4 * P * g2 * kap / (kap * (gam + P) * Gc + 4 * g2 * (gam + P + kap))
    return delta_cw, amp


def saturation_pump_rate(params):
    """Saturation pump rate from the first-order Pade approximant of A_cw.

    ``approx`` is the gamma << g, kappa, gamma* form, which equals the
    on-resonance Purcell-enhanced decay rate gamma + gamma_cav(0).
    """
    g2, kap, gam, gs = params.g**2, params.kappa, params.gamma, params.gamma_star
    if kap <= 0:
        raise ValueError("kappa must be positive")
    exact = gam + (4 * g2 - gam**2) * kap / (4 * g2 + kap * (2 * gam + gs + kap))
    approx = gam + 4 * g2 * kap / (4 * g2 + kap * params.Gamma)
    return SaturationRate(exact, approx)


def pump_rate_from_power(power, p_sat, tau_min):
    """Pump rate estimate (P / P_sat) / tau_min in rad/s."""
    if p_sat <= 0 or tau_min <= 0:
        raise ValueError("p_sat and tau_min must be positive")
    return (power / p_sat) / tau_min


def dephasing_from_linewidth(g, delta_cw, kappa_prime, gamma, pump):
    """Invert the driven linewidth for the pure dephasing rate.

    Solves Delta_cw^2 = Gamma_cw^2 + B Gamma_cw for Gamma_cw (positive
    root), with B = 4 g^2 (gamma + pump + kappa') / (kappa' (gamma + pump)),
    and returns gamma* = Gamma_cw - gamma - kappa' - pump.  Works elementwise
    on ``g``; entries without a non-negative solution come back as NaN.
    """
    g = np.asarray(g, dtype=float)
    if kappa_prime <= 0 or gamma + pump <= 0:
        raise ValueError("need kappa' > 0 and gamma + pump > 0")
    B = 4 * g**2 * (gamma + pump + kappa_prime) / (kappa_prime * (gamma + pump))
    gamma_cw = (-B + np.sqrt(B**2 + 4 * delta_cw**2)) / 2
    gs = gamma_cw - gamma - kappa_prime - pump
    gs = np.where(gs >= 0, gs, np.nan)
    return gs if gs.ndim else float(gs)

"""One-dimensional optics of a fiber-mirror / air / diamond / planar-mirror cavity.

Normal-incidence transfer matrices (characteristic-matrix form, time
dependence exp(+i w t)) give mirror reflectances and the standing-wave
field.  Transverse structure enters only through a Gaussian waist and the
Gouy phase of the curved fiber mirror.
"""

from dataclasses import dataclass, field, replace
import warnings

import numpy as np
from scipy.optimize import brentq

from .fitting import MeasuredValue, least_squares
from .units import C, EPS0, HBAR

__all__ = [
    "LayerStack",
    "PerfectMirror",
    "quarter_wave_stack",
    "default_mirror",
    "default_planar_mirror",
    "CavityGeometry",
    "Cavity",
    "FieldProfile",
    "Resonances",
    "transfer_matrix_resonance",
    "field_profile",
    "quantize_field",
    "dipole_moment",
    "ideal_coupling",
    "tune_air_gap",
    "DispersionMap",
    "simulate_dispersion",
    "dispersion_slope",
    "fit_dispersion",
    "hybrid_fsr",
    "read_stack_file",
]

N_DIAMOND = 2.41
N_SILICA = 1.45


@dataclass(frozen=True)
class LayerStack:
    """Thin-film layers between two half-spaces.

    ``indices`` and ``thicknesses`` (m) are listed from the incident side
    (``n_incident``) to the substrate (``n_substrate``).
    """

    indices: tuple
    thicknesses: tuple
    n_incident: float = 1.0
    n_substrate: float = N_SILICA

    def __post_init__(self):
        n = np.asarray(self.indices, dtype=float)
        d = np.asarray(self.thicknesses, dtype=float)
        if n.shape != d.shape or n.ndim != 1:
            raise ValueError("indices and thicknesses must be 1-D and of equal length")
        if np.any(n < 1) or self.n_incident < 1 or self.n_substrate < 1:
            raise ValueError("refractive indices must be >= 1")
        if np.any(d <= 0):
            raise ValueError("layer thicknesses must be positive")
        object.__setattr__(self, "indices", tuple(map(float, n)))
        object.__setattr__(self, "thicknesses", tuple(map(float, d)))

    def __len__(self):
        return len(self.indices)

    def characteristic_matrix(self, wavelength):
        """Product of layer matrices, shape (..., 2, 2) over ``wavelength``."""
        lam = np.atleast_1d(np.asarray(wavelength, dtype=float))
        M = np.broadcast_to(np.eye(2, dtype=complex), lam.shape + (2, 2)).copy()
        for n, d in zip(self.indices, self.thicknesses):
            delta = 2 * np.pi * n * d / lam
            c, s = np.cos(delta), np.sin(delta)
            L = np.empty(lam.shape + (2, 2), dtype=complex)
            L[..., 0, 0] = c
            L[..., 0, 1] = 1j * s / n
            L[..., 1, 0] = 1j * n * s
            L[..., 1, 1] = c
            M = M @ L
        return M

    def rt(self, wavelength):
        """Amplitude reflection and transmission coefficients from the incident side."""
        M = self.characteristic_matrix(wavelength)
        n0, ns = self.n_incident, self.n_substrate
        B = M[..., 0, 0] + M[..., 0, 1] * ns
        Cc = M[..., 1, 0] + M[..., 1, 1] * ns
        den = n0 * B + Cc
        r = (n0 * B - Cc) / den
        t = 2 * n0 / den
        return r, t

    def reflection(self, wavelength, n_incident=None):
        """Reflection coefficient seen from a medium of index ``n_incident``."""
        stack = self if n_incident is None else replace(self, n_incident=n_incident)
        return stack.rt(wavelength)[0]

    def scaled(self, factor):
        return replace(self, thicknesses=tuple(factor * d for d in self.thicknesses))


@dataclass(frozen=True)
class PerfectMirror:
    """Lossless mirror with reflection -1 (electric-field node at its surface)."""

    def reflection(self, wavelength, n_incident=None):
        return -np.ones_like(np.asarray(wavelength, dtype=float), dtype=complex)

    def __len__(self):
        return 0

    def scaled(self, factor):
        return self


def quarter_wave_stack(n_high=2.10, n_low=1.45, pairs=15, design_wavelength=602e-9,
                       first="high", n_incident=1.0, n_substrate=N_SILICA):
    """Bragg mirror of ``pairs`` quarter-wave pairs, listed from the cavity side."""
    a, b = (n_high, n_low) if first == "high" else (n_low, n_high)
    idx = [a, b] * pairs
    d = [design_wavelength / (4 * n) for n in idx]
    return LayerStack(tuple(idx), tuple(d), n_incident, n_substrate)


def default_mirror(first="high"):
    """Surrogate coating: 15 pairs of 2.10/1.45 quarter-wave layers at 602 nm on silica."""
    return quarter_wave_stack(first=first)


def default_planar_mirror():
    """Surrogate coating under the diamond, low-index layer against the diamond."""
    return quarter_wave_stack(first="low")


@dataclass(frozen=True)
class CavityGeometry:
    """Plano-concave hybrid cavity.  Lengths in m."""

    roc: float
    t_diamond: float
    t_air: float
    waist: float
    n_diamond: float = N_DIAMOND

    def __post_init__(self):
        for k in ("roc", "t_air", "waist", "n_diamond"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.t_diamond < 0:
            raise ValueError("t_diamond must be non-negative")

    @property
    def l_eff(self):
        return self.t_air + self.t_diamond / self.n_diamond

    def gouy(self, order=0):
        """One-way Gouy phase of transverse order ``order`` = q + m."""
        x = self.l_eff / self.roc
        if not 0 < x < 1:
            raise ValueError(f"unstable resonator: L_eff/roc = {x:.3f} outside (0, 1)")
        return (order + 1) * np.arccos(np.sqrt(1 - x))

    def expected_waist(self, wavelength):
        """Fundamental-mode waist at the planar mirror from roc and L_eff."""
        L = self.l_eff
        if not 0 < L < self.roc:
            raise ValueError("unstable resonator")
        return float(np.sqrt(wavelength / np.pi * np.sqrt(L * (self.roc - L))))

    def check(self, wavelength=602e-9, rel=0.25):
        """Warn when the waist disagrees with the resonator geometry by more than ``rel``."""
        w = self.expected_waist(wavelength)
        if abs(self.waist / w - 1) > rel:
            warnings.warn(f"waist {self.waist:.3g} m differs from geometric {w:.3g} m", stacklevel=2)
        return w


@dataclass(frozen=True)
class Cavity:
    """Top (fiber) mirror | air | diamond | bottom mirror.

    Mirror stacks are listed from the cavity side outward.  With
    ``t_diamond = 0`` the cavity is a plain air gap.
    """

    geometry: CavityGeometry
    top: object = field(default_factory=default_mirror)
    bottom: object = field(default_factory=default_planar_mirror)

    def gap_layers(self):
        g = self.geometry
        layers = [(1.0, g.t_air)]
        if g.t_diamond > 0:
            layers.append((g.n_diamond, g.t_diamond))
        return layers

    def with_geometry(self, **kw):
        return replace(self, geometry=replace(self.geometry, **kw))


def _reflection_from(layers, mirror, n_in, lam):
    """Reflection of ``layers`` followed by ``mirror`` seen from medium ``n_in``."""
    if layers:
        n_last = layers[-1][0]
    else:
        n_last = n_in
    r = mirror.reflection(lam, n_incident=n_last)
    ns = [n_in] + [n for n, _ in layers]
    for j in range(len(layers) - 1, -1, -1):
        n_prev, (n, d) = ns[j], layers[j]
        rho = (n_prev - n) / (n_prev + n)
        ph = np.exp(-2j * 2 * np.pi * n * d / lam)
        r = (rho + r * ph) / (1 + rho * r * ph)
    return r


def round_trip(cavity, wavelength, order=0):
    """Round-trip factor r_top r_rest exp(-2i k t_air + 2i psi); equals 1 on resonance."""
    lam = np.asarray(wavelength, dtype=float)
    g = cavity.geometry
    r_top = cavity.top.reflection(lam, n_incident=1.0)
    rest = cavity.gap_layers()[1:]
    r_bot = _reflection_from(rest, cavity.bottom, 1.0, lam)
    psi = g.gouy(order) if order is not None else 0.0
    return r_top * r_bot * np.exp(-2j * 2 * np.pi * g.t_air / lam + 2j * psi)


@dataclass
class Resonances:
    wavelengths: np.ndarray
    profiles: list


def _resonance_roots(fun, lo, hi, n_grid, xtol):
    x = np.linspace(lo, hi, n_grid)
    phi = np.angle(fun(x))
    roots = []
    for i in np.flatnonzero(np.sign(phi[:-1]) * np.sign(phi[1:]) <= 0):
        a, b = x[i], x[i + 1]
        if abs(phi[i]) > np.pi / 2 or abs(phi[i + 1]) > np.pi / 2:
            continue  # branch cut at +/- pi, not a resonance
        if phi[i] == 0:
            roots.append(a)
            continue
        if phi[i + 1] == 0:
            continue
        roots.append(brentq(lambda v: np.angle(fun(np.array([v])))[0], a, b, xtol=xtol, rtol=1e-15))
    return np.array(sorted(set(roots)))


def transfer_matrix_resonance(cavity, scan, order=0, n_grid=4000, profiles=True):
    """Resonant wavelengths in ``scan`` = (lo, hi) and their field profiles.

    Resonances are where the round-trip phase, including the Gouy phase of
    transverse order ``order``, is a multiple of 2 pi.
    """
    lo, hi = scan
    if not 0 < lo < hi:
        raise ValueError("scan must be (lo, hi) with 0 < lo < hi")
    roots = _resonance_roots(lambda lam: round_trip(cavity, lam, order), lo, hi, n_grid,
                             xtol=1e-9 * lo)
    if roots.size == 0:
        raise ValueError(f"no resonance between {lo:.6g} and {hi:.6g} m")
    profs = [field_profile(cavity, lam, gouy_order=order) for lam in roots] if profiles else []
    return Resonances(roots, profs)


@dataclass
class FieldProfile:
    """Standing-wave field sampled through mirrors and gap.

    ``E`` is complex with arbitrary overall scale; ``regions`` maps 'air'
    and 'diamond' to their (z_start, z_end).
    """

    z: np.ndarray
    n: np.ndarray
    E: np.ndarray
    wavelength: float
    regions: dict

    @property
    def intensity(self):
        """|E|^2 normalized to unit maximum."""
        I = np.abs(self.E) ** 2
        return I / I.max()

    def region_max(self, name):
        a, b = self.regions[name]
        sel = (self.z >= a) & (self.z <= b)
        return float(np.max(np.abs(self.E[sel])))

    def mode_character(self, n_diamond=None):
        """'air' or 'diamond' from the field maxima on the two sides of the interface.

        Air-like modes have a node at the diamond surface and a diamond
        field reduced by 1/n; diamond-like modes have equal maxima.  The
        split is at the geometric mean 1/sqrt(n).
        """
        if "diamond" not in self.regions:
            return "air"
        a, b = self.regions["diamond"]
        if n_diamond is None:
            n_diamond = float(np.median(self.n[(self.z > a) & (self.z < b)]))
        ratio = self.region_max("diamond") / self.region_max("air")
        return "air" if ratio < 1 / np.sqrt(n_diamond) else "diamond"


def field_profile(cavity, wavelength, gouy_order=None, points_per_wave=64):
    """Field through top mirror, gap and bottom mirror at ``wavelength``.

    Propagated from an outgoing wave in the bottom substrate (or a node on a
    perfect bottom mirror) back through every layer.  z runs from the outer
    edge of the top mirror towards the bottom mirror.  With ``gouy_order``
    the air gap is shortened by psi * lambda / (2 pi) so that the 1D
    structure is resonant where the 3D mode of that order is.
    """
    lam = float(wavelength)
    if gouy_order is not None:
        g = cavity.geometry
        cavity = cavity.with_geometry(t_air=g.t_air - g.gouy(gouy_order) * lam / (2 * np.pi))
    gap = cavity.gap_layers()

    def layers_of(mirror):
        if isinstance(mirror, PerfectMirror):
            return []
        return list(zip(mirror.indices, mirror.thicknesses))

    top = layers_of(cavity.top)[::-1]
    bottom = layers_of(cavity.bottom)
    all_layers = top + gap + bottom
    labels = ["top"] * len(top) + (["air", "diamond"][: len(gap)]) + ["bottom"] * len(bottom)

    if isinstance(cavity.bottom, PerfectMirror):
        E, H = 0.0 + 0j, 1.0 + 0j
    else:
        E, H = 1.0 + 0j, cavity.bottom.n_substrate + 0j

    zs, Es, ns = [], [], []
    z_right = sum(d for _, d in all_layers)
    regions = {}
    for (n, d), lab in zip(all_layers[::-1], labels[::-1]):
        m = max(9, int(np.ceil(points_per_wave * n * d / lam)) | 1)
        s = np.linspace(0.0, d, m)  # distance from the right edge of the layer
        delta = 2 * np.pi * n * s / lam
        e = np.cos(delta) * E + 1j * np.sin(delta) / n * H
        h = 1j * n * np.sin(delta) * E + np.cos(delta) * H
        zs.append(z_right - s[::-1])
        Es.append(e[::-1])
        ns.append(np.full(m, n))
        if lab in ("air", "diamond"):
            regions[lab] = (z_right - d, z_right)
        E, H = e[-1], h[-1]
        z_right -= d
    z = np.concatenate(zs[::-1])
    return FieldProfile(z=z, n=np.concatenate(ns[::-1]), E=np.concatenate(Es[::-1]),
                        wavelength=lam, regions=regions)


def _layer_integral(profile):
    # Simpson over each layer block (blocks are contiguous runs of constant z sampling)
    from scipy.integrate import simpson
    total = 0.0
    z, f = profile.z, profile.n**2 * np.abs(profile.E) ** 2
    breaks = np.flatnonzero(np.diff(z) == 0) + 1
    for zz, ff in zip(np.split(z, breaks), np.split(f, breaks)):
        if zz.size > 1:
            total += simpson(ff, x=zz)
    return total


def quantize_field(profile, waist, region="diamond"):
    """Single-photon field maximum (V/m) in ``region``.

    Scales the profile so that eps0 * int n^2 |E|^2 dz * (pi w^2 / 2)
    equals hbar omega / 2, the transverse factor being the area integral of
    a Gaussian mode of 1/e^2 intensity radius ``waist``.
    """
    if waist <= 0:
        raise ValueError("waist must be positive")
    energy = EPS0 * _layer_integral(profile) * np.pi * waist**2 / 2
    if not energy > 0:
        raise ValueError("profile carries no energy")
    omega = 2 * np.pi * C / profile.wavelength
    scale = np.sqrt(HBAR * omega / 2 / energy)
    if region not in profile.regions:
        region = "air"
    return scale * profile.region_max(region)


def dipole_moment(tau, wavelength, n):
    """Transition dipole (C m) of a two-level emitter with radiative lifetime ``tau``."""
    if min(tau, wavelength, n) <= 0:
        raise ValueError("tau, wavelength and n must be positive")
    return float(np.sqrt(3 * EPS0 * wavelength**3 * HBAR / (8 * n * np.pi**2 * tau)))


def tune_air_gap(cavity, wavelength, order=0):
    """Air gap nearest the current one that puts a resonance at ``wavelength``.

    ``order=None`` ignores the Gouy phase (pure 1D resonance).
    """
    g = cavity.geometry

    def phase(t):
        return np.angle(round_trip(cavity.with_geometry(t_air=t), np.array([wavelength]), order))[0]

    half = wavelength / 2
    ts = np.linspace(g.t_air - 0.6 * half, g.t_air + 0.6 * half, 121)
    ph = np.array([phase(t) for t in ts])
    best = None
    for i in np.flatnonzero(np.sign(ph[:-1]) * np.sign(ph[1:]) <= 0):
        if abs(ph[i]) > np.pi / 2 or abs(ph[i + 1]) > np.pi / 2:
            continue
        t = brentq(phase, ts[i], ts[i + 1], xtol=1e-16)
        if best is None or abs(t - g.t_air) < abs(best - g.t_air):
            best = t
    if best is None:
        raise ValueError("no resonance at the requested wavelength near this air gap")
    return cavity.with_geometry(t_air=best)


def _g0(cavity, tau, wavelength, tune):
    cav = tune_air_gap(cavity, wavelength, order=None) if tune else cavity
    prof = field_profile(cav, wavelength)
    e_max = quantize_field(prof, cav.geometry.waist)
    mu = dipole_moment(tau, wavelength, cav.geometry.n_diamond)
    return e_max * mu / HBAR, prof, cav


def ideal_coupling(cavity, tau, wavelength=602e-9, errors=None, tune=True):
    """Coupling rate g0 = |E_max| |mu| / hbar (rad/s) for an ideal emitter.

    The air gap is first retuned to the nearest 1D resonance at
    ``wavelength`` (``tune=False`` uses it as given).  ``errors`` maps any of 'waist',
    't_diamond', 't_air' and 'tau' to standard deviations, propagated
    linearly by central differences.

    Returns
    -------
    CouplingResult
        ``g0`` (MeasuredValue, rad/s), the field ``profile`` and the tuned
        ``cavity``.
    """
    g0, prof, cav = _g0(cavity, tau, wavelength, tune)
    var = 0.0
    for name, sd in (errors or {}).items():
        if sd == 0:
            continue
        if name == "tau":
            dg = -0.5 * g0 / tau * sd
        else:
            if name not in ("waist", "t_diamond", "t_air"):
                raise ValueError(f"unknown error key {name!r}")
            v = getattr(cavity.geometry, name)
            gp = _g0(cavity.with_geometry(**{name: v + sd}), tau, wavelength, tune)[0]
            gm = _g0(cavity.with_geometry(**{name: v - sd}), tau, wavelength, tune)[0]
            dg = 0.5 * (gp - gm)
        var += dg**2
    return CouplingResult(MeasuredValue(g0, float(np.sqrt(var))), prof, cav)


@dataclass
class CouplingResult:
    g0: MeasuredValue
    profile: FieldProfile
    cavity: Cavity


def hybrid_fsr(geometry):
    """Free spectral range (Hz) from the round-trip optical path t_air + n_d t_d."""
    return C / (2 * (geometry.t_air + geometry.n_diamond * geometry.t_diamond))


@dataclass
class DispersionMap:
    t_air: np.ndarray
    loci: dict  # order -> list of wavelength arrays, one per air gap


def simulate_dispersion(cavity, t_air, scan, orders=(0, 1), n_grid=4000):
    """Resonance wavelengths versus air gap for each transverse order."""
    loci = {}
    for q in orders:
        rows = []
        for t in np.asarray(t_air, dtype=float):
            cav = cavity.with_geometry(t_air=float(t))
            cav.geometry.gouy(q)  # raises for an unstable geometry
            rows.append(_resonance_roots(lambda lam: round_trip(cav, lam, q), scan[0], scan[1],
                                         n_grid, xtol=1e-9 * scan[0]))
        loci[q] = rows
    return DispersionMap(np.asarray(t_air, dtype=float), loci)


def _tracked_resonance(cavity, t_air, guess, order):
    cav = cavity.with_geometry(t_air=t_air)
    g = cav.geometry
    span = 0.45 * guess**2 / (2 * (g.t_air + g.n_diamond * g.t_diamond))  # < half an FSR
    roots = _resonance_roots(lambda lam: round_trip(cav, lam, order), guess - span, guess + span,
                             401, xtol=1e-15 * guess)
    if roots.size == 0:
        raise ValueError("lost the resonance while tracking")
    return roots[np.argmin(np.abs(roots - guess))]


def dispersion_slope(cavity, wavelength=602e-9, order=0, dt=1e-10):
    """Local slope dL/dnu of the resonance through ``wavelength`` in pm/GHz.

    L is the air gap; the gap is first tuned so the resonance sits at
    ``wavelength``.
    """
    cav = tune_air_gap(cavity, wavelength, order)
    t0 = cav.geometry.t_air
    lp = _tracked_resonance(cav, t0 + dt, wavelength, order)
    lm = _tracked_resonance(cav, t0 - dt, wavelength, order)
    dlam_dt = (lp - lm) / (2 * dt)
    dL_dnu = wavelength**2 / C / dlam_dt  # m per Hz, magnitude
    return float(abs(dL_dnu) * 1e12 * 1e9)


def fit_dispersion(cavity, observations, p0=None):
    """Fit roc and diamond thickness to observed resonance loci.

    Parameters
    ----------
    cavity : Cavity
        Supplies the mirrors, waist and diamond index; its roc and
        t_diamond seed the fit unless ``p0`` is given.
    observations : sequence of (t_air, wavelength, order)

    Returns
    -------
    FitResult with parameters ``roc`` and ``t_diamond``.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 2 or obs.shape[1] != 3:
        raise ValueError("observations must be rows of (t_air, wavelength, order)")
    g = cavity.geometry
    p0 = p0 or {"roc": g.roc, "t_diamond": g.t_diamond}

    def model(_x, roc, t_d):
        cav = cavity.with_geometry(roc=roc, t_diamond=t_d)
        return 1e9 * np.array([_tracked_resonance(cav, t, lam, int(q)) for t, lam, q in obs])

    # keep every trial geometry stable: roc above the longest effective length
    roc_min = 1.01 * (obs[:, 0].max() + 2 * p0["t_diamond"] / g.n_diamond)
    if p0["roc"] <= roc_min:
        raise ValueError("starting roc gives an unstable resonator for the observed gaps")
    # residuals in nm keep the optimizer's gradient tolerance meaningful
    return least_squares(model, obs[:, 0], 1e9 * obs[:, 1], p0,
                         bounds=([roc_min, 0.0], [np.inf, 2 * p0["t_diamond"]]))


def read_stack_file(path, n_incident=1.0, n_substrate=N_SILICA):
    """Mirror description: one ``index, thickness_nm`` per line, cavity side first.

    ``# incident: n`` and ``# substrate: n`` comment lines override the
    half-space indices.
    """
    idx, thk = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, _, val = s[1:].partition(":")
                key = key.strip().lower()
                if key == "incident":
                    n_incident = float(val)
                elif key == "substrate":
                    n_substrate = float(val)
                continue
            parts = [p for p in s.replace(",", " ").split() if p]
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'index, thickness_nm'")
            try:
                idx.append(float(parts[0]))
                thk.append(float(parts[1]) * 1e-9)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric entry {s!r}") from None
    if not idx:
        raise ValueError(f"{path}: no layers")
    return LayerStack(tuple(idx), tuple(thk), n_incident, n_substrate)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import c, epsilon_0, hbar

from cavqed.optics import (
    Cavity,
    CavityGeometry,
    LayerStack,
    PerfectMirror,
    default_mirror,
    default_planar_mirror,
    dipole_moment,
    dispersion_slope,
    field_profile,
    fit_dispersion,
    hybrid_fsr,
    ideal_coupling,
    quantize_field,
    quarter_wave_stack,
    read_stack_file,
    simulate_dispersion,
    transfer_matrix_resonance,
    tune_air_gap,
)
from cavqed.units import to_ghz

LAM = 602e-9
TAU = 6.1e-9
GEV1 = CavityGeometry(roc=22.5e-6, t_diamond=1.05e-6, t_air=6.95e-6, waist=1.30e-6)


def vacuum_cavity(L, waist=1e-6):
    return Cavity(CavityGeometry(1e-3, 0.0, L, waist), top=PerfectMirror(), bottom=PerfectMirror())


@pytest.fixture(scope="module")
def gev1_coupling():
    return ideal_coupling(Cavity(GEV1), TAU, errors={"waist": 0.01e-6, "t_diamond": 0.02e-6,
                                                     "t_air": 0.05e-6})


def test_stack_validation():
    with pytest.raises(ValueError):
        LayerStack((0.9,), (1e-7,))
    with pytest.raises(ValueError):
        LayerStack((1.5,), (0.0,))
    with pytest.raises(ValueError):
        LayerStack((1.5, 2.0), (1e-7,))


layer = st.tuples(st.floats(1.0, 3.5), st.floats(1e-9, 1e-6))


@settings(max_examples=100)
@given(st.lists(layer, min_size=1, max_size=30), st.floats(1.0, 2.5), st.floats(1.0, 3.5),
       st.floats(300e-9, 1500e-9))
def test_flux_conservation(layers, n0, ns, lam):
    stack = LayerStack(tuple(n for n, _ in layers), tuple(d for _, d in layers), n0, ns)
    r, t = stack.rt(lam)
    assert abs(abs(r[0]) ** 2 + ns / n0 * abs(t[0]) ** 2 - 1) <= 1e-10


@pytest.mark.parametrize("first", ["high", "low"])
def test_quarter_wave_reflection_phase(first):
    # N quarter-wave pairs have admittance (nA/nB)^(2N) * n_s
    stack = quarter_wave_stack(first=first)
    a, b = (2.10, 1.45) if first == "high" else (1.45, 2.10)
    Y = (a / b) ** 30 * stack.n_substrate
    r = stack.reflection(LAM)[0]
    assert r == pytest.approx((1 - Y) / (1 + Y), abs=1e-12)


def test_dbr_field_node_and_antinode():
    # high-index-first mirror: node at its surface; low-index-first: antinode
    cav = tune_air_gap(Cavity(GEV1), LAM, order=None)
    prof = field_profile(cav, LAM)
    air0, air1 = prof.regions["air"]
    E = np.abs(prof.E)
    emax = E.max()
    assert E[np.searchsorted(prof.z, air0)] < 1e-3 * emax
    d0, d1 = prof.regions["diamond"]
    i = int(np.argmin(np.abs(prof.z - d1)))
    assert E[i] == pytest.approx(prof.region_max("diamond"), rel=1e-3)


def test_vacuum_resonances():
    L = 5e-6
    res = transfer_matrix_resonance(vacuum_cavity(L), (550e-9, 700e-9), order=None)
    m = np.round(2 * L / res.wavelengths)
    np.testing.assert_allclose(res.wavelengths, 2 * L / m, rtol=1e-6)
    assert res.wavelengths.size == int(2 * L / 550e-9) - int(np.ceil(2 * L / 700e-9)) + 1


def test_no_resonance_in_window():
    with pytest.raises(ValueError, match="no resonance"):
        transfer_matrix_resonance(vacuum_cavity(LAM / 2), (620e-9, 640e-9), order=None)


def test_gev1_mode_is_air_like(gev1_coupling):
    assert gev1_coupling.profile.mode_character() == "air"
    res = transfer_matrix_resonance(gev1_coupling.cavity, (598e-9, 606e-9), order=None)
    assert np.min(np.abs(res.wavelengths - LAM)) < 1e-6 * LAM


def test_quantize_waist_scaling():
    prof = field_profile(vacuum_cavity(4 * LAM / 2), LAM)
    assert quantize_field(prof, 1e-6) / quantize_field(prof, 2e-6) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        quantize_field(prof, 0.0)


def test_quantize_length_scaling():
    e1 = quantize_field(field_profile(vacuum_cavity(10 * LAM / 2), LAM), 1e-6)
    e2 = quantize_field(field_profile(vacuum_cavity(20 * LAM / 2), LAM), 1e-6)
    assert e1 / e2 == pytest.approx(np.sqrt(2), rel=1e-6)


def test_quantize_against_closed_form():
    # perfect-mirror cavity: E_max^2 = hbar omega / (eps0 L pi w^2 / 2)
    L, w = 10 * LAM / 2, 1.3e-6
    e = quantize_field(field_profile(vacuum_cavity(L), LAM), w)
    omega = 2 * np.pi * c / LAM
    assert e == pytest.approx(np.sqrt(hbar * omega / (epsilon_0 * L * np.pi * w**2 / 2)), rel=1e-6)


def test_dipole_moment():
    mu = dipole_moment(TAU, LAM, 2.41)
    assert mu == pytest.approx(2.3e-29, abs=0.05e-29)
    assert dipole_moment(4 * TAU, LAM, 2.41) == pytest.approx(mu / 2, rel=1e-12)
    # Einstein A coefficient in a medium, A = n omega^3 mu^2 / (3 pi eps0 hbar c^3)
    omega = 2 * np.pi * c / LAM
    alt = np.sqrt(3 * np.pi * epsilon_0 * hbar * c**3 / (2.41 * omega**3 * TAU))
    assert mu == pytest.approx(alt, rel=1e-10)
    with pytest.raises(ValueError):
        dipole_moment(0.0, LAM, 2.41)


@pytest.mark.xfail(strict=True, reason="surrogate quarter-wave coating gives g0/2pi = 0.608 GHz, "
                   "24% below the reported 0.80 GHz; the real coating is unpublished")
def test_gev1_g0_within_20_percent(gev1_coupling):
    assert to_ghz(gev1_coupling.g0.value) == pytest.approx(0.80, rel=0.20)


def test_gev1_g0_value_and_error(gev1_coupling):
    g0 = gev1_coupling.g0
    assert to_ghz(g0.value) == pytest.approx(0.608, abs=0.005)
    assert 0 < g0.sigma < 0.2 * g0.value


def test_gev3_g0():
    geo = CavityGeometry(roc=22.5e-6, t_diamond=0.79e-6, t_air=9.71e-6, waist=1.40e-6)
    g0 = ideal_coupling(Cavity(geo), TAU).g0.value
    assert to_ghz(g0) == pytest.approx(0.67, rel=0.20)


def test_g0_scaling_laws():
    cav = vacuum_cavity(10 * LAM / 2)
    base = ideal_coupling(cav, TAU).g0.value
    assert ideal_coupling(cav, 4 * TAU).g0.value == pytest.approx(base / 2, rel=1e-12)
    wide = cav.with_geometry(waist=2e-6)
    assert ideal_coupling(wide, TAU).g0.value == pytest.approx(base / 2, rel=1e-9)
    long = cav.with_geometry(t_air=20 * LAM / 2)
    assert ideal_coupling(long, TAU).g0.value == pytest.approx(base / np.sqrt(2), rel=1e-6)


def test_vacuum_dispersion_slope():
    # L = lambda/2: dL/dnu = lambda^2 / (2c); for L = m lambda/2 it is m times that
    unit = LAM**2 / (2 * c) * 1e21
    assert dispersion_slope(vacuum_cavity(LAM / 2), order=None) == pytest.approx(unit, rel=1e-6)
    assert dispersion_slope(vacuum_cavity(10 * LAM / 2), order=None) == pytest.approx(10 * unit, rel=1e-6)


def test_gev1_dispersion_slope():
    assert dispersion_slope(Cavity(GEV1)) == pytest.approx(17.64, rel=0.15)


def test_geometry_stability():
    with pytest.raises(ValueError, match="unstable"):
        CavityGeometry(5e-6, 1e-6, 8e-6, 1e-6).gouy(0)
    assert GEV1.gouy(1) == pytest.approx(2 * GEV1.gouy(0))
    with pytest.warns(UserWarning):
        CavityGeometry(22.5e-6, 1.05e-6, 6.95e-6, 5e-6).check()


def test_hybrid_fsr():
    assert hybrid_fsr(GEV1) == pytest.approx(c / (2 * (6.95e-6 + 2.41 * 1.05e-6)))


def test_loci_continuous():
    ts = np.linspace(6.9e-6, 7.0e-6, 101)
    dmap = simulate_dispersion(Cavity(GEV1), ts, (595e-9, 610e-9), orders=(0,))
    rows = dmap.loci[0]
    step = np.diff(ts)[0]
    for a, b in zip(rows, rows[1:]):
        for lam in a:
            if lam < 596e-9 or lam > 609e-9:
                continue  # loci may enter or leave through the window edges
            jump = np.min(np.abs(b - lam))
            # a resonance moves by at most lambda * dt / L_opt per step
            assert jump < 2 * LAM * step / 6.9e-6


def test_dispersion_closed_loop():
    truth = Cavity(GEV1)
    obs = []
    for q in (0, 1):
        dmap = simulate_dispersion(truth, np.linspace(6.5e-6, 7.4e-6, 10), (595e-9, 610e-9), orders=(q,))
        obs += [(t, lam, q) for t, row in zip(dmap.t_air, dmap.loci[q]) for lam in row]
    start = truth.with_geometry(roc=0.98 * GEV1.roc, t_diamond=0.98 * GEV1.t_diamond)
    res = fit_dispersion(start, obs)
    assert res.params["roc"] == pytest.approx(GEV1.roc, rel=0.01)
    assert res.params["t_diamond"] == pytest.approx(GEV1.t_diamond, rel=0.01)


def test_stack_file(tmp_path):
    p = tmp_path / "top.txt"
    p.write_text("# substrate: 1.46\n2.10, 71.67\n1.45 103.79\n\n")
    s = read_stack_file(p)
    assert s.indices == (2.10, 1.45) and s.n_substrate == 1.46
    assert s.thicknesses[0] == pytest.approx(71.67e-9)
    bad = tmp_path / "bad.txt"
    bad.write_text("2.1\n")
    with pytest.raises(ValueError, match="bad.txt:1"):
        read_stack_file(bad)


def test_default_mirrors_are_highly_reflective():
    for m in (default_mirror(), default_planar_mirror()):
        assert abs(m.reflection(LAM)[0]) ** 2 > 0.999

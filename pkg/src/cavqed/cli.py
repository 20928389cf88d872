"""Command-line entry point: ``cavqed <command> [options]``.

Every run writes ``<command>_results.csv`` (key, value, sigma, unit),
optional curve tables, and ``<command>_manifest.yaml`` recording the
command line, configuration and its hash, seed and package version.
``cavqed replay <manifest>`` re-executes a recorded run.

Exit codes: 0 success, 2 bad input, 3 fit or convergence failure.
"""

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .fitting import ConvergenceError, FitError, MeasuredValue, MonteCarloError
from .io import DatasetManifest, FormatError, atomic_write, load_dataset, save_dataset
from .units import from_ghz, to_ghz

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INPUT, EXIT_FIT = 0, 2, 3
OUT_ENV = "CAVQED_OUT"
SLOPE = 17.64  # pm/GHz near 602 nm


class Run:
    """Collects results and curve tables for one command."""

    def __init__(self, name, args, config):
        self.name, self.args, self.config = name, args, config
        self.results = []
        self.tables = {}
        self.inputs = {}

    def add(self, key, value, unit="", sigma=None):
        if isinstance(value, MeasuredValue):
            value, sigma = value.value, value.sigma
        self.results.append((key, float(value), np.nan if sigma is None else float(sigma), unit))

    def table(self, name, columns, units):
        self.tables[name] = (columns, units)

    def write(self, out, argv):
        out = Path(out)
        lines = ["key,value,sigma,unit"]
        lines += [f"{k},{v!r},{s!r},{u}" for k, v, s, u in self.results]
        files = {}
        p = out / f"{self.name}_results.csv"
        atomic_write(p, "\n".join(lines) + "\n")
        files["results"] = p.name
        for tname, (cols, units) in self.tables.items():
            head = [f"# unit.{c}: {units[c]}" for c in cols]
            body = [",".join(cols)]
            body += [",".join(repr(float(v)) for v in row) for row in zip(*cols.values())]
            p = out / f"{self.name}_{tname}.csv"
            atomic_write(p, "\n".join(head + body) + "\n")
            files[tname] = p.name
        manifest = {
            "command": self.name,
            "argv": list(argv),
            "version": __version__,
            "seed": getattr(self.args, "seed", None),
            "config_sha256": self.config.digest(),
            "config": self.config.to_dict(),
            "inputs": self.inputs,
            "outputs": files,
        }
        atomic_write(out / f"{self.name}_manifest.yaml", yaml.safe_dump(manifest, sort_keys=False))

    def show(self):
        for k, v, s, u in self.results:
            err = "" if np.isnan(s) else f" +/- {s:.3g}"
            print(f"{k} = {v:.6g}{err} {u}".rstrip())


def _file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load(run, path, kind, units=None):
    data, man = load_dataset(path, kind=kind, units=units)
    run.inputs[str(path)] = _file_hash(path)
    return data, man


def _measured_arg(text, default_rel=None):
    """'0.36' or '0.36+-0.02' (also '0.36±0.02')."""
    t = text.replace("±", "+-")
    if "+-" in t:
        v, s = t.split("+-")
        return MeasuredValue(float(v), float(s)), True
    return MeasuredValue(float(t), 0.0), False


def _with_config_sigma(text, configured):
    mv, explicit = _measured_arg(text)
    if explicit:
        return mv
    rel = configured.sigma / configured.value if configured.value else 0.0
    return MeasuredValue(mv.value, abs(mv.value) * rel)


# ----------------------------------------------------------------------------- commands

def cmd_simulate_decay(run):
    from .cqed import CqedParams
    from .decay import apparent_lifetime, vibration_averaged_decay, vibration_averaged_emission
    a, r = run.args, run.config.cqed.rates()
    g = from_ghz(a.g_ghz) if a.g_ghz is not None else r["g"].value
    snu = from_ghz(a.sigma_nu_ghz) if a.sigma_nu_ghz is not None else r["sigma_nu"].value
    p = CqedParams(g=g, kappa=r["kappa"].value, gamma=r["gamma"].value,
                   gamma_star=r["gamma_star"].value)
    st = a.sigma_t_ps * 1e-12
    t = np.arange(-2e-9, a.t_max_ns * 1e-9, a.dt_ps * 1e-12)
    emission = vibration_averaged_emission(p, snu, st, t)
    cavity = (vibration_averaged_decay(p, snu, st, t, normalize="area") if g > 0
              else np.zeros_like(t))
    run.table("curve", {"t": t, "cavity": cavity, "emission": emission},
              {"t": "s", "cavity": "1/s", "emission": "1/s"})
    # late-time slope of the total emission
    sel = (t > max(10 * st, 1e-9)) & (emission > emission.max() * 1e-8)
    slope = np.polyfit(t[sel][-200:], np.log(emission[sel][-200:]), 1)[0]
    run.add("tau_emission_tail", -1 / slope, "s")
    if g > 0:
        run.add("tau_apparent", apparent_lifetime(p, snu, st)[0], "s")


def cmd_fit_lifetime(run):
    from .decay import fit_constrained_lifetime, fit_emg
    a, cfg = run.args, run.config
    hist, _ = _load(run, a.input, "histogram")
    if a.model == "emg":
        res = fit_emg(hist)
        for k, u in (("lifetime", "s"), ("sigma_t", "s"), ("t0", "s"), ("amplitude", "counts"),
                     ("baseline", "counts/s")):
            run.add(k, res[k], u)
        run.add("deviance_per_dof", res.chi2_reduced)
        run.table("curve", {"t": hist.centers, "counts": hist.counts, "model": res.predict(hist.centers)},
                  {"t": "s", "counts": "counts", "model": "counts"})
        return
    r = cfg.cqed.rates()
    c = cfg.constraint
    fixed = {k: r[k] for k in ("kappa", "gamma", "pump", "sigma_nu")}
    lc = {"delta_cw": MeasuredValue(from_ghz(c.delta_cw_ghz.value), from_ghz(c.delta_cw_ghz.sigma)),
          "kappa_prime": MeasuredValue(from_ghz(c.kappa_prime_ghz.value), from_ghz(c.kappa_prime_ghz.sigma))}
    n_mc = a.n_mc if a.n_mc is not None else cfg.fit.n_mc
    seed = a.seed if a.seed is not None else cfg.fit.seed
    fit = fit_constrained_lifetime(hist, fixed, lc, n_mc=n_mc, seed=seed, n_nodes=cfg.fit.n_nodes)
    for k in ("g", "gamma_star"):
        v = getattr(fit, k)
        run.add(f"{k}_ghz", MeasuredValue(to_ghz(v.value), to_ghz(v.sigma)), "GHz")
    run.add("sigma_t", fit.sigma_t, "s")
    run.add("C_inc", fit.c_inc)
    run.add("C", fit.c)
    run.add("n_members", len(fit.members))
    run.add("n_failures", len(fit.ensemble.failures))
    lo, hi = fit.band
    run.table("curve", {"t": fit.t, "counts": hist.counts, "band_lo": lo, "band_hi": hi},
              {"t": "s", "counts": "counts", "band_lo": "counts", "band_hi": "counts"})


def cmd_fit_g2(run):
    from .correlation import fit_g2, hbt_postselect
    a = run.args
    stream, _ = _load(run, a.input, "timetags")
    hbt = hbt_postselect(stream, window=a.window_ms * 1e-3, min_counts=a.min_counts,
                         max_delay=a.max_delay_ns * 1e-9, bin_width=a.bin_ps * 1e-12)
    res = fit_g2(hbt, a.s, fit_range=None if a.fit_range_ns is None else a.fit_range_ns * 1e-9,
                 bunching=not a.no_bunching)
    for k in res.names:
        run.add(k, res[k], "s" if k in ("tau1", "tau2", "sigma_t") else "")
    run.add("g2_0", res.info["g2_0"])
    run.add("windows_used", len(hbt.windows_used))
    run.add("windows_total", hbt.n_windows)
    c = hbt.histogram.centers
    run.table("curve", {"tau": c, "counts": hbt.histogram.counts, "g2": hbt.normalized,
                        "model": res.predict(c) / np.where(hbt.expected > 0, hbt.expected, np.nan)},
              {"tau": "s", "counts": "counts", "g2": "", "model": ""})


def cmd_fit_spectrum(run):
    from .lineshape import fit_voigt_fixed_gaussian
    a = run.args
    spec, _ = _load(run, a.input, "spectrum")
    sg = a.sigma_g_ghz if a.sigma_g_ghz is not None else run.config.cqed.sigma_nu_ghz.value
    res = fit_voigt_fixed_gaussian(spec.bin_edges, spec.counts, sg)
    run.add("center", res["center"], "GHz")
    run.add("fwhm_l", res["fwhm_l"], "GHz")
    run.add("area", res["area"], "counts")
    run.add("sigma_g_fixed", sg, "GHz")


def cmd_fit_saturation(run):
    from .fitting import fit_saturation
    a = run.args
    data, man = _load(run, a.input, "saturation")
    sigma = None if a.rel_sigma is None else a.rel_sigma * np.abs(data.rate)
    res = fit_saturation(data.power, data.rate, a.c_bg, a.c_dark, sigma=sigma,
                         clip_threshold=a.clip if a.clip > 0 else None, clip_side=a.clip_side)
    pu = man.units["power"]
    run.add("I_inf", res["I_inf"], "counts/s")
    run.add("P_sat", res["P_sat"], pu)
    mask = res.info.get("mask")
    if mask is not None:
        run.add("n_clipped", int(np.size(mask) - np.count_nonzero(mask)))


def cmd_fit_sweep_linewidth(run):
    from .sidebands import fit_sideband_scan
    a = run.args
    sweep, man = _load(run, a.input, "sweep")
    sb = float(man.metadata["sideband_ghz"])
    slope = a.slope if man.units["x"] != "pm" or a.slope else SLOPE
    res = fit_sideband_scan(sweep.x, sweep.signal, sb, slope=slope if man.units["x"] != "GHz" else None,
                            wavelength=a.wavelength_nm * 1e-9)
    run.add("kappa_ghz", res.linewidth_ghz, "GHz")
    if res.length_linewidth is not None and man.units["x"] == "pm":
        run.add("length_linewidth", res.length_linewidth, "pm")
    if res.finesse is not None:
        run.add("finesse", res.finesse)


def cmd_vibration_analyze(run):
    from .vibration import summarize_vibrations
    a = run.args
    series, man = _load(run, a.input, "detunings")
    s = summarize_vibrations(series, (a.band_lo_hz, a.band_hi_hz), a.bin_width, nperseg=a.nperseg)
    u = series.unit
    run.add("rms_full", s.rms_full, u)
    run.add("rms_quiet", s.rms_quiet, u)
    run.add("sigma_g", s.fits["gaussian"]["sigma"], u)
    run.add("fwhm_l", s.fits["voigt"]["fwhm_l"], u)
    if u == "pm":
        sg = s.fits["gaussian"]["sigma"]
        run.add("sigma_nu_ghz", MeasuredValue(sg.value / a.slope, sg.sigma / a.slope), "GHz")
    run.table("cumulative", {"f": s.frequencies, "rms_full": s.cumulative_rms_full,
                             "rms_quiet": s.cumulative_rms_quiet},
              {"f": "Hz", "rms_full": u, "rms_quiet": u})


def _cavity(run):
    from .optics import Cavity, CavityGeometry, read_stack_file
    g = run.config.geometry
    geo = CavityGeometry(roc=g.roc_um.value * 1e-6, t_diamond=g.t_diamond_um.value * 1e-6,
                         t_air=g.t_air_um.value * 1e-6, waist=g.waist_um.value * 1e-6)
    kw = {}
    if getattr(run.args, "top_stack", None):
        kw["top"] = read_stack_file(run.args.top_stack)
    if getattr(run.args, "bottom_stack", None):
        kw["bottom"] = read_stack_file(run.args.bottom_stack)
    return Cavity(geo, **kw)


def cmd_cavity_dispersion(run):
    from .optics import dispersion_slope, simulate_dispersion
    a = run.args
    cav = _cavity(run)
    lam = a.wavelength_nm * 1e-9
    run.add("slope", dispersion_slope(cav, lam), "pm/GHz")
    t0 = cav.geometry.t_air
    ts = t0 + np.linspace(-a.span_um, a.span_um, a.n_gaps) * 1e-6
    dm = simulate_dispersion(cav, ts, (a.scan_nm[0] * 1e-9, a.scan_nm[1] * 1e-9), orders=(0, 1))
    cols = {"t_air": [], "order": [], "wavelength": []}
    for q, rows in dm.loci.items():
        for t, lams in zip(dm.t_air, rows):
            for lv in lams:
                cols["t_air"].append(t)
                cols["order"].append(q)
                cols["wavelength"].append(lv)
    run.table("loci", {k: np.asarray(v, float) for k, v in cols.items()},
              {"t_air": "m", "order": "", "wavelength": "m"})


def cmd_cavity_g0(run):
    from .optics import ideal_coupling
    a, g = run.args, run.config.geometry
    cav = _cavity(run)
    tau = run.config.cqed.lifetime_ns
    errors = {"waist": g.waist_um.sigma * 1e-6, "t_diamond": g.t_diamond_um.sigma * 1e-6,
              "t_air": g.t_air_um.sigma * 1e-6, "tau": tau.sigma * 1e-9}
    res = ideal_coupling(cav, tau.value * 1e-9, a.wavelength_nm * 1e-9, errors=errors)
    run.add("g0_ghz", MeasuredValue(to_ghz(res.g0.value), to_ghz(res.g0.sigma)), "GHz")
    run.add("t_air_tuned", res.cavity.geometry.t_air, "m")
    prof = res.profile
    run.add("E_diamond_over_E_air", prof.region_max("diamond") / prof.region_max("air"))
    print(f"mode character: {prof.mode_character()}")
    run.table("field", {"z": prof.z, "n": prof.n, "intensity": prof.intensity},
              {"z": "m", "n": "", "intensity": "arb"})


def cmd_qe_bound(run):
    from .efficiency import EfficiencyLedger, eta_z, qe_bound
    a, c = run.args, run.config.cqed
    g = _with_config_sigma(a.g, c.g_ghz) if a.g else c.g_ghz
    g0 = _with_config_sigma(a.g0, c.g0_ghz) if a.g0 else c.g0_ghz
    factors = {}
    for k in ("eta_dw", "eta_br", "cos2_alpha", "eta_z"):
        v = getattr(a, k)
        if v is not None:
            factors[k] = _measured_arg(v)[0]
    if a.z_nm is not None:
        factors["eta_z"] = float(eta_z(a.z_nm * 1e-9))
    bound = qe_bound(g, g0, EfficiencyLedger(**factors))
    run.add("eta_qe_bound", bound)
    run.add("g_ghz", g, "GHz")
    run.add("g0_ghz", g0, "GHz")


SYNTH_KINDS = ("histogram", "hbt", "swept", "sweep", "spectrum", "saturation", "detunings")


def cmd_synth(run):
    from . import synth
    from .cqed import CqedParams
    from .io import SaturationData, Spectrum
    from .sidebands import Sweep
    a, r = run.args, run.config.cqed.rates()
    seed = a.seed if a.seed is not None else run.config.fit.seed
    rng = np.random.default_rng(seed)
    prov = {"generator": f"synth.{a.kind}", "seed": seed}
    if a.kind == "histogram":
        p = CqedParams(g=r["g"].value, kappa=r["kappa"].value, gamma=r["gamma"].value,
                       gamma_star=r["gamma_star"].value)
        hist, _ = synth.decay_histogram(p, r["sigma_nu"].value, a.sigma_t_ps * 1e-12,
                                        events=a.events, background=a.background, rng=rng)
        prov.update(g_ghz=to_ghz(p.g), kappa_ghz=to_ghz(p.kappa), gamma_star_ghz=to_ghz(p.gamma_star),
                    lifetime_s=1 / p.gamma, sigma_nu_ghz=to_ghz(r["sigma_nu"].value),
                    sigma_t_s=a.sigma_t_ps * 1e-12, events=a.events)
        data, man = hist, DatasetManifest("histogram", provenance=prov)
    elif a.kind == "hbt":
        data = synth.antibunched_stream(duration=a.duration, shelving_prob=a.shelving_prob, rng=rng)
        prov.update(duration_s=a.duration, shelving_prob=a.shelving_prob)
        man = DatasetManifest("timetags", provenance=prov)
    elif a.kind == "swept":
        data = synth.swept_cavity_stream(duration=a.duration, rng=rng)
        prov.update(duration_s=a.duration, lifetime_s=6.1e-9)
        man = DatasetManifest("timetags", metadata={"sync_channel": 0, "photon_channel": 1}, provenance=prov)
    elif a.kind == "sweep":
        x, y, truth = synth.sideband_sweep(kappa_ghz=run.config.cqed.kappa_ghz.value, rng=rng)
        prov.update({k: float(v) for k, v in truth.items()})
        data = Sweep(x, y)
        man = DatasetManifest("sweep", metadata={"sideband_ghz": 4.0, "slope_pm_per_ghz": SLOPE},
                              provenance=prov)
    elif a.kind == "spectrum":
        edges, counts = synth.spectrum(sigma_g=run.config.cqed.sigma_nu_ghz.value, rng=rng)
        prov.update(sigma_g_ghz=run.config.cqed.sigma_nu_ghz.value, fwhm_l_ghz=2.3)
        data, man = Spectrum(edges, counts), DatasetManifest("spectrum", provenance=prov)
    elif a.kind == "saturation":
        P = np.geomspace(1, 1000, 30)
        P, I, bad = synth.saturation_data(P, 2e5, 100.0, c_bg=20.0, c_dark=500.0, outliers=1,
                                          outlier_factor=0.5, rng=rng)
        prov.update(i_inf=2e5, p_sat=100.0, c_bg=20.0, c_dark=500.0, outlier_index=int(np.flatnonzero(bad)[0]))
        data, man = SaturationData(P, I), DatasetManifest("saturation", provenance=prov)
    elif a.kind == "detunings":
        data = synth.voigt_detunings(rng=rng)
        prov.update(sigma_pm=31.7, fwhm_l_pm=43.7, quiet_fraction=0.5)
        man = DatasetManifest("detunings", {"detuning": "pm"}, provenance=prov)
    else:
        raise ValueError(f"unsupported synth kind {a.kind!r}")
    ext = ".bin" if man.kind == "timetags" else ".csv"
    path = Path(a.out) / f"synth_{a.kind}{ext}"
    save_dataset(path, data, man)
    print(f"wrote {path}")
    run.add("records", len(data) if man.kind == "timetags" else np.size(getattr(data, "counts", getattr(data, "x", getattr(data, "power", getattr(data, "detunings", []))))))


def cmd_replay(run):
    m = yaml.safe_load(Path(run.args.manifest).read_text())
    if not isinstance(m, dict) or "argv" not in m:
        raise FormatError(f"{run.args.manifest}: not a run manifest")
    if m.get("config_sha256") and RunConfig.from_dict(m["config"]).digest() != m["config_sha256"]:
        raise FormatError("manifest config does not match its recorded hash")
    cfg_path = Path(run.args.manifest).with_suffix(".replay-config.yaml")
    atomic_write(cfg_path, yaml.safe_dump(m["config"], sort_keys=False))
    argv = [x for x in m["argv"]]
    # the recorded config content wins over whatever file the original run read
    if "--config" in argv:
        i = argv.index("--config")
        argv[i + 1] = str(cfg_path)
    else:
        argv = [argv[0], "--config", str(cfg_path)] + argv[1:]
    return main(argv)


COMMANDS = {
    "simulate-decay": cmd_simulate_decay,
    "fit-lifetime": cmd_fit_lifetime,
    "fit-g2": cmd_fit_g2,
    "fit-spectrum": cmd_fit_spectrum,
    "fit-saturation": cmd_fit_saturation,
    "fit-sweep-linewidth": cmd_fit_sweep_linewidth,
    "vibration-analyze": cmd_vibration_analyze,
    "cavity-dispersion": cmd_cavity_dispersion,
    "cavity-g0": cmd_cavity_g0,
    "qe-bound": cmd_qe_bound,
    "synth": cmd_synth,
    "replay": cmd_replay,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./cavqed_out)")
    common.add_argument("--format", choices=["csv"], default="csv")

    ap = argparse.ArgumentParser(prog="cavqed", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cavqed {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-decay", parents=[common], help="vibration-averaged decay curve")
    p.add_argument("--g-ghz", type=float)
    p.add_argument("--sigma-nu-ghz", type=float)
    p.add_argument("--sigma-t-ps", type=float, default=196.0)
    p.add_argument("--t-max-ns", type=float, default=40.0)
    p.add_argument("--dt-ps", type=float, default=16.0)

    p = sub.add_parser("fit-lifetime", parents=[common], help="lifetime fit of a delay histogram")
    p.add_argument("input")
    p.add_argument("--model", choices=["constrained", "emg"], default="constrained")
    p.add_argument("--n-mc", type=int)

    p = sub.add_parser("fit-g2", parents=[common], help="HBT post-selection and g2 fit")
    p.add_argument("input", help="binary time-tag file")
    p.add_argument("--s", type=float, default=0.9953, help="emitter fraction of detections")
    p.add_argument("--window-ms", type=float, default=10.0)
    p.add_argument("--min-counts", type=int, default=50)
    p.add_argument("--max-delay-ns", type=float, default=50.0)
    p.add_argument("--bin-ps", type=float, default=100.0)
    p.add_argument("--fit-range-ns", type=float)
    p.add_argument("--no-bunching", action="store_true", help="two-level model (a = 0)")

    p = sub.add_parser("fit-spectrum", parents=[common], help="Voigt fit with fixed Gaussian width")
    p.add_argument("input")
    p.add_argument("--sigma-g-ghz", type=float)

    p = sub.add_parser("fit-saturation", parents=[common], help="saturation curve with clipping")
    p.add_argument("input")
    p.add_argument("--c-bg", type=float, default=0.0, help="background slope, counts/s per power unit")
    p.add_argument("--c-dark", type=float, default=0.0, help="dark rate, counts/s")
    p.add_argument("--clip", type=float, default=5.0, help="clip threshold in sigma (0 disables)")
    p.add_argument("--clip-side", choices=["both", "low", "high"], default="both")
    p.add_argument("--rel-sigma", type=float,
                   help="fractional uncertainty of each rate (default: unweighted, robust clip scale)")

    p = sub.add_parser("fit-sweep-linewidth", parents=[common], help="sideband linewidth calibration")
    p.add_argument("input")
    p.add_argument("--slope", type=float, help=f"pm/GHz (default {SLOPE})")
    p.add_argument("--wavelength-nm", type=float, default=602.0)

    p = sub.add_parser("vibration-analyze", parents=[common], help="PSD, RMS and histogram fits")
    p.add_argument("input")
    p.add_argument("--band-lo-hz", type=float, default=0.0)
    p.add_argument("--band-hi-hz", type=float, default=10e3)
    p.add_argument("--bin-width", type=float, default=2.0, help="histogram bin, series units")
    p.add_argument("--nperseg", type=int, default=1024)
    p.add_argument("--slope", type=float, default=SLOPE, help="pm/GHz")

    for name, hlp in (("cavity-dispersion", "transfer-matrix mode dispersion"),
                      ("cavity-g0", "ideal coupling from the quantized field")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--wavelength-nm", type=float, default=602.0)
        p.add_argument("--top-stack", help="stack file for the fiber mirror")
        p.add_argument("--bottom-stack", help="stack file for the planar mirror")
        if name == "cavity-dispersion":
            p.add_argument("--scan-nm", type=float, nargs=2, default=(570.0, 640.0))
            p.add_argument("--span-um", type=float, default=0.5)
            p.add_argument("--n-gaps", type=int, default=21)

    p = sub.add_parser("qe-bound", parents=[common], help="lower bound on quantum efficiency")
    p.add_argument("--g", help="GHz, '0.36' or '0.36+-0.02'")
    p.add_argument("--g0", help="GHz, '0.80' or '0.80+-0.04'")
    p.add_argument("--eta-dw")
    p.add_argument("--eta-br")
    p.add_argument("--cos2-alpha")
    p.add_argument("--eta-z")
    p.add_argument("--z-nm", type=float, help="emitter offset from the antinode")

    p = sub.add_parser("synth", parents=[common], help="synthetic dataset with recorded truth")
    p.add_argument("kind", choices=SYNTH_KINDS)
    p.add_argument("--events", type=int, default=1_000_000)
    p.add_argument("--background", type=float, default=0.0, help="counts per bin")
    p.add_argument("--sigma-t-ps", type=float, default=196.0)
    p.add_argument("--duration", type=float, default=1.0, help="s, for time-tag kinds")
    p.add_argument("--shelving-prob", type=float, default=0.02)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    return ap


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    name = args.command
    try:
        if name == "replay":
            return cmd_replay(Run(name, args, RunConfig()))
        config = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ValueError("--seed must be non-negative")
        args.out = args.out or os.environ.get(OUT_ENV) or "cavqed_out"
        run = Run(name, args, config)
        COMMANDS[name](run)
        run.write(args.out, argv)
        run.show()
        return EXIT_OK
    except (ConvergenceError, FitError, MonteCarloError) as e:
        print(f"cavqed {name}: fit failed: {e}", file=sys.stderr)
        return EXIT_FIT
    except (ConfigError, FormatError, ValueError, OSError, KeyError) as e:
        print(f"cavqed {name}: input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

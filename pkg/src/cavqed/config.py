"""Run configuration: one YAML file with explicit units in every key.

Example::

    cqed:
      g_ghz: 0.36
      g0_ghz: [0.80, 0.04]
      kappa_ghz: [2.07, 0.06]        # value, sigma
      lifetime_ns: {value: 6.1, sigma: 0.3}
      gamma_star_ghz: 1.0
      pump_ghz: [0.08, 0.01]
      sigma_nu_ghz: [1.796, 0.006]
    geometry:
      roc_um: 22.5
      t_diamond_um: 1.05
      t_air_um: 6.95
      waist_um: 1.30
    constraint:
      delta_cw_ghz: [8.9, 0.2]
      kappa_prime_ghz: [5.8, 0.1]
    fit:
      n_mc: 50
      seed: 0

Unknown sections or keys raise ``ConfigError``.
"""

import hashlib
import json
from dataclasses import dataclass, field, fields

import yaml

from .fitting import MeasuredValue
from .units import from_ghz, rate_from_lifetime

__all__ = ["ConfigError", "CqedSection", "GeometrySection", "ConstraintSection", "FitSection",
           "RunConfig", "load_config"]


class ConfigError(ValueError):
    pass


def _measured(name, v, positive=True):
    if isinstance(v, MeasuredValue):
        out = v
    else:
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            pair = (v, 0.0)
        elif isinstance(v, (list, tuple)) and len(v) == 2:
            pair = tuple(v)
        elif isinstance(v, dict) and set(v) <= {"value", "sigma"} and "value" in v:
            pair = (v["value"], v.get("sigma", 0.0))
        else:
            pair = None
        try:
            val, sig = float(pair[0]), float(pair[1])
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a number, [value, sigma] or {{value, sigma}}, got {v!r}") from None
        if sig < 0:
            raise ConfigError(f"{name}: sigma must be non-negative")
        out = MeasuredValue(val, sig)
    if positive and out.value <= 0:
        raise ConfigError(f"{name}: must be positive, got {out.value}")
    if not positive and out.value < 0:
        raise ConfigError(f"{name}: must be non-negative, got {out.value}")
    return out


class _Section:
    _nonneg = ()

    @classmethod
    def parse(cls, d, where):
        d = d or {}
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}; allowed {sorted(known)}")
        return cls(**{k: cls._convert(f"{where}.{k}", k, v) for k, v in d.items()})

    @classmethod
    def _convert(cls, name, key, v):
        return _measured(name, v, positive=key not in cls._nonneg)


@dataclass
class CqedSection(_Section):
    g_ghz: MeasuredValue = field(default_factory=lambda: MeasuredValue(0.36, 0.02))
    g0_ghz: MeasuredValue = field(default_factory=lambda: MeasuredValue(0.80, 0.04))
    kappa_ghz: MeasuredValue = field(default_factory=lambda: MeasuredValue(2.07, 0.06))
    lifetime_ns: MeasuredValue = field(default_factory=lambda: MeasuredValue(6.1, 0.0))
    gamma_star_ghz: MeasuredValue = field(default_factory=lambda: MeasuredValue(1.0, 0.0))
    pump_ghz: MeasuredValue = field(default_factory=lambda: MeasuredValue(0.08, 0.01))
    sigma_nu_ghz: MeasuredValue = field(default_factory=lambda: MeasuredValue(1.796, 0.006))
    _nonneg = ("gamma_star_ghz", "pump_ghz", "sigma_nu_ghz", "g_ghz")

    def rates(self):
        """Angular rates (rad/s) as MeasuredValues keyed like the fit inputs."""
        def ang(m):
            return MeasuredValue(from_ghz(m.value), from_ghz(m.sigma))
        tau = self.lifetime_ns
        gam = rate_from_lifetime(tau.value * 1e-9)
        return {
            "g": ang(self.g_ghz),
            "g0": ang(self.g0_ghz),
            "kappa": ang(self.kappa_ghz),
            "gamma": MeasuredValue(gam, gam * tau.sigma / tau.value),
            "gamma_star": ang(self.gamma_star_ghz),
            "pump": ang(self.pump_ghz),
            "sigma_nu": ang(self.sigma_nu_ghz),
        }


@dataclass
class GeometrySection(_Section):
    roc_um: MeasuredValue = field(default_factory=lambda: MeasuredValue(22.5, 0.3))
    t_diamond_um: MeasuredValue = field(default_factory=lambda: MeasuredValue(1.05, 0.02))
    t_air_um: MeasuredValue = field(default_factory=lambda: MeasuredValue(6.95, 0.05))
    waist_um: MeasuredValue = field(default_factory=lambda: MeasuredValue(1.30, 0.01))


@dataclass
class ConstraintSection(_Section):
    delta_cw_ghz: MeasuredValue = field(default_factory=lambda: MeasuredValue(8.9, 0.2))
    kappa_prime_ghz: MeasuredValue = field(default_factory=lambda: MeasuredValue(5.8, 0.1))


@dataclass
class FitSection(_Section):
    n_mc: int = 50
    seed: int = 0
    n_nodes: int = 64
    clip_threshold: float = 5.0

    @classmethod
    def _convert(cls, name, key, v):
        if key in ("n_mc", "seed", "n_nodes"):
            if isinstance(v, bool) or not isinstance(v, int) or v < (0 if key == "seed" else 1):
                raise ConfigError(f"{name}: expected a {'non-negative' if key == 'seed' else 'positive'} integer")
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"{name}: expected a positive number")
        return float(v)


SECTIONS = {"cqed": CqedSection, "geometry": GeometrySection,
            "constraint": ConstraintSection, "fit": FitSection}


@dataclass
class RunConfig:
    cqed: CqedSection = field(default_factory=CqedSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    constraint: ConstraintSection = field(default_factory=ConstraintSection)
    fit: FitSection = field(default_factory=FitSection)

    @classmethod
    def from_dict(cls, d):
        d = d or {}
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping of sections")
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section(s) {sorted(unknown)}; allowed {sorted(SECTIONS)}")
        return cls(**{k: SECTIONS[k].parse(v, k) for k, v in d.items()})

    def to_dict(self):
        def plain(v):
            return [v.value, v.sigma] if isinstance(v, MeasuredValue) else v
        out = {}
        for name in SECTIONS:
            sec = getattr(self, name)
            out[name] = {f.name: plain(getattr(sec, f.name)) for f in fields(sec)}
        return out

    def digest(self):
        """SHA-256 of the canonical JSON form; identical configs hash alike."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def load_config(path=None):
    """Parse a YAML run configuration (defaults when ``path`` is None)."""
    if path is None:
        return RunConfig()
    with open(path) as f:
        try:
            d = yaml.safe_load(f)
        except yaml.YAMLError as err:
            raise ConfigError(f"{path}: not valid YAML: {err}") from None
    return RunConfig.from_dict(d)

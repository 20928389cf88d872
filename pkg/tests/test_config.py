import pytest

from cavqed.config import ConfigError, RunConfig, load_config
from cavqed.fitting import MeasuredValue


def test_defaults():
    cfg = load_config()
    assert cfg.cqed.g_ghz == MeasuredValue(0.36, 0.02)
    assert cfg.fit.n_mc == 50


def test_value_forms(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("cqed:\n  g_ghz: 0.4\n  kappa_ghz: [2.0, 0.1]\n  lifetime_ns: {value: 6.0, sigma: 0.2}\n"
                 "fit:\n  n_mc: 5\n  seed: 9\n")
    cfg = load_config(p)
    assert cfg.cqed.g_ghz == MeasuredValue(0.4, 0.0)
    assert cfg.cqed.kappa_ghz == MeasuredValue(2.0, 0.1)
    assert cfg.cqed.lifetime_ns == MeasuredValue(6.0, 0.2)
    assert cfg.fit.seed == 9
    rates = cfg.cqed.rates()
    assert rates["gamma"].sigma / rates["gamma"].value == pytest.approx(0.2 / 6.0)


@pytest.mark.parametrize("text, match", [
    ("cqed:\n  g_mhz: 1\n", "unknown key"),
    ("optics:\n  roc_um: 1\n", "unknown section"),
    ("cqed:\n  kappa_ghz: -1\n", "positive"),
    ("cqed:\n  kappa_ghz: [1, -0.1]\n", "non-negative"),
    ("cqed:\n  kappa_ghz: fast\n", "expected a number"),
    ("fit:\n  n_mc: 0\n", "positive integer"),
    ("fit:\n  seed: 1.5\n", "integer"),
    ("cqed: [1, 2\n", "not valid YAML"),
    ("- 1\n", "mapping"),
])
def test_rejections(tmp_path, text, match):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(p)


def test_digest_round_trip():
    cfg = RunConfig()
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.digest() == cfg.digest()
    other = RunConfig.from_dict({"cqed": {"g_ghz": 0.37}})
    assert other.digest() != cfg.digest()

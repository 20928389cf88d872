import numpy as np
import pytest

from cavqed.correlation import TimeTagStream
from cavqed.decay import TcspcHistogram
from cavqed.io import (
    HEADER,
    RECORD,
    DatasetManifest,
    FormatError,
    SaturationData,
    Spectrum,
    UnitMismatchError,
    load_dataset,
    read_timetags,
    save_dataset,
    write_timetags,
)
from cavqed.sidebands import Sweep
from cavqed.vibration import DetuningSeries


def test_histogram_round_trip(tmp_path):
    edges = np.linspace(-1e-9, 20e-9, 1313)
    counts = np.random.default_rng(0).poisson(50, 1312)
    h = TcspcHistogram(edges, counts)
    man = DatasetManifest("histogram", provenance={"seed": 3, "note": "a: b, c"})
    save_dataset(tmp_path / "h.csv", h, man)
    h2, m2 = load_dataset(tmp_path / "h.csv")
    np.testing.assert_array_equal(h2.bin_edges, h.bin_edges)
    np.testing.assert_array_equal(h2.counts, h.counts)
    assert m2.provenance == {"seed": 3, "note": "a: b, c"}


def test_other_kinds_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    cases = [
        (Sweep(rng.random(50), rng.random(50), -1, 2.5),
         DatasetManifest("sweep", {"x": "pm"}, {"sideband_ghz": 4.0})),
        (Spectrum(np.linspace(-5, 5, 101), rng.poisson(9, 100)), None),
        (SaturationData(np.geomspace(1, 100, 9), 1e4 * rng.random(9)), DatasetManifest("saturation", {"power": "mW"})),
        (DetuningSeries(np.arange(20) / 1e3, rng.standard_normal(20), rng.random(20) > 0.5, unit="pm"), None),
    ]
    for i, (data, man) in enumerate(cases):
        p = tmp_path / f"d{i}.csv"
        man = save_dataset(p, data, man)
        back, m2 = load_dataset(p)
        assert m2.kind == man.kind and m2.units == man.units
        for attr in ("x", "signal", "bin_edges", "counts", "power", "rate", "times", "detunings", "quiet_mask"):
            if hasattr(data, attr):
                np.testing.assert_array_equal(getattr(back, attr), getattr(data, attr))
    sweep, _ = load_dataset(tmp_path / "d0.csv")
    assert sweep.direction == -1 and sweep.time == 2.5


def test_timetag_round_trip(tmp_path):
    s = TimeTagStream([0, 5, 5, 2**40], [0, 1, 0, 2])
    write_timetags(tmp_path / "t.bin", s, DatasetManifest("timetags", metadata={"sync_channel": 2}))
    s2, man = load_dataset(tmp_path / "t.bin")
    np.testing.assert_array_equal(s2.timestamps, s.timestamps)
    np.testing.assert_array_equal(s2.channels, s.channels)
    assert man.metadata == {"sync_channel": 2}
    raw = (tmp_path / "t.bin").read_bytes()
    assert raw[:4] == b"CQTT" and len(raw) == 16 + 4 * 9


def _raw_tags(path, ts, ch):
    head = np.zeros(1, HEADER)
    head["magic"], head["version"], head["count"] = b"CQTT", 1, len(ts)
    rec = np.empty(len(ts), RECORD)
    rec["t"], rec["c"] = ts, ch
    path.write_bytes(head.tobytes() + rec.tobytes())


def test_out_of_order_tags_name_record(tmp_path):
    p = tmp_path / "bad.bin"
    _raw_tags(p, [1, 7, 9, 4, 12], [0, 1, 0, 1, 0])
    with pytest.raises(FormatError, match="record 3"):
        read_timetags(p)


def test_truncated_binary(tmp_path):
    p = tmp_path / "trunc.bin"
    _raw_tags(p, [1, 2, 3], [0, 0, 0])
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(FormatError, match="truncated"):
        read_timetags(p)
    p.write_bytes(b"CQ")
    with pytest.raises(FormatError, match="truncated header"):
        read_timetags(p)


def test_missing_column_lists_schema(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# kind: sweep\n# unit.x: pm\n# meta.sideband_ghz: 4.0\nx\n1.0\n2.0\n")
    with pytest.raises(FormatError, match=r"missing column.*signal.*expected schema: x \[pm\|V\|GHz\], signal"):
        load_dataset(p)


def test_malformed_header_and_rows(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("# kind histogram\nt_lo,t_hi,counts\n")
    with pytest.raises(FormatError, match="malformed header"):
        load_dataset(p)
    p.write_text("# kind: histogram\n# unit.t_lo: s\n# unit.t_hi: s\n# unit.counts: counts\n"
                 "t_lo,t_hi,counts\n0,1,5\n1,2\n")
    with pytest.raises(FormatError, match="a.csv:7"):
        load_dataset(p)


def test_unit_mismatch(tmp_path):
    p = tmp_path / "sat.csv"
    save_dataset(p, SaturationData(np.arange(1.0, 5), np.arange(4.0)), DatasetManifest("saturation", {"power": "mW"}))
    with pytest.raises(UnitMismatchError):
        load_dataset(p, units={"power": "W"})
    with pytest.raises(UnitMismatchError):
        DatasetManifest("saturation", {"power": "furlong"})
    with pytest.raises(FormatError, match="expected 'histogram'"):
        load_dataset(p, kind="histogram")


def test_manifest_required_metadata():
    with pytest.raises(ValueError, match="sideband_ghz"):
        DatasetManifest("sweep")
    with pytest.raises(ValueError, match="unknown dataset kind"):
        DatasetManifest("movie")


def test_atomic_write_leaves_no_temp(tmp_path):
    save_dataset(tmp_path / "x.csv", Spectrum(np.arange(4.0), np.arange(3)))
    assert sorted(f.name for f in tmp_path.iterdir()) == ["x.csv"]

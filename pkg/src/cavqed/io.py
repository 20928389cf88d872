"""Dataset files: CSV with a ``# key: value`` header, and binary time tags.

CSV layout::

    # kind: histogram
    # unit.t_lo: s
    # unit.t_hi: s
    # unit.counts: counts
    # meta.<key>: <value>
    # provenance.<key>: <value>
    t_lo,t_hi,counts
    ...

Floats are written with ``repr`` so a save/load cycle is lossless.

Binary time tags: a 16-byte header (magic ``CQTT``, uint32 version,
uint64 record count, little endian) followed by packed records of uint64
picoseconds and uint8 channel.  Metadata goes to a YAML sidecar
``<file>.manifest.yaml``.
"""

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .correlation import TimeTagStream
from .decay import TcspcHistogram
from .sidebands import Sweep
from .vibration import DetuningSeries

__all__ = [
    "FormatError",
    "UnitMismatchError",
    "DatasetManifest",
    "Spectrum",
    "SaturationData",
    "SCHEMAS",
    "atomic_write",
    "save_dataset",
    "load_dataset",
    "write_timetags",
    "read_timetags",
]

MAGIC = b"CQTT"
VERSION = 1
HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("count", "<u8")])
RECORD = np.dtype([("t", "<u8"), ("c", "u1")])


class FormatError(ValueError):
    """File does not match its declared format."""


class UnitMismatchError(ValueError):
    """Units in a file differ from the ones required."""


# columns and their allowed units per kind; first entry is the default
SCHEMAS = {
    "histogram": {"t_lo": ("s",), "t_hi": ("s",), "counts": ("counts",)},
    "sweep": {"x": ("pm", "V", "GHz"), "signal": ("arb",)},
    "spectrum": {"f_lo": ("GHz",), "f_hi": ("GHz",), "counts": ("counts",)},
    "saturation": {"power": ("uW", "mW", "W"), "rate": ("counts/s",)},
    "detunings": {"time": ("s",), "detuning": ("pm", "GHz"), "quiet": ("bool",)},
    "timetags": {"timestamp": ("ps",), "channel": ("id",)},
}
REQUIRED_META = {
    "sweep": ("sideband_ghz",),
    "timetags": (),
    "histogram": (),
    "spectrum": (),
    "saturation": (),
    "detunings": (),
}


@dataclass
class DatasetManifest:
    """What a file holds: kind, column units, metadata and provenance."""

    kind: str
    units: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {sorted(SCHEMAS)}")
        schema = SCHEMAS[self.kind]
        units = {c: allowed[0] for c, allowed in schema.items()}
        units.update(self.units)
        for c, u in units.items():
            if c not in schema:
                raise ValueError(f"{self.kind}: unknown column {c!r}; schema is {_schema_text(self.kind)}")
            if u not in schema[c]:
                raise UnitMismatchError(f"{self.kind}.{c}: unit {u!r} not in {schema[c]}")
        self.units = units
        missing = [k for k in REQUIRED_META[self.kind] if k not in self.metadata]
        if missing:
            raise ValueError(f"{self.kind} dataset needs metadata {missing}")

    def to_dict(self):
        return {"kind": self.kind, "units": dict(self.units), "metadata": dict(self.metadata),
                "provenance": dict(self.provenance)}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"kind", "units", "metadata", "provenance"}
        if unknown:
            raise FormatError(f"unknown manifest keys {sorted(unknown)}")
        return cls(d["kind"], d.get("units") or {}, d.get("metadata") or {}, d.get("provenance") or {})


@dataclass
class Spectrum:
    bin_edges: np.ndarray
    counts: np.ndarray


@dataclass
class SaturationData:
    power: np.ndarray
    rate: np.ndarray


def _schema_text(kind):
    return ", ".join(f"{c} [{'|'.join(u)}]" for c, u in SCHEMAS[kind].items())


def atomic_write(path, data):
    """Write bytes or text to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as f:
            f.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ----------------------------------------------------------------------------- CSV

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _scalar(s):
    loaded = yaml.safe_load(s)
    return loaded if loaded is not None else ""


def _columns(data, kind):
    if kind == "histogram":
        e = data.bin_edges
        return {"t_lo": e[:-1], "t_hi": e[1:], "counts": np.asarray(data.counts)}
    if kind == "spectrum":
        e = np.asarray(data.bin_edges, float)
        return {"f_lo": e[:-1], "f_hi": e[1:], "counts": np.asarray(data.counts)}
    if kind == "sweep":
        return {"x": data.x, "signal": data.signal}
    if kind == "saturation":
        return {"power": data.power, "rate": data.rate}
    if kind == "detunings":
        return {"time": data.times, "detuning": data.detunings, "quiet": data.quiet_mask}
    raise ValueError(f"kind {kind!r} is not stored as CSV")


def _csv_text(data, manifest):
    cols = _columns(data, manifest.kind)
    lines = [f"# kind: {manifest.kind}"]
    lines += [f"# unit.{c}: {u}" for c, u in manifest.units.items()]
    for prefix, d in (("meta", manifest.metadata), ("provenance", manifest.provenance)):
        for k, v in d.items():
            lines.append(f"# {prefix}.{k}: {yaml.safe_dump(v, default_flow_style=True).strip().removesuffix('...').strip()}")
    names = list(cols)
    lines.append(",".join(names))
    arrays = [np.asarray(cols[c]) for c in names]
    for row in zip(*arrays):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _parse_csv(path):
    header, body = {}, []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, sep, val = line[1:].partition(":")
                if not sep:
                    raise FormatError(f"{path}:{lineno}: malformed header line {line!r}")
                header[key.strip()] = val.strip()
            elif line.strip():
                body.append((lineno, line))
    if "kind" not in header:
        raise FormatError(f"{path}: header lacks '# kind:'")
    if not body:
        raise FormatError(f"{path}: no column header row")
    return header, body


def _build(kind, cols, manifest):
    if kind == "histogram":
        lo, hi = cols["t_lo"], cols["t_hi"]
        if lo.size and not np.array_equal(lo[1:], hi[:-1]):
            raise FormatError("histogram bins are not contiguous")
        edges = np.append(lo, hi[-1:]) if lo.size else np.zeros(1)
        return TcspcHistogram(edges, cols["counts"].astype(np.int64))
    if kind == "spectrum":
        edges = np.append(cols["f_lo"], cols["f_hi"][-1:])
        return Spectrum(edges, cols["counts"].astype(np.int64))
    if kind == "sweep":
        m = manifest.metadata
        return Sweep(cols["x"], cols["signal"], int(m.get("direction", 1)), float(m.get("time", 0.0)))
    if kind == "saturation":
        return SaturationData(cols["power"], cols["rate"])
    if kind == "detunings":
        return DetuningSeries(cols["time"], cols["detuning"], cols["quiet"].astype(bool),
                              unit=manifest.units["detuning"])
    raise ValueError(kind)


def _read_csv(path, kind=None, units=None):
    header, body = _parse_csv(path)
    k = header["kind"]
    if kind is not None and k != kind:
        raise FormatError(f"{path}: holds {k!r}, expected {kind!r}")
    if k not in SCHEMAS or k == "timetags":
        raise FormatError(f"{path}: unsupported CSV kind {k!r}")
    file_units, meta, prov = {}, {}, {}
    for key, val in header.items():
        if key == "kind":
            continue
        prefix, _, name = key.partition(".")
        target = {"unit": file_units, "meta": meta, "provenance": prov}.get(prefix)
        if target is None or not name:
            raise FormatError(f"{path}: malformed header key {key!r}")
        target[name] = val if prefix == "unit" else _scalar(val)
    names = [c.strip() for c in body[0][1].split(",")]
    expected = list(SCHEMAS[k])
    missing = [c for c in expected if c not in names]
    if missing:
        raise FormatError(f"{path}: missing column(s) {missing}; expected schema: {_schema_text(k)}")
    no_unit = [c for c in expected if c not in file_units]
    if no_unit:
        raise FormatError(f"{path}: no unit declared for {no_unit}; expected schema: {_schema_text(k)}")
    if units:
        for c, u in units.items():
            if file_units.get(c) != u:
                raise UnitMismatchError(f"{path}: column {c!r} is in {file_units.get(c)!r}, required {u!r}")
    manifest = DatasetManifest(k, file_units, meta, prov)
    rows = []
    for lineno, line in body[1:]:
        parts = line.split(",")
        if len(parts) != len(names):
            raise FormatError(f"{path}:{lineno}: expected {len(names)} fields, found {len(parts)}")
        rows.append(parts)
    table = np.array(rows, dtype=object).reshape(len(rows), len(names))
    cols = {}
    for j, c in enumerate(names):
        if c not in SCHEMAS[k]:
            continue
        try:
            cols[c] = table[:, j].astype(float)
        except ValueError as err:
            raise FormatError(f"{path}: non-numeric value in column {c!r}: {err}") from None
    for c in ("counts", "quiet"):
        if c in cols and not np.all(cols[c] == np.round(cols[c])):
            raise FormatError(f"{path}: column {c!r} must hold integers")
    return _build(k, cols, manifest), manifest


# ----------------------------------------------------------------------------- binary time tags

def write_timetags(path, stream, manifest=None):
    """Save a TimeTagStream in the binary record format (plus YAML sidecar)."""
    ts = np.asarray(stream.timestamps)
    if np.any(ts < 0):
        raise ValueError("timestamps must be non-negative to store as uint64")
    bad = np.flatnonzero(np.diff(ts) < 0)
    if bad.size:
        raise ValueError(f"timestamps out of order at record {bad[0] + 1}")
    head = np.zeros(1, HEADER)
    head["magic"], head["version"], head["count"] = MAGIC, VERSION, ts.size
    rec = np.empty(ts.size, RECORD)
    rec["t"], rec["c"] = ts, stream.channels
    atomic_write(path, head.tobytes() + rec.tobytes())
    manifest = manifest or DatasetManifest("timetags")
    atomic_write(_sidecar(path), yaml.safe_dump(manifest.to_dict(), sort_keys=False))


def _sidecar(path):
    return Path(str(path) + ".manifest.yaml")


def read_timetags(path):
    """Load binary time tags; returns (TimeTagStream, DatasetManifest)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.itemsize:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    head = np.frombuffer(raw[:HEADER.itemsize], HEADER)[0]
    if head["magic"] != MAGIC:
        raise FormatError(f"{path}: bad magic {head['magic']!r}")
    if head["version"] != VERSION:
        raise FormatError(f"{path}: unsupported version {int(head['version'])}")
    n = int(head["count"])
    body = raw[HEADER.itemsize:]
    if len(body) != n * RECORD.itemsize:
        have = len(body) // RECORD.itemsize
        raise FormatError(f"{path}: truncated or padded file: header declares {n} records, "
                          f"found {have} (+{len(body) % RECORD.itemsize} stray bytes)")
    rec = np.frombuffer(body, RECORD)
    t = rec["t"]
    if np.any(t > np.iinfo(np.int64).max):
        raise FormatError(f"{path}: timestamp exceeds int64 range")
    bad = np.flatnonzero(np.diff(t.astype(np.int64)) < 0)
    if bad.size:
        raise FormatError(f"{path}: timestamps out of order at record {bad[0] + 1} "
                          f"({int(t[bad[0] + 1])} ps after {int(t[bad[0]])} ps)")
    side = _sidecar(path)
    manifest = (DatasetManifest.from_dict(yaml.safe_load(side.read_text()))
                if side.exists() else DatasetManifest("timetags"))
    return TimeTagStream(t.astype(np.int64), rec["c"].copy()), manifest


# ----------------------------------------------------------------------------- dispatch

def _infer_kind(data):
    if isinstance(data, TimeTagStream):
        return "timetags"
    if isinstance(data, TcspcHistogram):
        return "histogram"
    if isinstance(data, Sweep):
        return "sweep"
    if isinstance(data, Spectrum):
        return "spectrum"
    if isinstance(data, SaturationData):
        return "saturation"
    if isinstance(data, DetuningSeries):
        return "detunings"
    raise TypeError(f"no file format for {type(data).__name__}")


def save_dataset(path, data, manifest=None):
    """Write ``data`` atomically; the format follows its type.

    A manifest of the matching kind may supply units, metadata and
    provenance; sweeps record their direction and time in the metadata.
    """
    kind = _infer_kind(data)
    if manifest is None:
        meta = {}
        if kind == "sweep":
            raise ValueError("sweep datasets need a manifest with metadata 'sideband_ghz'")
        units = {"detuning": data.unit} if kind == "detunings" else {}
        manifest = DatasetManifest(kind, units, meta)
    if manifest.kind != kind:
        raise ValueError(f"manifest kind {manifest.kind!r} does not match data ({kind!r})")
    if kind == "detunings" and manifest.units["detuning"] != data.unit:
        raise UnitMismatchError(f"series is in {data.unit}, manifest says {manifest.units['detuning']}")
    if kind == "sweep":
        manifest.metadata.setdefault("direction", int(data.direction))
        manifest.metadata.setdefault("time", float(data.time))
    if kind == "timetags":
        write_timetags(path, data, manifest)
    else:
        atomic_write(path, _csv_text(data, manifest))
    return manifest


def load_dataset(path, kind=None, units=None):
    """Read a dataset file; returns (data, DatasetManifest).

    ``kind`` and ``units`` (column -> unit) are optional requirements; a
    mismatch raises rather than converting.
    """
    with open(path, "rb") as f:
        start = f.read(4)
    if start == MAGIC:
        if kind not in (None, "timetags"):
            raise FormatError(f"{path}: holds time tags, expected {kind!r}")
        data, manifest = read_timetags(path)
        if units:
            for c, u in units.items():
                if manifest.units.get(c) != u:
                    raise UnitMismatchError(f"{path}: column {c!r} is in {manifest.units.get(c)!r}, required {u!r}")
        return data, manifest
    return _read_csv(path, kind, units)

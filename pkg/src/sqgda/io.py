"""Configuration files, CSV tables, SQGF snapshots and run manifests.

Config files are flat ``key = value`` text with ``#`` comments.  Every key
must appear in ``CONFIG_SCHEMA``; unknown or duplicated keys are errors.

SQGF snapshot layout (all little-endian):

    offset  size  content
    0       4     magic b"SQGF"
    4       4     u32 format version (1)
    8       4     u32 nx
    12      4     u32 ny
    16      8     f64 time (a slice export stores the height z here)
    24      8     f64 kappa
    32      8     f64 gamma
    40      8*nx*ny   f64 physical samples, row-major, x varying fastest
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError

ARTIFACT_VERSION = "0.1.0"

# --------------------------------------------------------------- config


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s: str) -> tuple:
    return tuple(int(v) for v in s.split(",") if v.strip())


# key -> (parser, default, description)
CONFIG_SCHEMA: dict[str, tuple] = {
    "grid.nx": (int, 128, "grid points per side in x"),
    "grid.ny": (int, None, "grid points in y (defaults to grid.nx)"),
    "params.kappa": (float, 0.01, "dissipation coefficient kappa > 0"),
    "params.gamma": (float, 1.5, "dissipation exponent, admissible range (0, 2]"),
    "params.mu": (float, 10.0, "nudging strength mu >= 0"),
    "forcing.amplitude": (float, 0.05, "amplitude A of f = A[cos(k.x) + sin(k_perp.x)]"),
    "forcing.kx": (int, 3, "forcing wavevector, x component"),
    "forcing.ky": (int, 4, "forcing wavevector, y component"),
    "obs.kind": (str, "rough_modal", "volume | shifted_volume | rough_modal | smooth_modal"),
    "obs.n": (int, 16, "resolution parameter N of the observation operator"),
    "twin.t_spin": (float, 50.0, "spin-up time of the reference"),
    "twin.t_assim": (float, 30.0, "assimilation time"),
    "twin.dt": (float, 0.01, "time step"),
    "twin.eta0": (str, "zero", "initial nudged field: zero | random"),
    "twin.linear_only": (_bool, False, "drop the advection term"),
    "twin.sigma": (float, 0.9, "order of the H^sigma error norm"),
    "twin.tail_fraction": (float, 0.2, "trailing fraction of the spin-up used for Theta"),
    "output.cadence": (float, 0.1, "record interval in time units"),
    "output.dir": (str, "out", "output directory (overridden by --out)"),
    "output.snapshot_every": (float, 0.0, "simulate: snapshot interval in time units, 0 disables"),
    "simulate.t_end": (float, None, "simulate: run length (defaults to twin.t_spin)"),
    "sweep.mus": (_floats, (10.0,), "sweep: comma-separated nudging strengths"),
    "sweep.resolutions": (_ints, (2, 3, 4, 5, 6, 8, 10, 12, 16), "sweep: comma-separated N values"),
    "sweep.gammas": (_floats, None, "sweep: comma-separated gamma values (defaults to params.gamma)"),
    "props.resolutions": (_ints, None, "props: N values (default depends on obs.kind)"),
    "props.n_fields": (int, 4, "props: number of random test fields"),
    "props.kmax": (int, 6, "props: band limit of the random test fields"),
    "props.tol": (float, 0.15, "props: exponent tolerance"),
    "stream.n_fields": (int, 100, "stream-diag: number of random fields"),
    "stream.kmax": (int, 8, "stream-diag: band limit of the random fields"),
    "stream.z_max": (float, 10.0, "stream-diag: truncation height"),
    "stream.levels": (int, 2001, "stream-diag: number of uniform z levels"),
    "stream.export_z": (_floats, (), "stream-diag: heights at which slices of field 0 are written as SQGF"),
}


def default_config() -> dict:
    return {k: v[1] for k, v in CONFIG_SCHEMA.items()}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` text into a dict of typed values (defaults filled in)."""
    out = default_config()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigurationError(f"line {lineno}: duplicate config key {key!r}")
        seen.add(key)
        parser = CONFIG_SCHEMA[key][0]
        try:
            out[key] = parser(value)
        except ValueError as err:
            raise ConfigurationError(f"line {lineno}: bad value for {key!r}: {err}") from None
    if out["grid.ny"] is None:
        out["grid.ny"] = out["grid.nx"]
    if out["simulate.t_end"] is None:
        out["simulate.t_end"] = out["twin.t_spin"]
    if out["sweep.gammas"] is None:
        out["sweep.gammas"] = (out["params.gamma"],)
    return out


def load_config(path: str | Path) -> tuple[dict, str]:
    """Read a config file; returns (typed config, sha256 of the raw bytes)."""
    raw = Path(path).read_bytes()
    return parse_config_text(raw.decode("utf-8")), hashlib.sha256(raw).hexdigest()


# ------------------------------------------------------------------ CSV


def format_value(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Mapping | Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            vals = [row[c] for c in columns] if isinstance(row, Mapping) else list(row)
            w.writerow([format_value(v) for v in vals])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        r = list(csv.reader(fh))
    return r[0], r[1:]


def write_series_csv(path, times: np.ndarray, series: Mapping[str, np.ndarray], columns: Sequence[str]) -> Path:
    """Time series with a leading ``t`` column; ``columns`` excludes ``t``."""
    cols = ["t"] + list(columns)
    data = [times] + [series[c] for c in columns]
    return write_csv(path, cols, zip(*data))


# ------------------------------------------------------------- snapshots

MAGIC = b"SQGF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")


@dataclass(frozen=True)
class Snapshot:
    values: np.ndarray  # (ny, nx)
    time: float
    kappa: float
    gamma: float

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]


def write_snapshot(path: str | Path, values: np.ndarray, time: float, kappa: float, gamma: float) -> Path:
    values = np.asarray(values, dtype="<f8")
    if values.ndim != 2:
        raise InvalidInputError("snapshot values must be a 2-D (ny, nx) array")
    ny, nx = values.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, SNAPSHOT_VERSION, nx, ny, float(time), float(kappa), float(gamma)))
        fh.write(np.ascontiguousarray(values).tobytes())
    return path


def read_snapshot(path: str | Path) -> Snapshot:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated SQGF header")
    magic, version, nx, ny, time, kappa, gamma = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InvalidInputError(f"{path}: not an SQGF file (magic {magic!r})")
    if version != SNAPSHOT_VERSION:
        raise InvalidInputError(f"{path}: unsupported SQGF version {version}")
    expected = _HEADER.size + 8 * nx * ny
    if len(data) != expected:
        raise InvalidInputError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(ny, nx).astype(float)
    return Snapshot(values, time, kappa, gamma)


# -------------------------------------------------------------- manifest


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


@dataclass
class RunManifest:
    command: str
    config: dict
    config_hash: str
    seed: int
    out_dir: Path
    start_time: str = field(default_factory=_now)
    end_time: str | None = None
    files: list = field(default_factory=list)
    status: str = "running"
    failure: str | None = None
    version: str = ARTIFACT_VERSION
    name: str = "manifest.json"

    def add(self, path: str | Path) -> Path:
        p = Path(path)
        rel = p.name if p.parent == self.out_dir else str(p.relative_to(self.out_dir))
        if rel not in self.files:
            self.files.append(rel)
        return p

    def finish(self, failure: str | None = None) -> Path:
        self.end_time = _now()
        self.status = "failed" if failure else "ok"
        self.failure = failure
        self.add(self.out_dir / self.name)
        doc = {
            "version": self.version,
            "command": self.command,
            "config": {k: _jsonable(v) for k, v in self.config.items()},
            "config_hash": self.config_hash,
            "seed": self.seed,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "status": self.status,
            "failure": self.failure,
            "files": sorted(self.files),
        }
        path = self.out_dir / self.name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def read_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())

"""Data ingestion, configuration, and run manifests.

Gauge data arrive as CSV with named columns (station, date, lat, lon, prcp,
optional elev); the loader applies the trace threshold, builds the
occurrence/intensity tensors, and honours a station holdout split.  Configs
are INI-style key=value sections validated against a closed schema so a
misspelled key fails instead of silently defaulting.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .intensity import IntensityData
from .occurrence import OccurrenceData

REQUIRED_COLUMNS = ("station", "date", "lat", "lon", "prcp")


class GaugeFormatError(ValueError):
    """Malformed gauge CSV content, reported with a line number."""


@dataclass
class GaugeTable:
    """Dense (day, station) precipitation table in mm; NaN marks missing."""

    station_ids: list
    lat: np.ndarray
    lon: np.ndarray
    dates: list
    amounts: np.ndarray
    elevation: np.ndarray = None

    def __post_init__(self):
        self.amounts = np.asarray(self.amounts, dtype=float)
        if self.amounts.shape != (len(self.dates), len(self.station_ids)):
            raise ValueError("amounts must be (n_dates, n_stations)")
        observed = self.amounts[~np.isnan(self.amounts)]
        if np.any(observed < 0):
            raise ValueError("negative accumulations")

    @property
    def n_stations(self):
        return len(self.station_ids)

    @property
    def n_days(self):
        return len(self.dates)

    def subset_stations(self, keep_ids):
        idx = [self.station_ids.index(s) for s in keep_ids]
        return GaugeTable(list(keep_ids), self.lat[idx], self.lon[idx],
                          list(self.dates), self.amounts[:, idx],
                          None if self.elevation is None else self.elevation[idx])

    def subset_dates(self, keep_mask):
        keep_mask = np.asarray(keep_mask, dtype=bool)
        return GaugeTable(list(self.station_ids), self.lat, self.lon,
                          [d for d, k in zip(self.dates, keep_mask) if k],
                          self.amounts[keep_mask], self.elevation)


def _parse_float(text, line_no, column):
    if text is None or text.strip() in ("", "NA", "NaN", "nan"):
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise GaugeFormatError(f"line {line_no}: bad {column} value {text!r}") from None


def load_gauge_csv(path, date_range=None, months=None):
    """Parse a gauge CSV into a dense :class:`GaugeTable`.

    date_range : optional (start, end) ISO dates, inclusive
    months     : optional iterable of month numbers to keep (e.g. (4, 5, 6))

    Malformed rows raise :class:`GaugeFormatError` with their line number;
    duplicate (station, date) pairs are fatal.
    """
    months = set(months) if months else None
    lo = date.fromisoformat(date_range[0]) if date_range else None
    hi = date.fromisoformat(date_range[1]) if date_range else None
    records = {}
    coords = {}
    elevs = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise GaugeFormatError("empty file: no header row")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise GaugeFormatError(f"header missing columns: {missing}")
        for line_no, row in enumerate(reader, start=2):
            sid = (row.get("station") or "").strip()
            if not sid:
                raise GaugeFormatError(f"line {line_no}: empty station id")
            try:
                day = date.fromisoformat((row.get("date") or "").strip())
            except ValueError:
                raise GaugeFormatError(
                    f"line {line_no}: bad date {row.get('date')!r}") from None
            if lo and not (lo <= day <= hi):
                continue
            if months and day.month not in months:
                continue
            lat = _parse_float(row.get("lat"), line_no, "lat")
            lon = _parse_float(row.get("lon"), line_no, "lon")
            if np.isnan(lat) or np.isnan(lon):
                raise GaugeFormatError(f"line {line_no}: missing coordinates")
            prcp = _parse_float(row.get("prcp"), line_no, "prcp")
            if prcp < 0:
                raise GaugeFormatError(f"line {line_no}: negative accumulation {prcp}")
            key = (sid, day)
            if key in records:
                raise GaugeFormatError(
                    f"line {line_no}: duplicate (station, date) {key}")
            records[key] = prcp
            if sid in coords and coords[sid] != (lat, lon):
                raise GaugeFormatError(
                    f"line {line_no}: station {sid} moved coordinates")
            coords[sid] = (lat, lon)
            if "elev" in row and row["elev"] not in (None, ""):
                elevs[sid] = _parse_float(row["elev"], line_no, "elev")
    if not records:
        raise GaugeFormatError("no rows survived the date/month filters")
    station_ids = sorted(coords)
    days = sorted({d for _, d in records})
    amounts = np.full((len(days), len(station_ids)), np.nan)
    day_pos = {d: i for i, d in enumerate(days)}
    st_pos = {s: j for j, s in enumerate(station_ids)}
    for (sid, day), val in records.items():
        amounts[day_pos[day], st_pos[sid]] = val
    lat = np.array([coords[s][0] for s in station_ids])
    lon = np.array([coords[s][1] for s in station_ids])
    elevation = (np.array([elevs.get(s, np.nan) for s in station_ids])
                 if elevs else None)
    return GaugeTable(station_ids, lat, lon, [d.isoformat() for d in days],
                      amounts, elevation)


def save_gauge_csv(table: GaugeTable, path):
    """Write a gauge table back to CSV; floats use repr so reloads are exact."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["station", "date", "lat", "lon", "prcp"]
        if table.elevation is not None:
            header.append("elev")
        writer.writerow(header)
        for j, sid in enumerate(table.station_ids):
            for i, day in enumerate(table.dates):
                val = table.amounts[i, j]
                if np.isnan(val):
                    continue
                row = [sid, day, repr(float(table.lat[j])),
                       repr(float(table.lon[j])), repr(float(val))]
                if table.elevation is not None:
                    row.append(repr(float(table.elevation[j])))
                writer.writerow(row)


def build_tensors(table: GaugeTable, wet_threshold_mm=0.1):
    """Wet/dry indicators and transformed intensities from accumulations.

    An accumulation strictly above the trace threshold counts as wet; the
    intensity tensor keeps wet amounts only (dry and missing are masked).
    """
    amounts = table.amounts
    missing = np.isnan(amounts)
    wet = np.zeros(amounts.shape, dtype=bool)
    wet[~missing] = amounts[~missing] > wet_threshold_mm
    occurrence = OccurrenceData(wet.astype(np.int8), missing)
    intensity = IntensityData(np.where(wet, amounts, 0.0), wet)
    return occurrence, intensity


def split_holdout(table: GaugeTable, holdout_ids):
    """(fit table, holdout table); holdout ids must exist."""
    unknown = [s for s in holdout_ids if s not in table.station_ids]
    if unknown:
        raise ValueError(f"holdout stations not in the table: {unknown}")
    fit_ids = [s for s in table.station_ids if s not in set(holdout_ids)]
    if not fit_ids:
        raise ValueError("holdout split would leave no fit stations")
    return table.subset_stations(fit_ids), \
        (table.subset_stations(list(holdout_ids)) if holdout_ids else None)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "data": {"gauge_csv", "fieldstack", "train_start", "train_end",
             "test_start", "test_end", "months", "wet_threshold_mm",
             "holdout_stations"},
    "domain": {"knots_x", "knots_y", "bandwidth_km"},
    "analogue": {"components", "lags", "target_analogues", "independence"},
    "occurrence": {"iterations", "burnin", "thin", "latent_sweeps",
                   "a_gamma", "b_gamma", "a_beta", "b_beta",
                   "step_rho", "step_nu", "step_theta", "save_latent"},
    "intensity": {"iterations", "burnin", "thin", "n_classes",
                  "a_gamma", "b_gamma", "a_beta", "b_beta", "sigma2_alpha",
                  "dof_max", "scale_gamma_shape", "scale_gamma_scale",
                  "step_class", "step_alpha", "step_theta"},
    "predict": {"mode", "grid_spacing_km", "basins_x_splits"},
    "score": {"n_boot", "weight_scale_factor"},
    "simulate": {"stations", "train_days", "test_days", "signal_strength",
                 "n_classes", "grid_rows", "grid_cols", "components", "lags",
                 "target_analogues", "rho", "nu", "dof", "scale",
                 "sigma2_gamma", "sigma2_beta", "domain_km", "wet_threshold_mm"},
}


def parse_config(path, overrides=()):
    """Read an INI-style config; unknown sections or keys are fatal.

    ``overrides`` is an iterable of ("section.key", value) pairs applied
    after the file (the CLI flag mechanism).
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        cfg[section] = {}
        for key, val in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            cfg[section][key] = val
    for dotted, value in overrides:
        section, _, key = dotted.partition(".")
        if section not in CONFIG_SCHEMA or key not in CONFIG_SCHEMA[section]:
            raise ValueError(f"unknown override {dotted!r}")
        cfg.setdefault(section, {})[key] = str(value)
    return cfg


def cfg_get(cfg, section, key, default=None, cast=str):
    val = cfg.get(section, {}).get(key)
    if val is None:
        return default
    if cast is bool:
        return val.strip().lower() in ("1", "true", "yes", "on")
    return cast(val)


def cfg_ints(cfg, section, key, default=()):
    val = cfg.get(section, {}).get(key)
    if val is None or not val.strip():
        return tuple(default)
    return tuple(int(v) for v in val.split(","))


def cfg_strs(cfg, section, key, default=()):
    val = cfg.get(section, {}).get(key)
    if val is None or not val.strip():
        return tuple(default)
    return tuple(v.strip() for v in val.split(","))


def flatten_config(cfg):
    return sorted((f"{s}.{k}", v) for s, sec in cfg.items() for k, v in sec.items())


# ---------------------------------------------------------------------------
# run manifests
# ---------------------------------------------------------------------------

def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to regenerate a run: config, digests, seed, outputs."""

    command: str
    seed: int
    config: dict
    inputs: dict = field(default_factory=dict)    # path -> sha256
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)   # stage -> seconds
    code_version: str = ""

    def save(self, path):
        lines = [f"command = {self.command}", f"seed = {self.seed}",
                 f"code_version = {self.code_version}"]
        for key, val in flatten_config(self.config):
            lines.append(f"config.{key} = {val}")
        for p, digest in sorted(self.inputs.items()):
            lines.append(f"input.{p} = {digest}")
        for p in self.outputs:
            lines.append(f"output = {p}")
        for stage, secs in sorted(self.timings.items()):
            lines.append(f"seconds.{stage} = {secs:.3f}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        config = {}
        inputs = {}
        outputs = []
        timings = {}
        command = ""
        seed = 0
        version = ""
        with open(path) as fh:
            for line in fh:
                key, _, val = line.strip().partition(" = ")
                if key == "command":
                    command = val
                elif key == "seed":
                    seed = int(val)
                elif key == "code_version":
                    version = val
                elif key.startswith("config."):
                    section, _, name = key[len("config."):].partition(".")
                    config.setdefault(section, {})[name] = val
                elif key.startswith("input."):
                    inputs[key[len("input."):]] = val
                elif key == "output":
                    outputs.append(val)
                elif key.startswith("seconds."):
                    timings[key[len("seconds."):]] = float(val)
        return cls(command, seed, config, inputs, outputs, timings, version)

    def verify_inputs(self):
        """Check recorded digests against the files on disk."""
        stale = []
        for path, digest in self.inputs.items():
            try:
                if file_digest(path) != digest:
                    stale.append(path)
            except FileNotFoundError:
                stale.append(path)
        return stale

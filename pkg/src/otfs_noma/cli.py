"""``simulate``: run one outage sweep described by a YAML file.

Config grammar (every key optional; unknown keys are rejected)::

    grid:       {n_doppler: 16, n_delay: 16, subcarrier_spacing: 15000, carrier_frequency: 60.0e9}
    array:      {side: 8, spacing_ratio: 0.5}
    clusters:   {count: 3, users_per_cluster: random,   # or a list, entries int or "random"
                 radius: 10, distance: 100, sector_half_width_deg: 60,
                 min_separation_deg: 20, split: null}
    channel:    {paths: 4, max_delay_tap: 4, max_speed_kmh: 200,
                 elevation_mean: 0.785398, elevation_var: 0.314159,
                 azimuth_mean: 0.0, azimuth_var: 3.141593}
    power:      {transmit_snr: "30 dB", hm_fraction: 0.75, oma_time_fraction: 0.5}
    outage:     {rate_threshold: 0.5, report_all_clusters: false}
    simulation: {trials: 10000, seed: 0}
    sweep:      {axis: transmit_snr, values: [10, 20, 30, 40],
                 series: {axis: alpha, values: [0.5, 0.8]}}
    output:     {path: outage.csv, format: csv, baseline: false}

``transmit_snr`` takes ``"<x> dB"`` or a linear number. Sweep values of the
``transmit_snr`` axis are in dB. ``values`` also accepts ``"a..b"`` for an
integer range. With a ``series`` the ``axis`` column reads
``<axis>|<series axis>=<value>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .simulation import SCHEMES, SWEEP_AXES, ScenarioConfig, sweep, with_axis

log = logging.getLogger("otfs_noma")

WORKERS_ENV = "OTFS_NOMA_WORKERS"
CSV_HEADER = ("axis", "value", "scheme", "role", "outage", "ci_halfwidth", "trials", "seconds")
FORMATS = ("csv", "json")
ROLES = ("hm", "lm")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig
    axis: str
    values: tuple
    series_axis: str | None = None
    series_values: tuple = ()
    output: str = "outage.csv"
    format: str = "csv"
    baseline: bool = False

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError("output.format", f"must be one of {FORMATS}")
        if self.axis not in SWEEP_AXES:
            raise ConfigError("sweep.axis", f"must be one of {SWEEP_AXES}")
        if self.series_axis is not None:
            if self.series_axis not in SWEEP_AXES:
                raise ConfigError("sweep.series.axis", f"must be one of {SWEEP_AXES}")
            if self.series_axis == self.axis:
                raise ConfigError("sweep.series.axis", "must differ from sweep.axis")


@dataclass(frozen=True)
class ResultRow:
    axis: str
    value: float
    scheme: str
    role: str
    outage: float
    ci_halfwidth: float
    trials: int
    seconds: float


_SCHEMA = {
    "grid": {"n_doppler": "n_doppler", "n_delay": "n_delay",
             "subcarrier_spacing": "subcarrier_spacing", "carrier_frequency": "carrier_frequency"},
    "array": {"side": "array_side", "spacing_ratio": "spacing_ratio"},
    "clusters": {"count": "clusters", "users_per_cluster": "users_per_cluster",
                 "radius": "cluster_radius", "distance": "cluster_distance",
                 "sector_half_width_deg": "sector_half_width",
                 "min_separation_deg": "min_separation", "split": "cluster_split"},
    "channel": {"paths": "n_paths", "max_delay_tap": "max_delay_tap",
                "max_speed_kmh": "max_speed", "elevation_mean": "elevation_mean",
                "elevation_var": "elevation_var", "azimuth_mean": "azimuth_mean",
                "azimuth_var": "azimuth_var"},
    "power": {"transmit_snr": "transmit_snr_db", "transmit_snr_db": "transmit_snr_db",
              "hm_fraction": "hm_fraction", "oma_time_fraction": "oma_time_fraction"},
    "outage": {"rate_threshold": "rate_threshold", "report_all_clusters": "report_all_clusters"},
    "simulation": {"trials": "trials", "seed": "seed"},
}
_FIELD_OF = {target: f"{section}.{key}" for section, keys in _SCHEMA.items()
             for key, target in keys.items() if key != "transmit_snr_db"}
_OTHER_SECTIONS = {"sweep": {"axis", "values", "series"},
                   "output": {"path", "format", "baseline"}}

_DB = re.compile(r"^\s*([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)\s*dB\s*$")


def _snr_db(field: str, value) -> float:
    if isinstance(value, str):
        m = _DB.match(value)
        if not m:
            raise ConfigError(field, f"expected '<number> dB' or a linear number, got {value!r}")
        return float(m.group(1))
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
        raise ConfigError(field, "a linear SNR must be a positive number")
    return 10.0 * math.log10(value)


def _users(field: str, value):
    if value is None or value == "random":
        return None
    if not isinstance(value, list):
        raise ConfigError(field, "expected 'random' or a list of counts")
    out = []
    for v in value:
        if v == "random":
            out.append(None)
        elif isinstance(v, int) and not isinstance(v, bool):
            out.append(v)
        else:
            raise ConfigError(field, f"entries must be integers or 'random', got {v!r}")
    return tuple(out)


def _values(field: str, value) -> tuple:
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", value)
        if not m:
            raise ConfigError(field, f"expected a list or 'a..b', got {value!r}")
        lo, hi = int(m.group(1)), int(m.group(2))
        return tuple(range(lo, hi + 1))
    if not isinstance(value, list):
        raise ConfigError(field, "expected a list of values")
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(field, f"values must be numbers, got {v!r}")
    return tuple(value)


def _load_yaml(path: Path):
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError("<file>", f"parse error at {where}: {exc.problem}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be a mapping of sections")
    return data


def parse_config(path) -> ExperimentSpec:
    """Read, default and validate an experiment file."""
    data = _load_yaml(Path(path))
    known = set(_SCHEMA) | set(_OTHER_SECTIONS)
    for section, body in data.items():
        if section not in known:
            raise ConfigError(str(section), "unknown section")
        if body is None:
            data[section] = body = {}
        if not isinstance(body, dict):
            raise ConfigError(section, "section must be a mapping")
        allowed = _SCHEMA.get(section) or _OTHER_SECTIONS[section]
        for key in body:
            if key not in allowed:
                raise ConfigError(f"{section}.{key}", "unknown key")

    kwargs = {}
    for section, keys in _SCHEMA.items():
        for key, target in keys.items():
            if key not in data.get(section, {}):
                continue
            value = data[section][key]
            field = f"{section}.{key}"
            if key == "transmit_snr":
                value = _snr_db(field, value)
            elif key == "users_per_cluster":
                value = _users(field, value)
            elif key in ("sector_half_width_deg", "min_separation_deg"):
                value = math.radians(value)
            elif key == "max_speed_kmh":
                value = value / 3.6
            elif key == "split" and value is not None:
                value = tuple(value)
            kwargs[target] = value
    try:
        scenario = ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        name = str(exc).split(":", 1)[0]
        raise ConfigError(_FIELD_OF.get(name, "scenario"), str(exc)) from None

    sw = data.get("sweep", {})
    axis = sw.get("axis", "transmit_snr")
    values = _values("sweep.values", sw["values"]) if "values" in sw \
        else (scenario.transmit_snr_db,) if axis == "transmit_snr" else ()
    series_axis, series_values = None, ()
    if sw.get("series") is not None:
        series = sw["series"]
        if not isinstance(series, dict) or set(series) - {"axis", "values"} or "axis" not in series:
            raise ConfigError("sweep.series", "expected a mapping with 'axis' and 'values'")
        series_axis = series["axis"]
        series_values = _values("sweep.series.values", series.get("values", []))
    out = data.get("output", {})
    spec = ExperimentSpec(scenario, axis, values, series_axis, series_values,
                          str(out.get("path", "outage.csv")), out.get("format", "csv"),
                          bool(out.get("baseline", False)))
    _check_axis_values(spec)
    return spec


def _check_axis_values(spec: ExperimentSpec):
    pairs = [("sweep.values", spec.axis, spec.values)]
    if spec.series_axis:
        pairs.append(("sweep.series.values", spec.series_axis, spec.series_values))
    for field, axis, values in pairs:
        for v in values:
            try:
                with_axis(spec.scenario, axis, v)
            except ValueError as exc:
                raise ConfigError(field, f"{axis}={v}: {exc}") from None


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def collect_rows(spec: ExperimentSpec, workers: int = 1, timing: bool = False) -> list[ResultRow]:
    schemes = SCHEMES if spec.baseline else ("noma",)
    series = [(None, spec.scenario)] if spec.series_axis is None else \
        [(s, with_axis(spec.scenario, spec.series_axis, s)) for s in spec.series_values]
    rows = []
    for s_value, cfg in series:
        label = spec.axis if s_value is None else f"{spec.axis}|{spec.series_axis}={_fmt(s_value)}"
        start = time.perf_counter()
        points = sweep(cfg, spec.axis, spec.values, schemes, workers)
        elapsed = time.perf_counter() - start
        per_point = elapsed / max(len(points), 1) if timing else 0.0
        log.info("%s: %d points, %d trials each, %.1f s", label, len(spec.values), cfg.trials, elapsed)
        for p in points:
            for role in ROLES:
                outage, hw = p.stats.role(role)
                rows.append(ResultRow(label, p.value, p.scheme, role, outage, hw,
                                      p.stats.trials, per_point))
    return rows


def render(rows, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([r.axis, _fmt(r.value), r.scheme, r.role, _fmt(r.outage),
                             _fmt(r.ci_halfwidth), _fmt(r.trials), _fmt(r.seconds)])
        return buf.getvalue()
    records = []
    for r in rows:
        rec = {}
        for key in CSV_HEADER:
            v = getattr(r, key)
            if isinstance(v, float):
                v = float(_fmt(v)) if math.isfinite(v) else None
            rec[key] = v
        records.append(rec)
    return json.dumps(records, indent=2) + "\n"


def run_experiment(spec: ExperimentSpec, workers: int = 1, timing: bool = False) -> int:
    """Run the sweep (plus OMA when requested) and write the result file."""
    try:
        text = render(collect_rows(spec, workers, timing), spec.format)
        if spec.output == "-":
            sys.stdout.write(text)
        else:
            Path(spec.output).write_text(text)
    except Exception as exc:  # reported, never raised, at the CLI boundary
        log.error("experiment failed: %s", exc)
        return 1
    log.info("wrote %s", spec.output)
    return 0


def _default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise SystemExit(f"{WORKERS_ENV} must be an integer, got {env!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="simulate", description=__doc__.split("\n")[0])
    parser.add_argument("--config", required=True, help="YAML experiment file")
    parser.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default ${WORKERS_ENV} or 1)")
    parser.add_argument("--seed", type=int, default=None, help="override simulation.seed")
    parser.add_argument("--format", choices=FORMATS, default=None)
    parser.add_argument("--out", default=None, help="output path, '-' for stdout")
    parser.add_argument("--baseline", action="store_true", help="add OMA rows")
    parser.add_argument("--timing", action="store_true",
                        help="fill the seconds column (makes files non-reproducible)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)

    try:
        spec = parse_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2
    changes = {}
    if args.seed is not None:
        changes["scenario"] = replace(spec.scenario, seed=args.seed)
    if args.format is not None:
        changes["format"] = args.format
    if args.out is not None:
        changes["output"] = args.out
    if args.baseline:
        changes["baseline"] = True
    spec = replace(spec, **changes)
    workers = args.workers if args.workers is not None else _default_workers()
    if workers < 1:
        log.error("--workers must be at least 1")
        return 2
    return run_experiment(spec, workers, args.timing)


if __name__ == "__main__":
    sys.exit(main())

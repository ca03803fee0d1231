"""Build a sensor-type classification dataset from ASOS weather archives.

Consumes the per-station CSV download format of the Iowa Environmental
Mesonet ASOS archive: a ``station`` column, a ``valid`` timestamp column,
and per-variable observation columns with ``M`` for missing. Observations
are snapped to an hourly grid per station; each known variable column is cut
into non-overlapping fixed-length windows, one labelled sample per window.
Windows with more than half of their slots missing are dropped; remaining
missing slots stay NaN for downstream imputation.
"""

from __future__ import annotations

import csv
import warnings
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .data import Dataset

# archive column -> class label
VARIABLE_COLUMNS = {
    "tmpf": "Air Temperature",
    "dwpf": "Dew Point Temperature",
    "relh": "Relative Humidity",
    "drct": "Wind Direction",
    "alti": "Pressure Altimeter",
    "vsby": "Visibility",
    "gust": "Wind Gust",
    "feel": "Apparent Temperature",
}

_META_COLUMNS = {"station", "valid", "lon", "lat"}


def iem_download_url(station: str, start: datetime, end: datetime) -> str:
    """Archive request URL for one station, hourly, the 8 supported variables."""
    data = "&".join(f"data={col}" for col in VARIABLE_COLUMNS)
    return (
        "https://mesonet.agron.iastate.edu/cgi-bin/request/asos.py?"
        f"station={station}&{data}"
        f"&year1={start.year}&month1={start.month}&day1={start.day}"
        f"&year2={end.year}&month2={end.month}&day2={end.day}"
        "&tz=Etc/UTC&format=onlycomma&latlon=no&missing=M&trace=T&report_type=3"
    )


def _parse_time(text: str) -> datetime:
    text = text.strip()
    for fmt in ("%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    return datetime.fromisoformat(text)


def _parse_value(cell: str) -> float:
    cell = cell.strip()
    if cell in ("", "M", "None", "null", "NaN"):
        return np.nan
    try:
        return float(cell)
    except ValueError:
        return np.nan


def _read_station_file(path: Path, seen_unknown: set) -> dict:
    """Returns {station: {variable: {hour: value}}} for one file."""
    stations: dict = {}
    with open(path, newline="") as fh:
        rows = (r for r in fh if not r.startswith("#"))
        reader = csv.reader(rows)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            return stations
        if "station" not in header or "valid" not in header:
            raise ValueError(f"{path}: expected 'station' and 'valid' columns, got {header}")
        for col in header:
            if col not in _META_COLUMNS and col not in VARIABLE_COLUMNS:
                if col not in seen_unknown:
                    seen_unknown.add(col)
                    warnings.warn(f"iowa builder: ignoring unknown column '{col}'")
        idx = {col: header.index(col) for col in header}
        var_cols = [c for c in header if c in VARIABLE_COLUMNS]
        for row in reader:
            if not row or len(row) < len(header):
                continue
            station = row[idx["station"]].strip()
            when = _parse_time(row[idx["valid"]])
            hour = when.replace(minute=0, second=0, microsecond=0)
            per_station = stations.setdefault(station, {})
            for col in var_cols:
                slots = per_station.setdefault(col, {})
                if hour not in slots:  # first observation in the hour wins
                    v = _parse_value(row[idx[col]])
                    if not np.isnan(v):
                        slots[hour] = v
    return stations


def build_iowa_asos(raw, window: int = 168, min_coverage: float = 0.5) -> Dataset:
    """Windowed dataset from raw archive files (a directory or file list).

    ``min_coverage`` is the fraction of non-missing slots a window needs to
    be kept. Variables with no surviving windows anywhere are dropped from
    the class table with a warning.
    """
    raw = Path(raw) if isinstance(raw, (str, Path)) else raw
    if isinstance(raw, Path):
        if raw.is_dir():
            files = sorted(raw.glob("*.csv")) + sorted(raw.glob("*.txt"))
        else:
            files = [raw]
    else:
        files = [Path(p) for p in raw]
    if not files:
        raise ValueError(f"iowa builder: no raw files found under {raw}")

    seen_unknown: set = set()
    merged: dict = {}
    for path in files:
        for station, variables in _read_station_file(path, seen_unknown).items():
            target = merged.setdefault(station, {})
            for col, slots in variables.items():
                target.setdefault(col, {}).update(slots)

    windows_per_class: dict[str, list[np.ndarray]] = {v: [] for v in VARIABLE_COLUMNS.values()}
    dropped = 0
    for station in sorted(merged):
        for col in sorted(merged[station]):
            slots = merged[station][col]
            if not slots:
                continue
            start, end = min(slots), max(slots)
            n_hours = int((end - start).total_seconds() // 3600) + 1
            series = np.full(n_hours, np.nan)
            for hour, value in slots.items():
                series[int((hour - start).total_seconds() // 3600)] = value
            for w0 in range(0, n_hours - window + 1, window):
                chunk = series[w0:w0 + window]
                coverage = 1.0 - np.isnan(chunk).mean()
                if coverage >= min_coverage:
                    windows_per_class[VARIABLE_COLUMNS[col]].append(chunk.copy())
                else:
                    dropped += 1

    class_names = [name for name in VARIABLE_COLUMNS.values() if windows_per_class[name]]
    absent = [name for name in VARIABLE_COLUMNS.values() if not windows_per_class[name]]
    if absent:
        warnings.warn(f"iowa builder: no windows for {absent}; classes dropped")
    if not class_names:
        raise ValueError("iowa builder: no usable windows in any variable")

    rows, labels = [], []
    for label, name in enumerate(class_names):
        for chunk in windows_per_class[name]:
            rows.append(chunk)
            labels.append(label)
    provenance = {
        "source": "iowa-asos",
        "files": [str(p) for p in files],
        "window": window,
        "min_coverage": min_coverage,
        "dropped_windows": dropped,
    }
    return Dataset(np.stack(rows), np.array(labels), class_names, provenance)

"""Plain-text file formats shared by the command-line tools.

Every file starts with ``#`` header lines of the form ``# key = value``.
Readers return those headers as a dict alongside the data.

Profile CSV
    Columns drawn from ``position_um, coincidences, singles1, singles2,
    acq_s`` in that order; absent columns are omitted but the column header
    line is mandatory.
Tag file
    One event per line, ``channel<TAB>timestamp_ps``; the header must carry
    ``duration_s``.
Key-value report
    ``key = value`` lines after the header, used for correlation reports and
    fit results.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .model import CoincidenceProfile
from .timetags import TagStream

__all__ = [
    "PROFILE_COLUMNS",
    "FormatError",
    "write_profile_csv",
    "read_profile_csv",
    "write_tags",
    "read_tags",
    "write_key_values",
    "read_key_values",
    "write_histogram_csv",
]

PROFILE_COLUMNS = ("position_um", "coincidences", "singles1", "singles2", "acq_s")


class FormatError(ValueError):
    """A file does not follow the documented layout."""


def _header_text(header: Mapping[str, object]) -> str:
    return "".join(f"# {k} = {v}\n" for k, v in header.items())


def _split_header(text: str) -> Tuple[Dict[str, str], list]:
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    return header, body


def _fmt(value: float) -> str:
    return repr(float(value))


def write_profile_csv(path, profile: CoincidenceProfile, header: Mapping[str, object]) -> None:
    columns = ["position_um", "coincidences"]
    data = [profile.positions * 1e6, profile.coincidences]
    for name in ("singles1", "singles2"):
        values = getattr(profile, name)
        if values is not None:
            columns.append(name)
            data.append(values)
    if profile.acquisition_per_point is not None:
        columns.append("acq_s")
        data.append(np.full(len(profile), profile.acquisition_per_point))
    out = io.StringIO()
    out.write(_header_text(header))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in zip(*data):
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(out.getvalue())


def read_profile_csv(path) -> Tuple[CoincidenceProfile, Dict[str, str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    header, body = _split_header(text)
    if not body:
        raise FormatError(f"{path}: missing column header")
    rows = list(csv.reader(body))
    columns = [c.strip() for c in rows[0]]
    unknown = set(columns) - set(PROFILE_COLUMNS)
    if unknown or columns[:2] != ["position_um", "coincidences"]:
        raise FormatError(f"{path}: unexpected columns {columns}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if data.size == 0:
        raise FormatError(f"{path}: no data rows")
    if data.shape[1] != len(columns):
        raise FormatError(f"{path}: ragged rows")
    col = {name: data[:, i] for i, name in enumerate(columns)}
    acq = col.get("acq_s")
    try:
        profile = CoincidenceProfile(
            positions=col["position_um"] / 1e6,
            coincidences=col["coincidences"],
            singles1=col.get("singles1"),
            singles2=col.get("singles2"),
            acquisition_per_point=None if acq is None else float(acq[0]),
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return profile, header


def write_tags(path, stream: TagStream, header: Mapping[str, object]) -> None:
    merged = {**header, "channel": stream.channel, "duration_s": repr(stream.duration)}
    lines = [_header_text(merged)]
    prefix = f"{stream.channel}\t"
    lines.append("".join(f"{prefix}{t}\n" for t in stream.timestamps.tolist()))
    Path(path).write_text("".join(lines))


def read_tags(path) -> Tuple[TagStream, Dict[str, str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    header, body = _split_header(text)
    if "duration_s" not in header:
        raise FormatError(f"{path}: header lacks duration_s")
    try:
        duration = float(header["duration_s"])
        channel = int(header.get("channel", 0))
        pairs = [line.split("\t") for line in body]
        channels = {int(p[0]) for p in pairs}
        stamps = np.array([int(p[1]) for p in pairs], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if len(channels) > 1:
        raise FormatError(f"{path}: mixes channels {sorted(channels)}")
    if channels:
        channel = channels.pop()
    try:
        stream = TagStream(channel, stamps, duration)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return stream, header


def write_key_values(path, values: Mapping[str, object], header: Mapping[str, object]) -> None:
    body = "".join(f"{k} = {v}\n" for k, v in values.items())
    Path(path).write_text(_header_text(header) + body)


def read_key_values(path) -> Tuple[Dict[str, str], Dict[str, str]]:
    header, body = _split_header(Path(path).read_text())
    values = {}
    for line in body:
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}: expected 'key = value', got {line!r}")
        values[key.strip()] = value.strip()
    return values, header


def write_histogram_csv(path, lags, counts, g, header: Mapping[str, object],
                        g_err: Optional[np.ndarray] = None) -> None:
    out = io.StringIO()
    out.write(_header_text(header))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["lag_ns", "counts", "g2"] + (["g2_err"] if g_err is not None else []))
    for i in range(len(lags)):
        # lags sit on a picosecond grid; rounding hides the float tail
        row = [_fmt(round(lags[i] * 1e9, 6)), str(int(counts[i])), _fmt(g[i])]
        if g_err is not None:
            row.append(_fmt(g_err[i]))
        writer.writerow(row)
    Path(path).write_text(out.getvalue())

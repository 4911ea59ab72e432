"""CSV ingestion, serialization, gap reporting, and cross-feeder alignment.

File schema (bit-exact): header ``timestamp_us,v_mag,v_ang,i_mag,i_ang``,
timestamps in integer microseconds UTC, floats written with Python's
shortest exact ``repr`` so parse(serialize(stream)) round-trips bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError
from .phasors import DEFAULT_RATE, DEFAULT_RATED_POWER, PhasorSample, PhasorStream

CSV_HEADER = "timestamp_us,v_mag,v_ang,i_mag,i_ang"

#: half of one 120 Hz frame; beyond this two samples cannot be called
#: "the same instant" for signature inspection
DEFAULT_ALIGN_TOLERANCE_US = 4166

#: spacing above this many nominal frames is recorded as a gap
DEFAULT_GAP_FACTOR = 1.5


@dataclass(frozen=True)
class GapReport:
    """Missing-data report for one parsed stream.

    gaps: (start_us, end_us, missing_count) per gap, disjoint and ordered.
    dropped_rows: (line_number, reason) per rejected CSV row.
    """

    gaps: tuple[tuple[int, int, int], ...]
    dropped_rows: tuple[tuple[int, str], ...] = ()

    @property
    def n_missing(self) -> int:
        return sum(g[2] for g in self.gaps)

    @property
    def n_dropped(self) -> int:
        return len(self.dropped_rows)


@dataclass(frozen=True)
class AlignedPair:
    """Two samples from synchronized feeders matched to the same instant."""

    solar: PhasorSample
    auxiliary: PhasorSample
    skew_us: int

    def __post_init__(self):
        expected = abs(self.solar.timestamp - self.auxiliary.timestamp)
        if self.skew_us != expected:
            raise DomainError("skew_us must equal the timestamp difference")


def _read_text(source) -> str:
    if isinstance(source, bytes):
        raw = source
    elif isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            raw = fh.read()
    elif hasattr(source, "read"):
        raw = source.read()
        if isinstance(raw, str):
            return raw
    else:
        raise FormatError(f"unsupported source type {type(source).__name__}")
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"source is not UTF-8: {exc}") from None


def parse_stream(
    source,
    feeder_id: str,
    rated_power: float = DEFAULT_RATED_POWER,
    nominal_rate: float = DEFAULT_RATE,
    gap_factor: float = DEFAULT_GAP_FACTOR,
) -> tuple[PhasorStream, GapReport]:
    """Parse phasor CSV bytes/file/path into a stream plus a gap report.

    Malformed rows (wrong field count, non-numeric or non-finite fields,
    negative magnitudes, non-monotone timestamps) are dropped and counted
    with their line numbers; parsing continues. A missing or wrong header,
    or an empty source, raises FormatError.
    """
    text = _read_text(source)
    lines = text.splitlines()
    if not lines or not any(line.strip() for line in lines):
        raise FormatError("empty stream source")
    header = lines[0].strip().lstrip("﻿")
    if header != CSV_HEADER:
        raise FormatError(f"bad header {header!r}; expected {CSV_HEADER!r}")

    frame_us = 1e6 / nominal_rate
    samples: list[PhasorSample] = []
    gaps: list[tuple[int, int, int]] = []
    dropped: list[tuple[int, str]] = []
    last_ts: int | None = None

    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            dropped.append((line_no, f"expected 5 fields, got {len(parts)}"))
            continue
        try:
            ts = int(parts[0])
            fields = [float(p) for p in parts[1:]]
        except ValueError:
            dropped.append((line_no, "non-numeric field"))
            continue
        if last_ts is not None and ts <= last_ts:
            dropped.append((line_no, "non-monotone timestamp"))
            continue
        try:
            s = PhasorSample(ts, fields[0], fields[1], fields[2], fields[3])
        except DomainError as exc:
            dropped.append((line_no, str(exc)))
            continue
        if last_ts is not None:
            dt = ts - last_ts
            if dt > gap_factor * frame_us:
                missing = int(round(dt / frame_us)) - 1
                gaps.append((last_ts, ts, missing))
        samples.append(s)
        last_ts = ts

    stream = PhasorStream(feeder_id, tuple(samples), nominal_rate=nominal_rate, rated_power=rated_power)
    return stream, GapReport(tuple(gaps), tuple(dropped))


def _format_float(x: float) -> str:
    # repr is the shortest string that parses back to the same float
    return repr(float(x))


def serialize_stream(stream: PhasorStream, sink=None) -> bytes | None:
    """Write a stream in the CSV schema; returns bytes when sink is None.

    sink may be a path or a binary file-like object.
    """
    rows = [CSV_HEADER]
    for s in stream:
        rows.append(
            f"{s.timestamp},{_format_float(s.v_mag)},{_format_float(s.v_ang)},"
            f"{_format_float(s.i_mag)},{_format_float(s.i_ang)}"
        )
    data = ("\n".join(rows) + "\n").encode("utf-8")
    if sink is None:
        return data
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            fh.write(data)
        return None
    sink.write(data)
    return None


def align(
    a: PhasorStream,
    b: PhasorStream,
    tolerance_us: int = DEFAULT_ALIGN_TOLERANCE_US,
) -> tuple[AlignedPair, ...]:
    """Greedy nearest-timestamp matching of two synchronized streams.

    Each sample is used at most once; candidate pairs come from both
    streams' bracketing neighbors and are accepted in increasing-skew order
    (ties broken on timestamps), which makes the pairing symmetric in the
    argument order. Pairs with skew above tolerance_us are never formed.
    Disjoint time ranges yield an empty result.
    """
    if len(a) == 0 or len(b) == 0:
        raise DomainError("align requires non-empty streams")
    ta = a.timestamps
    tb = b.timestamps

    # every (i, j) with |ta[i] - tb[j]| <= tolerance is a candidate; the set
    # is symmetric in the inputs, so the greedy result is too
    candidates: list[tuple[int, int, int, int, int]] = []
    lo_idx = np.searchsorted(tb, ta - tolerance_us, side="left")
    hi_idx = np.searchsorted(tb, ta + tolerance_us, side="right")
    for i, t in enumerate(ta):
        for j in range(int(lo_idx[i]), int(hi_idx[i])):
            skew = abs(int(t) - int(tb[j]))
            lo, hi = sorted((int(t), int(tb[j])))
            candidates.append((skew, lo, hi, i, j))

    used_a: set[int] = set()
    used_b: set[int] = set()
    chosen: list[tuple[int, int, int]] = []
    for skew, _, _, ia, ib in sorted(candidates):
        if ia in used_a or ib in used_b:
            continue
        used_a.add(ia)
        used_b.add(ib)
        chosen.append((ia, ib, skew))

    chosen.sort(key=lambda r: a.samples[r[0]].timestamp)
    return tuple(AlignedPair(a.samples[ia], b.samples[ib], skew) for ia, ib, skew in chosen)

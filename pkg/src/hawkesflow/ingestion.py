"""Order-flow CSV ingestion and descriptive statistics.

Input schema (header required, comma separated, UTF-8)::

    date,time_centiseconds,side,size_shares,opposite_best_shares[,levels_consumed]

``time_centiseconds`` is the time of day in hundredths of a second, matching
the feed's 10 ms stamp resolution. Only aggressive orders (size strictly
greater than the opposite best quote) are modelled.
"""
from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .baseline import DEFAULT_SESSIONS, SessionWindow, format_hms
from .errors import InvalidParameters, MissingField
from .intensity import EventStream, Side

REQUIRED_COLUMNS = ("date", "time_centiseconds", "side", "size_shares", "opposite_best_shares")
OPTIONAL_COLUMNS = ("levels_consumed",)
SHARES_PER_LOT = 100
STAMP = 0.01  # seconds per feed tick
PENETRATION_LEVELS = 8  # last bin collects 8 and deeper


@dataclass(frozen=True)
class RawOrderRecord:
    date: str
    time_cs: int
    side: Side
    size: float
    opposite_best_size: Optional[float] = None
    levels_consumed: Optional[int] = None
    source: str = ""  # "file:line" for error messages

    @property
    def time_of_day(self) -> float:
        return self.time_cs / 100.0


def _parse_row(row: dict, where: str) -> RawOrderRecord:
    def required(name):
        value = row.get(name)
        if value is None or str(value).strip() == "":
            raise MissingField(f"{where}: missing value for {name!r}")
        return str(value).strip()

    try:
        size = float(required("size_shares"))
        opp_raw = (row.get("opposite_best_shares") or "").strip()
        lvl_raw = (row.get("levels_consumed") or "").strip()
        rec = RawOrderRecord(
            date=required("date"),
            time_cs=int(required("time_centiseconds")),
            side=Side.parse(required("side")),
            size=size,
            opposite_best_size=float(opp_raw) if opp_raw else None,
            levels_consumed=int(lvl_raw) if lvl_raw else None,
            source=where,
        )
    except MissingField:
        raise
    except (ValueError, InvalidParameters) as exc:
        raise InvalidParameters(f"{where}: {exc}") from None
    if not rec.size > 0:
        raise InvalidParameters(f"{where}: size_shares must be > 0")
    return rec


def read_records(path) -> Iterator[RawOrderRecord]:
    """Stream records from one CSV file, checking stamps never go backwards within a day."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MissingField(f"{path}: header lacks column(s) {', '.join(missing)}")
        last = None
        for lineno, row in enumerate(reader, start=2):
            rec = _parse_row(row, f"{path}:{lineno}")
            key = (rec.date, rec.time_cs)
            if last is not None and key < last:
                raise InvalidParameters(f"{path}:{lineno}: timestamps must be non-decreasing")
            last = key
            yield rec


def classify_aggressive(record: RawOrderRecord) -> bool:
    """True when the order is larger than the opposite best quote (strictly)."""
    if record.opposite_best_size is None:
        raise MissingField(f"{record.source or 'record'}: opposite_best_shares is required")
    return record.size > record.opposite_best_size


# ---------------------------------------------------------------------------
# sessions

@dataclass
class SessionEvents:
    date: str
    window: SessionWindow
    events: EventStream
    stamps_cs: np.ndarray = field(repr=False, default=None)  # raw stamps, before tie-breaking

    @property
    def key(self) -> str:
        return f"{self.date}_{self.window.name}"


def _window_cs(window: SessionWindow) -> tuple[int, int]:
    return int(round(window.open * 100)), int(round(window.close * 100))


def split_sessions(records: Iterable[RawOrderRecord],
                   windows=DEFAULT_SESSIONS) -> dict[tuple[str, str], SessionEvents]:
    """Group records by (date, session), rebase times and convert shares to lots.

    Records outside every window are dropped. Session bounds are closed on
    both ends. Output keeps file order, so equal stamps stay in input order.
    """
    windows = tuple(windows)
    for a in windows:
        for b in windows:
            if a is not b and a.open < b.close and b.open < a.close:
                raise InvalidParameters(f"session windows {a.name} and {b.name} overlap")
    bounds = [(w, *_window_cs(w)) for w in windows]
    buckets = defaultdict(lambda: ([], [], []))
    for rec in records:
        for w, lo, hi in bounds:
            if lo <= rec.time_cs <= hi:
                cs, sides, vols = buckets[(rec.date, w.name)]
                cs.append(rec.time_cs - lo)
                sides.append(int(rec.side))
                vols.append(rec.size / SHARES_PER_LOT)
                break
    by_name = {w.name: w for w in windows}
    out = {}
    for (date, name) in sorted(buckets):
        cs, sides, vols = buckets[(date, name)]
        cs = np.asarray(cs, dtype=np.int64)
        order = np.argsort(cs, kind="stable")
        cs = cs[order]
        stream = EventStream(cs / 100.0, np.asarray(sides)[order], np.asarray(vols)[order])
        out[(date, name)] = SessionEvents(date, by_name[name], stream, cs)
    return out


def _stamp_groups(times: np.ndarray):
    """Start index and size of each run of equal times."""
    if len(times) == 0:
        return np.array([], dtype=int), np.array([], dtype=int)
    starts = np.flatnonzero(np.concatenate([[True], times[1:] != times[:-1]]))
    sizes = np.diff(np.concatenate([starts, [len(times)]]))
    return starts, sizes


def break_ties(events: EventStream) -> EventStream:
    """Spread events sharing a stamp evenly inside its 10 ms tick.

    The i-th of m events on one stamp (i = 1..m, file order) moves by
    ``i * 10 ms / (m + 1)``; singletons are untouched.
    """
    times = events.times.copy()
    starts, sizes = _stamp_groups(times)
    for s, m in zip(starts, sizes):
        if m > 1:
            times[s: s + m] = times[s] + np.arange(1, m + 1) * (STAMP / (m + 1))
    return EventStream(times, events.sides, events.volumes)


def duplicate_fraction(times) -> float:
    """Share of events whose stamp is shared with at least one other event."""
    times = np.sort(np.asarray(times))
    if len(times) == 0:
        return 0.0
    _, sizes = _stamp_groups(times)
    return float(np.sum(sizes[sizes > 1])) / len(times)


def load_sessions(paths, windows=DEFAULT_SESSIONS) -> dict[tuple[str, str], SessionEvents]:
    """Read files, keep aggressive orders, split by session and break ties."""
    records = (rec for p in paths for rec in read_records(p) if classify_aggressive(rec))
    sessions = split_sessions(records, windows)
    for s in sessions.values():
        s.events = break_ties(s.events)
    return sessions


def discover_inputs(paths) -> list[Path]:
    """Expand directories into their ``*.csv`` files, sorted."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob("*.csv")))
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"input {p} does not exist")
    return out


# ---------------------------------------------------------------------------
# writing (used for simulated streams)

def to_feed_resolution(events: EventStream) -> EventStream:
    """Round a continuous-time stream the way the exchange feed would.

    Times are floored to the 10 ms grid and ties broken; volumes are rounded
    to whole shares (at least one). The result survives a CSV round trip
    unchanged.
    """
    cs = np.floor(events.times * 100.0 + 1e-6).astype(np.int64)
    shares = np.maximum(np.rint(events.volumes * SHARES_PER_LOT), 1.0)
    stream = EventStream(cs / 100.0, events.sides, shares / SHARES_PER_LOT)
    return break_ties(stream)


def write_session_csv(path, date: str, window: SessionWindow, events: EventStream) -> None:
    """Write one session in the input schema.

    Events are assumed to be at feed resolution (see :func:`to_feed_resolution`).
    The opposite best quote is set below the order size so every row is
    aggressive.
    """
    lo, _ = _window_cs(window)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(REQUIRED_COLUMNS) + list(OPTIONAL_COLUMNS))
        for t, side, v in zip(events.times, events.sides, events.volumes):
            shares = int(round(v * SHARES_PER_LOT))
            writer.writerow([date, lo + int(math.floor(t * 100.0 + 1e-6)),
                             Side(int(side)).label, shares, shares // 2, ""])


# ---------------------------------------------------------------------------
# descriptive statistics

@dataclass
class DescriptiveStats:
    median_volume: dict
    penetration: dict  # side -> proportions over levels 1..7, 8+ (None if column absent)
    per_minute: list  # rows of (window name, "HH:MM", mean buys, mean sells)
    duplicate_timestamp_fraction: float
    n_events: dict
    n_days: int

    def to_dict(self) -> dict:
        return {
            "median_volume_lots": {s.label: v for s, v in self.median_volume.items()},
            "penetration": {s.label: (None if p is None else [float(x) for x in p])
                            for s, p in self.penetration.items()},
            "duplicate_timestamp_fraction": self.duplicate_timestamp_fraction,
            "n_events": {s.label: n for s, n in self.n_events.items()},
            "n_days": self.n_days,
        }


def penetration_histogram(levels) -> np.ndarray:
    levels = np.asarray(list(levels), dtype=int)
    bins = np.clip(levels, 1, PENETRATION_LEVELS) - 1
    counts = np.bincount(bins, minlength=PENETRATION_LEVELS).astype(float)
    return counts / counts.sum()


def descriptive_stats(sessions: dict, records: Iterable[RawOrderRecord] = ()) -> DescriptiveStats:
    """Median marks, penetration table, per-minute averages and stamp duplication.

    ``sessions`` is the output of :func:`split_sessions` (before or after tie
    breaking: duplication is measured on the raw stamps); ``records`` are the
    aggressive records used for the penetration table.
    """
    if not sessions:
        raise InvalidParameters("no events to describe")
    vols = {s: [] for s in Side}
    stamps = []
    dates = sorted({d for d, _ in sessions})
    minute_counts = defaultdict(lambda: np.zeros(2))
    for (date, name), sess in sessions.items():
        ev = sess.events
        for s in Side:
            vols[s].append(ev.side_volumes(s))
        raw = sess.stamps_cs if sess.stamps_cs is not None else np.rint(ev.times * 100).astype(int)
        stamps.append(raw + _window_cs(sess.window)[0] + date_offset(date, dates))
        tod = sess.window.open + raw / 100.0
        for minute, side in zip((tod // 60).astype(int), ev.sides):
            minute_counts[(sess.window.open, name, minute)][side - 1] += 1
    med = {s: float(np.median(np.concatenate(vols[s]))) if sum(map(len, vols[s])) else float("nan")
           for s in Side}
    levels = {s: [] for s in Side}
    has_levels = {s: False for s in Side}
    for rec in records:
        if rec.levels_consumed is not None:
            levels[rec.side].append(rec.levels_consumed)
            has_levels[rec.side] = True
    pen = {s: penetration_histogram(levels[s]) if has_levels[s] else None for s in Side}
    rows = []
    for (open_, name, minute) in sorted(minute_counts):
        mean = minute_counts[(open_, name, minute)] / len(dates)
        rows.append((name, format_hms(minute * 60)[:5], float(mean[0]), float(mean[1])))
    allstamps = np.concatenate(stamps) if stamps else np.array([])
    return DescriptiveStats(
        median_volume=med, penetration=pen, per_minute=rows,
        duplicate_timestamp_fraction=duplicate_fraction(allstamps),
        n_events={s: int(sum(map(len, vols[s]))) for s in Side},
        n_days=len(dates))


def date_offset(date: str, dates: list) -> int:
    # keeps stamps of different days (and sessions) from colliding
    return dates.index(date) * 10_000_000


def aggressive_records(paths) -> list[RawOrderRecord]:
    return [rec for p in paths for rec in read_records(p) if classify_aggressive(rec)]

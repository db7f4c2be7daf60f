"""Joining series on heterogeneous calendars into one complete analysis frame.

News series run on all calendar days, market series on working days; rows with
any missing value are dropped rather than filled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import AlignmentError, InputError
from .series import IndexSeries

POLICIES = ("intersect", "market-calendar")


@dataclass(frozen=True)
class AlignedFrame:
    """Complete rectangular frame: shared dates, equal-length named columns."""

    dates: tuple[date, ...]
    columns: dict[str, np.ndarray]
    dropped: int = 0  # candidate rows removed for missing values

    def __post_init__(self):
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=np.float64)
            self.columns[name] = col
            if col.shape != (len(self.dates),):
                raise InputError(f"column {name!r} length != number of dates")
            if not np.all(np.isfinite(col)):
                raise InputError(f"column {name!r} contains non-finite values")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise InputError(f"no column {name!r}; have {self.names}")
        return self.columns[name]

    def to_series(self) -> list[IndexSeries]:
        return [
            IndexSeries(name, tuple(zip(self.dates, map(float, col))))
            for name, col in self.columns.items()
        ]

    def select(self, names: list[str]) -> "AlignedFrame":
        return AlignedFrame(self.dates, {n: self.column(n) for n in names}, self.dropped)


def align(series: list[IndexSeries], policy: str = "intersect") -> AlignedFrame:
    """Join series into a frame with no missing values.

    ``intersect`` keeps dates where every series has a value;
    ``market-calendar`` takes the first series' dates as the candidate
    calendar and keeps those covered by all the others. Either way the
    number of dropped candidate rows is recorded on the frame.
    """
    if len(series) < 2:
        raise InputError(f"alignment needs >= 2 series, got {len(series)}")
    names = [s.name for s in series]
    if len(set(names)) != len(names):
        raise InputError(f"duplicate series names: {names}")
    maps = [s.as_dict() for s in series]
    if policy == "intersect":
        candidates = sorted(set.union(*(set(m) for m in maps))) if maps else []
    elif policy == "market-calendar":
        candidates = sorted(maps[0])
    else:
        raise InputError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    kept = [d for d in candidates if all(d in m for m in maps)]
    if not kept:
        coverage = sorted(
            ((sum(1 for d in candidates if d in m), s.name) for s, m in zip(series, maps))
        )
        raise AlignmentError(
            "no jointly covered dates; binding constraint: "
            f"series {coverage[0][1]!r} covers {coverage[0][0]} of "
            f"{len(candidates)} candidate dates"
        )
    columns = {
        s.name: np.array([m[d] for d in kept], dtype=np.float64)
        for s, m in zip(series, maps)
    }
    return AlignedFrame(tuple(kept), columns, dropped=len(candidates) - len(kept))


def diff_log(values: np.ndarray) -> np.ndarray:
    """First differences of natural logs; length shrinks by one."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise InputError("diff_log needs at least 2 values")
    if np.any(values <= 0):
        bad = int(np.argmax(values <= 0))
        raise InputError(f"diff_log requires positive values; index {bad} is {values[bad]}")
    return np.diff(np.log(values))


def transform_columns(frame: AlignedFrame, transforms: dict[str, str]) -> AlignedFrame:
    """Apply per-column transforms (``level`` or ``diff_log``).

    Any log-difference shortens the frame by one row; every column drops its
    first row so dates stay aligned.
    """
    unknown = set(transforms) - set(frame.columns)
    if unknown:
        raise InputError(f"transforms reference unknown columns: {sorted(unknown)}")
    bad = {c: t for c, t in transforms.items() if t not in ("level", "diff_log")}
    if bad:
        raise InputError(f"unknown transforms: {bad}")
    if not any(t == "diff_log" for t in transforms.values()):
        return frame
    columns = {}
    for name, col in frame.columns.items():
        if transforms.get(name) == "diff_log":
            columns[name] = diff_log(col)
        else:
            columns[name] = col[1:]
    return AlignedFrame(frame.dates[1:], columns, frame.dropped)

"""Market data ingestion and the two volatility indicators.

Daily volatility is the intraday range over the two-day midpoint close;
historical volatility is the windowed root mean square of daily log returns,
without mean subtraction and without annualization.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError
from .series import IndexSeries


@dataclass(frozen=True)
class OhlcvBar:
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        if not (self.low <= min(self.open, self.close) <= max(self.open, self.close) <= self.high):
            raise InputError(
                f"{self.date}: OHLC ordering violated "
                f"(o={self.open} h={self.high} l={self.low} c={self.close})"
            )
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise InputError(f"{self.date}: prices must be positive")
        if self.volume < 0:
            raise InputError(f"{self.date}: negative volume")


@dataclass(frozen=True)
class OhlcvSeries:
    symbol: str
    bars: tuple[OhlcvBar, ...]

    def __post_init__(self):
        object.__setattr__(self, "bars", tuple(self.bars))
        for a, b in zip(self.bars, self.bars[1:]):
            if b.date <= a.date:
                raise InputError(f"{self.symbol}: dates not strictly increasing at {b.date}")

    def __len__(self) -> int:
        return len(self.bars)

    def closes(self) -> np.ndarray:
        return np.array([b.close for b in self.bars])

    def volume_series(self) -> IndexSeries:
        return IndexSeries(
            f"{self.symbol}_volume", tuple((b.date, b.volume) for b in self.bars)
        )


def load_ohlcv(path: str | Path, symbol: str | None = None) -> OhlcvSeries:
    """Load an OHLCV CSV (``date,open,high,low,close,volume``, ISO dates)."""
    path = Path(path)
    bars = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        if [h.strip().lower() for h in header] != ["date", "open", "high", "low", "close", "volume"]:
            raise ParseError(path, 1, f"unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 6:
                raise ParseError(path, line_no, f"expected 6 columns, got {len(row)}")
            try:
                d = date.fromisoformat(row[0].strip())
                o, h, lo, c, v = (float(x) for x in row[1:])
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
            try:
                bars.append(OhlcvBar(d, o, h, lo, c, v))
            except InputError as exc:
                raise ParseError(path, line_no, str(exc)) from None
    try:
        return OhlcvSeries(symbol or path.stem, tuple(bars))
    except InputError as exc:
        raise ParseError(path, 1, str(exc)) from None


def daily_volatility(series: OhlcvSeries) -> IndexSeries:
    """Range over midpoint close: ``(H_t - L_t) / (0.5 (C_t + C_{t-1}))``.

    The first date has no prior close and is emitted missing.
    """
    if len(series) < 2:
        raise InputError(f"{series.symbol}: need >= 2 bars, got {len(series)}")
    points: list[tuple[date, float | None]] = [(series.bars[0].date, None)]
    for prev, bar in zip(series.bars, series.bars[1:]):
        value = (bar.high - bar.low) / (0.5 * (bar.close + prev.close))
        points.append((bar.date, value))
    return IndexSeries(f"{series.symbol}_dvol", tuple(points))


def historical_volatility(series: OhlcvSeries, window: int = 21) -> IndexSeries:
    """Windowed RMS of close-to-close log returns (no mean subtraction).

    ``sqrt((1/window) * sum of squared log returns over the trailing window)``;
    the first ``window`` dates are missing.
    """
    if window < 2:
        raise InputError(f"window must be >= 2, got {window}")
    if len(series) < window + 1:
        raise InputError(
            f"{series.symbol}: need >= window+1 = {window + 1} bars, got {len(series)}"
        )
    closes = series.closes()
    log_ret_sq = np.diff(np.log(closes)) ** 2
    points: list[tuple[date, float | None]] = [
        (series.bars[t].date, None) for t in range(window)
    ]
    for t in range(window, len(series)):
        mean_sq = float(np.sum(log_ret_sq[t - window : t])) / window
        points.append((series.bars[t].date, math.sqrt(mean_sq)))
    return IndexSeries(f"{series.symbol}_hvol{window}", tuple(points))


def load_index_series(path: str | Path, name: str) -> IndexSeries:
    """Load a two-column ``date,value`` CSV; empty values become missing points."""
    path = Path(path)
    points: list[tuple[date, float | None]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        if [h.strip().lower() for h in header] != ["date", "value"]:
            raise ParseError(path, 1, f"unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ParseError(path, line_no, f"expected 2 columns, got {len(row)}")
            try:
                d = date.fromisoformat(row[0].strip())
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
            raw = row[1].strip()
            if not raw:
                points.append((d, None))
                continue
            try:
                points.append((d, float(raw)))
            except ValueError:
                raise ParseError(path, line_no, f"unparseable value {raw!r}") from None
    try:
        return IndexSeries(name, tuple(points))
    except InputError as exc:
        raise ParseError(path, 1, str(exc)) from None

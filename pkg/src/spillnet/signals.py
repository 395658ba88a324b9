"""Daily market signals: indicator transforms, news sentiment, labels, windows.

Raw bars become five return-style indicators per day (four price returns
and a turnover proxy), news word counts become a three-component sentiment
vector, and a shared trading calendar aligns everything. Day 0 of a series
carries no returns and is dropped from the indicator panel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DataError, WindowError

TURNOVER_WINDOW = 20  # trailing days in the volume-normalization mean

# Default split boundaries (inclusive last date of the train and valid spans).
DEFAULT_TRAIN_END = "2019-08-05"
DEFAULT_VALID_END = "2019-10-22"


@dataclass(frozen=True)
class RawDailyBar:
    date: str
    opening: float
    closing: float
    highest: float
    lowest: float
    volume: float

    def validate(self, stock: str = "?") -> None:
        lo, hi = min(self.opening, self.closing), max(self.opening, self.closing)
        if not (self.lowest <= lo <= hi <= self.highest):
            raise DataError(f"bar {stock}/{self.date}: high/low do not bracket open/close")
        if self.volume < 0:
            raise DataError(f"bar {stock}/{self.date}: negative volume")


@dataclass(frozen=True)
class SentimentCounts:
    date: str
    n_pos: int
    n_neg: int

    def validate(self, stock: str = "?") -> None:
        if self.n_pos < 0 or self.n_neg < 0:
            raise DataError(f"news {stock}/{self.date}: negative word count")


@dataclass
class TradingCalendar:
    """Strictly increasing shared dates with contiguous train/valid/test spans."""

    dates: list[str]
    train_end: str = DEFAULT_TRAIN_END
    valid_end: str = DEFAULT_VALID_END

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("calendar dates are not strictly increasing")
        if self.train_end >= self.valid_end:
            raise DataError("train span must end before the valid span")

    def split_of(self, day: int) -> str:
        date = self.dates[day]
        if date <= self.train_end:
            return "train"
        if date <= self.valid_end:
            return "valid"
        return "test"

    def days_in_split(self, split: str) -> list[int]:
        return [i for i in range(len(self.dates)) if self.split_of(i) == split]

    def __len__(self) -> int:
        return len(self.dates)


def label(bar: RawDailyBar) -> int:
    """1 for an up day (close strictly above open), else 0."""
    return 1 if bar.closing > bar.opening else 0


def compute_sentiment(counts: SentimentCounts) -> np.ndarray:
    """Positive share, negative share, and their divergence; all zero on a
    day without news."""
    total = counts.n_pos + counts.n_neg
    if total == 0:
        return np.zeros(3)
    return np.array([
        counts.n_pos / total,
        counts.n_neg / total,
        (counts.n_pos - counts.n_neg) / total,
    ])


def transform_indicators(bars: Sequence[RawDailyBar], stock: str = "?") -> np.ndarray:
    """Per-day indicator vectors for days 1..n-1 of a date-ordered series.

    Each price field becomes its one-day percentage change. Volume becomes
    a turnover proxy: the day's volume over its trailing-20-day mean volume
    (window includes the day itself and is partial near the series start).
    """
    if len(bars) < 2:
        raise ContractError(f"stock {stock}: need at least 2 bars, got {len(bars)}")
    for bar in bars:
        bar.validate(stock)
    fields = np.array([[b.opening, b.closing, b.highest, b.lowest] for b in bars])
    volume = np.array([b.volume for b in bars], dtype=float)
    prev = fields[:-1]
    if (prev <= 0).any():
        day = int(np.argwhere((prev <= 0).any(axis=1))[0][0])
        raise DataError(f"stock {stock}: non-positive price on {bars[day].date}")
    returns = (fields[1:] - prev) / prev

    turnover = np.empty(len(bars))
    for t in range(len(bars)):
        window = volume[max(0, t - TURNOVER_WINDOW + 1): t + 1]
        mean = window.mean()
        turnover[t] = volume[t] / mean if mean > 0 else 0.0

    return np.column_stack([returns, turnover[1:]])


def build_window(indicators: np.ndarray, sentiment: np.ndarray, t: int,
                 lookback: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """The ``lookback`` (indicator, sentiment) pairs for days t-T .. t-1,
    oldest first, for one stock.

    ``indicators`` rows cover days 1..n-1 of the calendar (row d-1 holds
    day d); ``sentiment`` rows cover all days. Day t itself is never read.
    """
    n_days = sentiment.shape[0]
    if t - lookback < 1 or t >= n_days:
        raise WindowError(
            f"day {t} needs days {t - lookback}..{t - 1} with indicators, "
            f"available days are 1..{n_days - 1}"
        )
    return [(indicators[d - 1], sentiment[d]) for d in range(t - lookback, t)]


def first_eligible_day(lookback: int) -> int:
    """Smallest day index with a full lookback window (indicators start day 1)."""
    return lookback + 1


@dataclass
class SignalPanel:
    """Aligned per-stock arrays over the shared calendar.

    indicators: (stocks, days, 5), row 0 is NaN (no previous day);
    sentiment: (stocks, days, 3); labels: (stocks, days);
    closes: (stocks, days); returns: close-to-close, NaN on day 0.
    """

    calendar: TradingCalendar
    stocks: list[str]
    indicators: np.ndarray
    sentiment: np.ndarray
    labels: np.ndarray
    closes: np.ndarray
    returns: np.ndarray

    @property
    def n_stocks(self) -> int:
        return len(self.stocks)

    @property
    def n_days(self) -> int:
        return len(self.calendar)

    def eligible_days(self, lookback: int, split: str | None = None) -> list[int]:
        start = first_eligible_day(lookback)
        days = [t for t in range(start, self.n_days)]
        if split is not None:
            days = [t for t in days if self.calendar.split_of(t) == split]
        return days


def build_panel(calendar: TradingCalendar, stocks: list[str],
                bars: dict[str, list[RawDailyBar]],
                news: dict[str, dict[str, SentimentCounts]]) -> SignalPanel:
    """Assemble the aligned panel; every stock must cover every calendar day."""
    n_days = len(calendar)
    n = len(stocks)
    indicators = np.full((n, n_days, 5), np.nan)
    sentiment = np.zeros((n, n_days, 3))
    labels = np.zeros((n, n_days), dtype=int)
    closes = np.zeros((n, n_days))
    returns = np.full((n, n_days), np.nan)

    for s, stock in enumerate(stocks):
        series = bars[stock]
        if [b.date for b in series] != calendar.dates:
            raise DataError(f"stock {stock}: bars do not cover the calendar exactly")
        indicators[s, 1:] = transform_indicators(series, stock)
        closes[s] = [b.closing for b in series]
        returns[s, 1:] = (closes[s, 1:] - closes[s, :-1]) / closes[s, :-1]
        labels[s] = [label(b) for b in series]
        for d, date in enumerate(calendar.dates):
            counts = news.get(stock, {}).get(date)
            if counts is not None:
                sentiment[s, d] = compute_sentiment(counts)
    return SignalPanel(calendar, list(stocks), indicators, sentiment, labels, closes, returns)

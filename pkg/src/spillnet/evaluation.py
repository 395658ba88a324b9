"""Classification metrics, trading metrics, and the top-k daily backtest.

All metric functions are pure and operate on plain arrays. The backtest
buys the k highest-scored stocks each day, holds one day at equal weight,
pays a proportional cost on the full position (complete turnover daily),
and compounds the remainder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, DataError, MetricUndefinedError

TRADING_DAYS_PER_YEAR = 252


def directional_accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Share of predictions whose thresholded direction matches the label.

    A score strictly above 0.5 predicts an up move; exactly 0.5 predicts
    down, so an uninformed constant scorer lands at the down-class rate.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.size == 0 or scores.shape != labels.shape:
        raise ContractError(f"need nonempty aligned inputs, got {scores.shape} and {labels.shape}")
    predicted = (scores > 0.5).astype(int)
    return float((predicted == labels).mean())


def _check_two_classes(labels: np.ndarray) -> None:
    if labels.min() == labels.max():
        raise MetricUndefinedError("metric undefined: only one class present")


def auc_pr(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the precision-recall curve by average-precision
    summation; tied scores enter as one threshold group."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.size == 0 or scores.shape != labels.shape:
        raise ContractError("need nonempty aligned inputs")
    _check_two_classes(labels)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    total_pos = int(sorted_labels.sum())
    area = 0.0
    seen = 0
    true_pos = 0
    prev_recall = 0.0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        seen += j - i
        true_pos += int(sorted_labels[i:j].sum())
        recall = true_pos / total_pos
        precision = true_pos / seen
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return float(area)


def auc_roc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC area via the midrank formulation (ties count one half), which
    equals trapezoidal integration of the tie-grouped ROC curve."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.size == 0 or scores.shape != labels.shape:
        raise ContractError("need nonempty aligned inputs")
    _check_two_classes(labels)
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0  # midrank, 1-based
        i = j
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def daily_irr(prices_now: np.ndarray, prices_prev: np.ndarray,
              selected: Sequence[int]) -> tuple[float, float]:
    """One day's investment return over a held set.

    Returns the plain sum of the constituents' returns (the headline
    definition) and the equal-weight mean used for portfolio accounting.
    """
    prices_now = np.asarray(prices_now, dtype=float)
    prices_prev = np.asarray(prices_prev, dtype=float)
    if (prices_prev <= 0).any() or (prices_now <= 0).any():
        raise DataError("prices must be positive")
    idx = list(selected)
    if not idx:
        raise ContractError("selected set is empty")
    rets = (prices_now[idx] - prices_prev[idx]) / prices_prev[idx]
    return float(rets.sum()), float(rets.mean())


@dataclass
class BacktestConfig:
    top_k: int = 15
    budget: float = 10000.0
    cost_rate: float = 0.0003
    risk_free_annual: float = 0.015

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.cost_rate < 0 or self.risk_free_annual < 0:
            raise ConfigError("rates must be non-negative")
        if self.budget <= 0:
            raise ConfigError("budget must be positive")


def sharpe(daily_returns: np.ndarray, config: BacktestConfig | None = None) -> float:
    """Annualized ratio of mean to sample deviation of daily excess
    returns, with the annual risk-free rate spread over 252 trading days."""
    config = config or BacktestConfig()
    returns = np.asarray(daily_returns, dtype=float)
    if returns.size < 2:
        raise ContractError(f"need at least 2 daily returns, got {returns.size}")
    excess = returns - config.risk_free_annual / TRADING_DAYS_PER_YEAR
    std = excess.std(ddof=1)
    if std == 0:
        raise MetricUndefinedError("sharpe undefined: zero variance of excess returns")
    return float(excess.mean() / std * np.sqrt(TRADING_DAYS_PER_YEAR))


@dataclass
class BacktestReport:
    """Daily selections, return series, compounded value curve, and summary
    metrics. The curve has one entry per test day; capital starts at the
    configured budget before the first entry."""

    dates: list[str]
    selections: list[list[str]]
    gross_returns: np.ndarray      # equal-weight mean constituent return
    net_returns: np.ndarray        # after the multiplicative cost
    raw_irr: np.ndarray            # per-day sum of constituent returns
    value_curve: np.ndarray
    budget: float
    top_k: int
    irr: float                     # compounded: final value / budget - 1
    raw_irr_total: float           # additive sum of the raw daily metric
    sharpe: float | None
    da: float
    pr_auc: float | None
    roc_auc: float | None


def backtest(predictions, panel, config: BacktestConfig | None = None) -> BacktestReport:
    """Run the daily top-k strategy over the test split.

    ``predictions`` are per-stock-per-day with ``score``/``label``/``date``
    (as produced by the model); each day's selection ranks scores with ties
    broken by ascending stock index. Day-t positions earn the close-to-
    close return into day t; the whole position pays the cost rate.
    """
    config = config or BacktestConfig()
    if config.top_k > panel.n_stocks:
        raise ConfigError(f"top_k {config.top_k} exceeds {panel.n_stocks} stocks")

    by_date: dict[str, dict[str, float]] = {}
    for pred in predictions:
        by_date.setdefault(pred.date, {})[pred.stock] = pred.score
    date_to_day = {d: i for i, d in enumerate(panel.calendar.dates)}
    test_days = [t for t in range(len(panel.calendar.dates))
                 if panel.calendar.split_of(t) == "test"]
    covered = [t for t in test_days if panel.calendar.dates[t] in by_date]
    if covered != test_days:
        missing = [panel.calendar.dates[t] for t in test_days if t not in covered]
        raise ContractError(f"predictions missing for test days: {missing[:3]}")

    stock_index = {stock: i for i, stock in enumerate(panel.stocks)}
    dates, selections = [], []
    gross, net, raw = [], [], []
    value = config.budget
    curve = []
    for t in test_days:
        date = panel.calendar.dates[t]
        scores = by_date[date]
        if len(scores) < config.top_k:
            raise ContractError(f"day {date} has {len(scores)} scores, need {config.top_k}")
        ranked = sorted(scores, key=lambda stock: (-scores[stock], stock_index[stock]))
        chosen = ranked[:config.top_k]
        idx = [stock_index[stock] for stock in chosen]
        raw_sum, mean_ret = daily_irr(panel.closes[:, t], panel.closes[:, t - 1], idx)
        net_ret = (1.0 + mean_ret) * (1.0 - config.cost_rate) - 1.0
        value = value * (1.0 + net_ret)
        dates.append(date)
        selections.append(chosen)
        gross.append(mean_ret)
        net.append(net_ret)
        raw.append(raw_sum)
        curve.append(value)

    all_scores = np.array([by_date[d][stock] for d in dates for stock in panel.stocks])
    all_labels = np.array([panel.labels[stock_index[stock], date_to_day[d]]
                           for d in dates for stock in panel.stocks])
    net_arr = np.array(net)
    try:
        sr = sharpe(net_arr, config)
    except (MetricUndefinedError, ContractError):
        sr = None
    def _safe(metric):
        try:
            return metric(all_scores, all_labels)
        except MetricUndefinedError:
            return None
    return BacktestReport(
        dates=dates,
        selections=selections,
        gross_returns=np.array(gross),
        net_returns=net_arr,
        raw_irr=np.array(raw),
        value_curve=np.array(curve),
        budget=config.budget,
        top_k=config.top_k,
        irr=float(value / config.budget - 1.0),
        raw_irr_total=float(np.sum(raw)),
        sharpe=sr,
        da=directional_accuracy(all_scores, all_labels),
        pr_auc=_safe(auc_pr),
        roc_auc=_safe(auc_roc),
    )

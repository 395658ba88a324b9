"""Dataset files, validation, configuration, and the synthetic generator.

A dataset directory holds four required comma-separated tables, each with
a version header line, plus an optional split file:

    entities.csv   id, kind, name
    edges.csv      kind, src, dst
    prices.csv     stock, date, open, close, high, low, volume
    news.csv       stock, date, n_pos, n_neg
    splits.cfg     train_end=..., valid_end=...   (optional)

Without ``splits.cfg`` the split boundaries default to the reference
benchmark periods. Stocks without complete price coverage over the
calendar are excluded at load time, never silently: every exclusion is
recorded with its reason.

The synthetic generator plants a momentum spillover signal: each stock's
next-day direction is driven by yesterday's returns of its explicit
neighbors (supply chain, partnership, investment), of its executive-
mediated neighbors, and of a small set of high-volatility, news-heavy
"bellwether" stocks that appear in no relation table. Sequence-only
models see none of these channels; relational models see the first two in
the graph and can reach the third through inferred implicit edges.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import graph as mg
from .errors import ConfigError, DataError
from .model import TrainConfig
from .signals import (DEFAULT_TRAIN_END, DEFAULT_VALID_END, RawDailyBar,
                      SentimentCounts, SignalPanel, TradingCalendar, build_panel)

FORMAT_VERSION = 1

REQUIRED_FILES = ("entities.csv", "edges.csv", "prices.csv", "news.csv")
SPLITS_FILE = "splits.cfg"

_TABLE_COLUMNS = {
    "entities": ["id", "kind", "name"],
    "edges": ["kind", "src", "dst"],
    "prices": ["stock", "date", "open", "close", "high", "low", "volume"],
    "news": ["stock", "date", "n_pos", "n_neg"],
}

_LOADABLE_KINDS = {
    kind.value: kind
    for kind in (mg.EXPLICIT_RELATIONS + mg.EXECUTIVE_RELATIONS + mg.INTER_CLASS_RELATIONS)
}


def _header_line(table: str) -> str:
    return f"#format: spillnet/{table}/v{FORMAT_VERSION}"


def _write_table(path: Path, table: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_header_line(table) + "\n")
        writer = csv.writer(fh)
        writer.writerow(_TABLE_COLUMNS[table])
        writer.writerows(rows)


def _read_table(path: Path, table: str) -> list[tuple[int, list[str]]]:
    """Rows with their 1-based file line numbers; validates version header
    and column header."""
    if not path.exists():
        raise DataError(f"missing dataset file {path.name}")
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != _header_line(table):
            raise DataError(f"{path.name}:1: expected header {_header_line(table)!r}, got {first!r}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _TABLE_COLUMNS[table]:
            raise DataError(f"{path.name}:2: expected columns {_TABLE_COLUMNS[table]}, got {header}")
        out = []
        for line_no, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != len(_TABLE_COLUMNS[table]):
                raise DataError(f"{path.name}:{line_no}: expected {len(_TABLE_COLUMNS[table])} fields")
            out.append((line_no, row))
    return out


@dataclass
class DatasetBundle:
    """Validated tables plus the derived graph and aligned signal panel."""

    companies: list[str]
    executives: list[str]
    names: dict[str, str]
    edges: list[tuple[str, str, str]]            # (kind, src, dst) by id
    bars: dict[str, list[RawDailyBar]]
    news: dict[str, dict[str, SentimentCounts]]
    calendar: TradingCalendar
    exclusions: list[str] = field(default_factory=list)
    _graph: mg.MarketGraph | None = field(default=None, repr=False)
    _panel: SignalPanel | None = field(default=None, repr=False)

    def graph(self) -> mg.MarketGraph:
        if self._graph is None:
            company_idx = {cid: i for i, cid in enumerate(self.companies)}
            executive_idx = {eid: i for i, eid in enumerate(self.executives)}
            typed = []
            for kind_name, src, dst in self.edges:
                kind = _LOADABLE_KINDS[kind_name]
                typed.append((kind, self._entity(src, company_idx, executive_idx),
                              self._entity(dst, company_idx, executive_idx)))
            self._graph = mg.derive_meta_relations(
                mg.build_graph(len(self.companies), len(self.executives), typed))
        return self._graph

    @staticmethod
    def _entity(eid: str, company_idx, executive_idx) -> mg.EntityId:
        if eid in company_idx:
            return mg.EntityId(mg.EntityKind.COMPANY, company_idx[eid])
        return mg.EntityId(mg.EntityKind.EXECUTIVE, executive_idx[eid])

    def panel(self) -> SignalPanel:
        if self._panel is None:
            self._panel = build_panel(self.calendar, self.companies, self.bars, self.news)
        return self._panel


def load_splits(path: Path) -> tuple[str, str]:
    train_end, valid_end = DEFAULT_TRAIN_END, DEFAULT_VALID_END
    if path.exists():
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path.name}:{line_no}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "train_end":
                train_end = value
            elif key == "valid_end":
                valid_end = value
            else:
                raise DataError(f"{path.name}:{line_no}: unknown split key {key!r}; "
                                "valid keys: train_end, valid_end")
    return train_end, valid_end


def load_dataset(directory) -> DatasetBundle:
    """Read, validate, and assemble a dataset directory.

    Referential breakage, malformed rows, duplicate keys, and bad bars are
    hard errors naming the offending row. Stocks with incomplete price
    coverage are excluded (with their edges and news) and each exclusion is
    recorded in ``bundle.exclusions``.
    """
    directory = Path(directory)
    for name in REQUIRED_FILES:
        if not (directory / name).exists():
            raise DataError(f"missing dataset file {name} in {directory}")

    companies: list[str] = []
    executives: list[str] = []
    names: dict[str, str] = {}
    for line_no, (eid, kind, name) in _read_table(directory / "entities.csv", "entities"):
        if eid in names:
            raise DataError(f"entities.csv:{line_no}: duplicate entity id {eid!r}")
        if kind == "company":
            companies.append(eid)
        elif kind == "executive":
            executives.append(eid)
        else:
            raise DataError(f"entities.csv:{line_no}: unknown kind {kind!r}")
        names[eid] = name

    company_set = set(companies)
    raw_prices: dict[str, dict[str, RawDailyBar]] = {}
    all_dates: set[str] = set()
    for line_no, row in _read_table(directory / "prices.csv", "prices"):
        stock, date, *rest = row
        if stock not in company_set:
            raise DataError(f"prices.csv:{line_no}: undeclared stock {stock!r}")
        try:
            o, c, h, l, v = (float(x) for x in rest)
        except ValueError:
            raise DataError(f"prices.csv:{line_no}: non-numeric price fields") from None
        bar = RawDailyBar(date, o, c, h, l, v)
        bar.validate(stock)
        per_stock = raw_prices.setdefault(stock, {})
        if date in per_stock:
            raise DataError(f"prices.csv:{line_no}: duplicate bar for {stock} on {date}")
        per_stock[date] = bar
        all_dates.add(date)

    if not all_dates:
        raise DataError("prices.csv: no price rows")
    dates = sorted(all_dates)

    exclusions: list[str] = []
    kept_companies = []
    for cid in companies:
        have = raw_prices.get(cid, {})
        missing = [d for d in dates if d not in have]
        if missing:
            exclusions.append(
                f"stock {cid} excluded: missing bars for {len(missing)} of {len(dates)} days "
                f"(first: {missing[0]})")
        else:
            kept_companies.append(cid)
    if not kept_companies:
        raise DataError("no stock has complete price coverage over the calendar")
    kept_set = set(kept_companies)

    news: dict[str, dict[str, SentimentCounts]] = {cid: {} for cid in kept_companies}
    for line_no, (stock, date, pos, neg) in _read_table(directory / "news.csv", "news"):
        if stock not in names:
            raise DataError(f"news.csv:{line_no}: undeclared stock {stock!r}")
        if stock not in kept_set:
            exclusions.append(f"news.csv:{line_no} dropped: stock {stock} excluded")
            continue
        if date not in all_dates:
            raise DataError(f"news.csv:{line_no}: date {date} is not a trading day")
        try:
            counts = SentimentCounts(date, int(pos), int(neg))
        except ValueError:
            raise DataError(f"news.csv:{line_no}: non-integer counts") from None
        counts.validate(stock)
        if date in news[stock]:
            raise DataError(f"news.csv:{line_no}: duplicate news row for {stock} on {date}")
        news[stock][date] = counts

    executive_set = set(executives)
    edges: list[tuple[str, str, str]] = []
    for line_no, (kind, src, dst) in _read_table(directory / "edges.csv", "edges"):
        if kind not in _LOADABLE_KINDS:
            raise DataError(f"edges.csv:{line_no}: unknown or derived relation kind {kind!r}")
        for endpoint in (src, dst):
            if endpoint not in names:
                raise DataError(f"edges.csv:{line_no}: undeclared entity {endpoint!r}")
        dropped = [e for e in (src, dst) if e in company_set and e not in kept_set]
        if dropped:
            exclusions.append(f"edges.csv:{line_no} dropped: endpoint {dropped[0]} excluded")
            continue
        edges.append((kind, src, dst))

    train_end, valid_end = load_splits(directory / SPLITS_FILE)
    calendar = TradingCalendar(dates, train_end=train_end, valid_end=valid_end)
    bundle = DatasetBundle(
        companies=kept_companies,
        executives=executives,
        names=names,
        edges=edges,
        bars={cid: [raw_prices[cid][d] for d in dates] for cid in kept_companies},
        news=news,
        calendar=calendar,
        exclusions=exclusions,
    )
    graph = bundle.graph()  # validates edge structure eagerly
    covered = set()
    for kind in mg.INTER_CLASS_RELATIONS:
        for _, executive in graph.edges[kind]:
            covered.add(executive)
    for idx, eid in enumerate(executives):
        if idx not in covered:
            raise DataError(f"executive {eid} has no company link after validation")
    return bundle


def save_dataset(bundle: DatasetBundle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entity_rows = [(eid, "company", bundle.names.get(eid, eid)) for eid in bundle.companies]
    entity_rows += [(eid, "executive", bundle.names.get(eid, eid)) for eid in bundle.executives]
    _write_table(directory / "entities.csv", "entities", entity_rows)
    _write_table(directory / "edges.csv", "edges", bundle.edges)
    price_rows = [
        (cid, bar.date, repr(bar.opening), repr(bar.closing), repr(bar.highest),
         repr(bar.lowest), repr(bar.volume))
        for cid in bundle.companies for bar in bundle.bars[cid]
    ]
    _write_table(directory / "prices.csv", "prices", price_rows)
    news_rows = [
        (cid, date, counts.n_pos, counts.n_neg)
        for cid in bundle.companies
        for date, counts in sorted(bundle.news.get(cid, {}).items())
    ]
    _write_table(directory / "news.csv", "news", news_rows)
    with open(directory / SPLITS_FILE, "w", encoding="utf-8") as fh:
        fh.write(f"train_end={bundle.calendar.train_end}\n")
        fh.write(f"valid_end={bundle.calendar.valid_end}\n")


# ---------------------------------------------------------------------------
# training configuration files
# ---------------------------------------------------------------------------

_CONFIG_FIELDS = {f.name: f.type for f in dc_fields(TrainConfig)}
_BOOL_WORDS = {"true": True, "false": False, "on": True, "off": False, "1": True, "0": False}


def load_config(path=None) -> TrainConfig:
    """key=value configuration with '#' comments; every key optional and
    defaulting to the benchmark settings. Unknown keys are errors."""
    overrides = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {line_no}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_FIELDS:
                raise ConfigError(
                    f"config line {line_no}: unknown key {key!r}; valid keys: "
                    + ", ".join(sorted(_CONFIG_FIELDS)))
            overrides[key] = _parse_config_value(key, value, line_no)
    return TrainConfig(**overrides)


def _parse_config_value(key: str, value: str, line_no: int):
    kind = _CONFIG_FIELDS[key]
    try:
        if kind in ("bool", bool):
            if value.lower() not in _BOOL_WORDS:
                raise ValueError(value)
            return _BOOL_WORDS[value.lower()]
        if kind in ("int", int):
            return int(value)
        if kind in ("float", float):
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"config line {line_no}: bad value {value!r} for {key}") from None


def save_config(config: TrainConfig, path) -> None:
    import dataclasses
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in dataclasses.asdict(config).items():
            fh.write(f"{key}={str(value).lower() if isinstance(value, bool) else value}\n")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Sizes, per-kind edge counts, and the planted-signal controls.

    ``spillover`` scales the planted log-odds; ``noise`` is the softness of
    the label draw (0 means deterministic signs). Defaults mirror the scale
    of the smaller reference dataset.
    """

    companies: int = 73
    executives: int = 163
    investment_edges: int = 7
    industry_edges: int = 272
    supply_edges: int = 27
    partnership_edges: int = 98
    classmate_edges: int = 338
    colleague_edges: int = 953
    management_edges: int = 166
    exec_investment_edges: int = 1
    spillover: float = 0.9
    noise: float = 1.0
    seed: int = 7
    n_days: int = 180
    bellwethers: int = 8
    train_fraction: float = 0.70
    valid_fraction: float = 0.15
    start_date: str = "2017-11-21"

    def validate(self) -> None:
        if self.companies < 2 or self.executives < 0:
            raise ConfigError("need at least 2 companies and non-negative executives")
        if not 0.0 <= self.spillover <= 1.0:
            raise ConfigError(f"spillover must lie in [0, 1], got {self.spillover}")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if self.n_days < 10:
            raise ConfigError("need at least 10 days")
        if not 0 <= self.bellwethers <= self.companies:
            raise ConfigError("bellwethers must not exceed company count")
        if self.executives > 0 and self.management_edges < self.executives:
            raise ConfigError("management edges must cover every executive")
        if not 0 < self.train_fraction < 1 or not 0 < self.valid_fraction < 1 \
                or self.train_fraction + self.valid_fraction >= 1:
            raise ConfigError("train/valid fractions must leave room for a test span")
        linkable = self.companies - self.bellwethers  # bellwethers stay out of relation tables
        if linkable < 2 and any(getattr(self, k) for k in
                                ("investment_edges", "industry_edges", "supply_edges",
                                 "partnership_edges")):
            raise ConfigError("company edges need at least 2 non-bellwether companies")
        pair_limits = {
            "investment_edges": linkable * (linkable - 1) // 2,
            "industry_edges": linkable * (linkable - 1) // 2,
            "supply_edges": linkable * (linkable - 1) // 2,
            "partnership_edges": linkable * (linkable - 1) // 2,
            "classmate_edges": self.executives * (self.executives - 1) // 2,
            "colleague_edges": self.executives * (self.executives - 1) // 2,
            "management_edges": linkable * self.executives,
            "exec_investment_edges": linkable * self.executives,
        }
        for name, limit in pair_limits.items():
            count = getattr(self, name)
            if count < 0 or count > limit:
                raise ConfigError(f"{name}={count} infeasible (limit {limit})")


# planted-signal shape: channel weights over explicit, executive-mediated,
# and bellwether neighbors, plus the logistic sharpness. Channels read
# market-demeaned returns (no trend cascade) standardized by neighbor count.
_CHANNEL_EXPLICIT = 1.0 / 3.0
_CHANNEL_EXECUTIVE = 1.0 / 3.0
_CHANNEL_BELLWETHER = 1.0 / 3.0
_SIGNAL_SHARPNESS = 4.6
_BASE_INTRADAY_VOL = 0.02
_BELLWETHER_VOL_MULT = 2.5
_OVERNIGHT_GAP_VOL = 0.002
_RETURN_UNIT = 0.02          # typical daily return magnitude
_NEWS_RATE = 2.0
_NEWS_RETURN_COUPLING = 40.0
_NO_NEWS_PROB = 0.5
_BELLWETHER_NO_NEWS_PROB = 0.05


def _business_days(start: str, count: int) -> list[str]:
    day = _dt.date.fromisoformat(start)
    out = []
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day.isoformat())
        day += _dt.timedelta(days=1)
    return out


@dataclass
class SyntheticDetails:
    """Generator internals for verification: the planted channel structure
    and the realized per-day drive behind each label."""

    bellwethers: list[int]
    explicit_neighbors: list[list[int]]
    executive_neighbors: list[list[int]]
    drives: np.ndarray  # (companies, days); day 0 is zero


def generate_synthetic(spec: SyntheticSpec, with_details: bool = False):
    """Deterministic synthetic bundle with the planted spillover signal.

    Bellwether stocks are excluded from every relation table, so their
    influence is reachable only through inferred implicit edges; the
    explicit channel lives on supply/partnership/investment pairs and the
    executive channel on derived executive-mediated pairs. Each channel
    reads market-demeaned previous-day returns, standardized by neighbor
    count so sparse and dense channels contribute comparably.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, n_exec, days = spec.companies, spec.executives, spec.n_days

    companies = [f"C{i:03d}" for i in range(n)]
    executives = [f"E{i:03d}" for i in range(n_exec)]
    names = {cid: f"Company {i}" for i, cid in enumerate(companies)}
    names.update({eid: f"Executive {i}" for i, eid in enumerate(executives)})

    bell_idx = sorted(int(i) for i in rng.choice(n, size=spec.bellwethers, replace=False)) \
        if spec.bellwethers else []
    bell_set = set(bell_idx)
    linked = [i for i in range(n) if i not in bell_set]  # companies allowed in relation tables
    if n_exec and spec.bellwethers and len(linked) < 1:
        raise ConfigError("every company is a bellwether; nothing left to link")

    edges: list[tuple[str, str, str]] = []
    used_ce: set[tuple[int, int]] = set()
    if n_exec:
        for e in range(n_exec):
            c = linked[int(rng.integers(len(linked)))]
            used_ce.add((c, e))
            edges.append(("management", companies[c], executives[e]))
        if spec.management_edges - len(used_ce) > len(linked) * n_exec - len(used_ce):
            raise ConfigError("management edges exceed linkable company-executive pairs")
        while len(used_ce) < spec.management_edges:
            pair = (linked[int(rng.integers(len(linked)))], int(rng.integers(n_exec)))
            if pair in used_ce:
                continue
            used_ce.add(pair)
            edges.append(("management", companies[pair[0]], executives[pair[1]]))
        for c, e in _sample_pairs_excluding(rng, linked, list(range(n_exec)),
                                            spec.exec_investment_edges, used_ce):
            edges.append(("exec_investment", companies[c], executives[e]))
    company_kinds = [
        ("investment", spec.investment_edges),
        ("industry_category", spec.industry_edges),
        ("supply_chain", spec.supply_edges),
        ("business_partnership", spec.partnership_edges),
    ]
    for kind, count in company_kinds:
        pairs = _sample_pairs_excluding(rng, linked, linked, count, set(), symmetric=True)
        edges.extend((kind, companies[a], companies[b]) for a, b in pairs)
    for kind, count in [("classmate", spec.classmate_edges), ("colleague", spec.colleague_edges)]:
        if n_exec < 2:
            if count:
                raise ConfigError(f"cannot place {kind} edges with {n_exec} executives")
            continue
        execs = list(range(n_exec))
        pairs = _sample_pairs_excluding(rng, execs, execs, count, set(), symmetric=True)
        edges.extend((kind, executives[a], executives[b]) for a, b in pairs)

    # neighbor structure for the planted signal
    typed = []
    company_index = {cid: i for i, cid in enumerate(companies)}
    executive_index = {eid: i for i, eid in enumerate(executives)}
    for kind_name, src, dst in edges:
        kind = _LOADABLE_KINDS[kind_name]
        src_e = mg.EntityId(mg.EntityKind.COMPANY, company_index[src]) if src in company_index \
            else mg.EntityId(mg.EntityKind.EXECUTIVE, executive_index[src])
        dst_e = mg.EntityId(mg.EntityKind.COMPANY, company_index[dst]) if dst in company_index \
            else mg.EntityId(mg.EntityKind.EXECUTIVE, executive_index[dst])
        typed.append((kind, src_e, dst_e))
    graph = mg.derive_meta_relations(mg.build_graph(n, n_exec, typed))

    explicit_nbrs = _neighbor_lists(graph, (mg.RelationKind.SUPPLY_CHAIN,
                                            mg.RelationKind.BUSINESS_PARTNERSHIP,
                                            mg.RelationKind.INVESTMENT))
    executive_nbrs = _neighbor_lists(graph, mg.META_RELATIONS)

    def channel_scale(count: int) -> float:
        # std of a demeaned subset mean relative to the per-day return vol
        inner = max(1.0 / count - 1.0 / n, 1.0 / (4 * n))
        return 1.0 / np.sqrt(inner)

    vol = np.full(n, _BASE_INTRADAY_VOL)
    for i in bell_idx:
        vol[i] *= _BELLWETHER_VOL_MULT

    dates = _business_days(spec.start_date, days)
    closes = np.empty((n, days))
    opens = np.empty((n, days))
    returns = np.zeros((n, days))
    labels = np.zeros((n, days), dtype=int)
    drives = np.zeros((n, days))

    base = 100.0 * rng.uniform(0.5, 2.0, size=n)
    first_move = rng.normal(0, vol)
    opens[:, 0] = base
    closes[:, 0] = base * (1.0 + first_move)
    labels[:, 0] = (closes[:, 0] > opens[:, 0]).astype(int)

    for t in range(1, days):
        prev = returns[:, t - 1]
        demeaned = prev - prev.mean()
        drive = np.zeros(n)
        for i in range(n):
            parts = 0.0
            if explicit_nbrs[i]:
                parts += (_CHANNEL_EXPLICIT * channel_scale(len(explicit_nbrs[i]))
                          * demeaned[explicit_nbrs[i]].mean() / _RETURN_UNIT)
            if executive_nbrs[i]:
                parts += (_CHANNEL_EXECUTIVE * channel_scale(len(executive_nbrs[i]))
                          * demeaned[executive_nbrs[i]].mean() / _RETURN_UNIT)
            if bell_idx and i not in bell_set:
                parts += (_CHANNEL_BELLWETHER * channel_scale(len(bell_idx))
                          * demeaned[bell_idx].mean() / _RETURN_UNIT)
            drive[i] = parts
        drives[:, t] = drive
        logit = spec.spillover * _SIGNAL_SHARPNESS * drive
        if spec.noise > 0:
            p_up = 1.0 / (1.0 + np.exp(-logit / spec.noise))
            labels[:, t] = (rng.random(n) < p_up).astype(int)
        else:
            labels[:, t] = (logit > 0).astype(int)
        magnitude = np.abs(rng.normal(0, vol)) + 1e-4
        move = np.where(labels[:, t] == 1, magnitude, -magnitude)
        gap = rng.normal(0, _OVERNIGHT_GAP_VOL, size=n)
        opens[:, t] = closes[:, t - 1] * (1.0 + gap)
        closes[:, t] = opens[:, t] * (1.0 + move)
        returns[:, t] = closes[:, t] / closes[:, t - 1] - 1.0

    highs = np.maximum(opens, closes) * (1.0 + np.abs(rng.normal(0, 0.3 * vol[:, None], size=(n, days))))
    lows = np.minimum(opens, closes) * (1.0 - np.abs(rng.normal(0, 0.3 * vol[:, None], size=(n, days))))
    volumes = rng.lognormal(mean=10.0, sigma=0.3, size=(n, days))

    bars = {}
    for i, cid in enumerate(companies):
        bars[cid] = [
            RawDailyBar(dates[t], float(opens[i, t]), float(closes[i, t]),
                        float(highs[i, t]), float(lows[i, t]), float(volumes[i, t]))
            for t in range(days)
        ]

    news: dict[str, dict[str, SentimentCounts]] = {cid: {} for cid in companies}
    for i, cid in enumerate(companies):
        quiet = _BELLWETHER_NO_NEWS_PROB if i in bell_set else _NO_NEWS_PROB
        for t in range(days):
            if rng.random() < quiet:
                continue
            r = returns[i, t]
            pos = int(rng.poisson(_NEWS_RATE + _NEWS_RETURN_COUPLING * max(r, 0.0)))
            neg = int(rng.poisson(_NEWS_RATE + _NEWS_RETURN_COUPLING * max(-r, 0.0)))
            if pos or neg:
                news[cid][dates[t]] = SentimentCounts(dates[t], pos, neg)

    train_last = max(1, int(np.ceil(spec.train_fraction * days)) - 1)
    valid_last = max(train_last + 1, int(np.ceil((spec.train_fraction + spec.valid_fraction) * days)) - 1)
    valid_last = min(valid_last, days - 2)
    calendar = TradingCalendar(dates, train_end=dates[train_last], valid_end=dates[valid_last])

    bundle = DatasetBundle(
        companies=companies,
        executives=executives,
        names=names,
        edges=edges,
        bars=bars,
        news=news,
        calendar=calendar,
    )
    if with_details:
        return bundle, SyntheticDetails(bell_idx, explicit_nbrs, executive_nbrs, drives)
    return bundle


def _sample_pairs_excluding(rng, pool_a, pool_b, count, exclude, symmetric=False):
    """Distinct pairs drawn from index pools; symmetric pairs are unordered
    without self-loops."""
    pool_a = list(pool_a)
    pool_b = list(pool_b)
    limit = (len(pool_a) * (len(pool_a) - 1) // 2) if symmetric else len(pool_a) * len(pool_b)
    if count > limit - len(exclude):
        raise ConfigError(f"cannot place {count} distinct pairs (only {limit - len(exclude)} left)")
    chosen: set[tuple[int, int]] = set()
    while len(chosen) < count:
        a = pool_a[int(rng.integers(len(pool_a)))]
        b = pool_b[int(rng.integers(len(pool_b)))]
        if symmetric:
            if a == b:
                continue
            pair = (min(a, b), max(a, b))
        else:
            pair = (a, b)
        if pair in exclude or pair in chosen:
            continue
        chosen.add(pair)
    return sorted(chosen)


def _neighbor_lists(graph: mg.MarketGraph, kinds) -> list[list[int]]:
    out: list[set[int]] = [set() for _ in range(graph.company_count)]
    for kind in kinds:
        for a, b in graph.edges[kind]:
            out[a].add(b)
            out[b].add(a)
    return [sorted(s) for s in out]

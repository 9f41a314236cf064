"""Data ingestion, config parsing and persisted records.

File schemas (CSV, UTF-8, comma-delimited, dot decimal, one header row):

  prices:  date,<TICKER_1>,...,<TICKER_n>          ISO-8601 dates, adjusted close
  quotes:  date,ticker,maturity_years,moneyness,implied_vol
  rates:   date,rate                               continuously compounded, per year

Configs are YAML validated against CONFIG_SCHEMA (json-schema).  All writers
emit a provenance header ("# key=value" comment lines) so identical runs are
byte-identical and auditable.
"""

from __future__ import annotations

import csv
import hashlib
import io as _stdio
import json
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from levyport import __version__
from levyport.esscher import esscher_forward
from levyport.models import MarketData, ModelParams, SmileQuote, simulate_increments
from levyport.pricing import model_smile


class SchemaError(ValueError):
    """Input file violates its declared schema."""


@dataclass(frozen=True, eq=False)
class PricePanel:
    dates: tuple  # ISO-8601 strings, strictly increasing
    tickers: tuple
    prices: np.ndarray  # (T, n)

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.shape != (len(self.dates), len(self.tickers)):
            raise SchemaError("PricePanel: price matrix shape mismatch")
        if list(self.dates) != sorted(set(self.dates)):
            raise SchemaError("PricePanel: dates must be strictly increasing")
        if not np.all(prices > 0):
            raise SchemaError("PricePanel: prices must be positive")
        if not np.all(np.isfinite(prices)):
            raise SchemaError("PricePanel: missing or non-finite cells")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    def log_returns(self) -> np.ndarray:
        """(T-1, n) matrix ln(P_t / P_{t-1})."""
        return np.diff(np.log(self.prices), axis=0)


@dataclass(frozen=True, eq=False)
class QuoteFile:
    rows: tuple  # of (date, ticker, maturity_years, moneyness, implied_vol)

    def __post_init__(self):
        for row in self.rows:
            if row[2] <= 0 or row[4] <= 0:
                raise SchemaError("QuoteFile: maturities and vols must be positive")

    def for_date(self, d: str, tickers: tuple) -> tuple:
        index = {t: i for i, t in enumerate(tickers)}
        out = []
        for row in self.rows:
            if row[0] == d and row[1] in index:
                out.append(SmileQuote(asset=index[row[1]], maturity=row[2],
                                      moneyness=row[3], vol=row[4]))
        return tuple(out)


def load_prices(path) -> PricePanel:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if not header or header[0] != "date" or len(header) < 2:
            raise SchemaError(f"{path}: expected header 'date,<tickers...>'")
        tickers = tuple(header[1:])
        dates, rows = [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: wrong number of columns")
            if (row[0],) in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate date {row[0]}")
            seen.add((row[0],))
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: non-numeric price") from exc
            if any(v <= 0 for v in vals):
                raise SchemaError(f"{path}:{lineno}: non-positive price")
            dates.append(row[0])
            rows.append(vals)
    return PricePanel(dates=tuple(dates), tickers=tickers, prices=np.array(rows))


def save_prices(panel: PricePanel, path, provenance: dict | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        _write_provenance(fh, provenance)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *panel.tickers])
        for d, row in zip(panel.dates, panel.prices):
            writer.writerow([d, *[f"{v:.12g}" for v in row]])


def load_quotes(path) -> QuoteFile:
    path = Path(path)
    rows = []
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        expected = ["date", "ticker", "maturity_years", "moneyness", "implied_vol"]
        if header != expected:
            raise SchemaError(f"{path}: expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise SchemaError(f"{path}:{lineno}: wrong number of columns")
            key = (row[0], row[1], row[2], row[3])
            if key in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate quote node")
            seen.add(key)
            try:
                rows.append((row[0], row[1], float(row[2]), float(row[3]), float(row[4])))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: non-numeric quote field") from exc
    return QuoteFile(rows=tuple(rows))


def save_quotes(quotes: QuoteFile, path, provenance: dict | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        _write_provenance(fh, provenance)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "ticker", "maturity_years", "moneyness", "implied_vol"])
        for row in quotes.rows:
            writer.writerow([row[0], row[1], f"{row[2]:.12g}", f"{row[3]:.12g}", f"{row[4]:.12g}"])


def load_rates(path) -> dict:
    """date -> annual rate; the constant-rate shortcut lives in the config."""
    path = Path(path)
    out = {}
    with path.open(newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header != ["date", "rate"]:
            raise SchemaError(f"{path}: expected header 'date,rate'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2 or row[0] in out:
                raise SchemaError(f"{path}:{lineno}: malformed or duplicate rate row")
            out[row[0]] = float(row[1])
    return out


def _write_provenance(fh, provenance: dict | None) -> None:
    prov = {"levyport_version": __version__}
    prov.update(provenance or {})
    for key in sorted(prov):
        fh.write(f"# {key}={prov[key]}\n")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "model": {"enum": ["gaussian", "mgh", "mnts"]},
        "estimation": {"enum": ["historical", "double"]},
        "strategy": {"enum": ["ew", "mv", "ma"]},
        "frequency_weeks": {"type": ["integer", "string"]},
        "rate": {"type": "number"},
        "periods_per_year": {"type": "integer", "minimum": 1},
        "window_days": {"type": "integer", "minimum": 2},
        "tail_delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "weight_upper": {"type": "number", "exclusiveMinimum": 0},
        "weight_lower": {"type": "number", "minimum": 0},
        "xi1": {"type": "number", "minimum": 0},
        "data": {
            "type": "object",
            "properties": {
                "prices": {"type": "string"},
                "quotes": {"type": "string"},
                "rates": {"type": "string"},
            },
        },
        "simulate": {
            "type": "object",
            "properties": {
                "n_assets": {"type": "integer", "minimum": 1},
                "n_days": {"type": "integer", "minimum": 2},
                "family": {"enum": ["gaussian", "mgh", "mnts"]},
                "smile_noise": {"type": "number", "minimum": 0},
                "start_date": {"type": "string"},
                "maturities": {"type": "array", "items": {"type": "number"}},
                "moneyness": {"type": "array", "items": {"type": "number"}},
            },
        },
        "calibration": {"type": "object"},
    },
    "additionalProperties": True,
}


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"config {path}: {exc.message}") from exc
    return cfg


# ---------------------------------------------------------------------------
# Synthetic worlds
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SynthWorld:
    panel: PricePanel
    quotes: QuoteFile
    params_p: ModelParams
    params_q: ModelParams
    h: np.ndarray
    market: MarketData


def business_dates(start: str, count: int) -> tuple:
    """`count` weekday dates starting at `start` (synthetic calendar)."""
    d = date.fromisoformat(start)
    out = []
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += timedelta(days=1)
    return tuple(out)


def synth_generate(p: ModelParams, mkt: MarketData, dates, seed: int,
                   tickers=None, maturities=(1.0 / 12.0,), moneyness=(0.8, 0.9, 0.95, 1.0, 1.05, 1.1, 1.2),
                   smile_noise: float = 0.0, quote_dates=None) -> SynthWorld:
    """Simulate a price panel under P and implied-vol quotes under the
    forward-Esscher image of p.

    One model time unit spans one panel observation; ``mkt.years_per_unit``
    carries the calendar convention.  ``smile_noise`` applies iid relative
    perturbations to the generated vols (deterministic per seed).
    """
    if p.measure != "P":
        raise ValueError("synth_generate expects historical (P) parameters")
    dates = tuple(dates)
    n = p.n
    tickers = tuple(tickers) if tickers else tuple(f"SYN{i:02d}" for i in range(n))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD1CE]))
    increments = simulate_increments(p, 1.0, len(dates) - 1, rng=rng)
    logp = np.vstack([np.zeros(n), np.cumsum(increments, axis=0)])
    prices = mkt.spot * np.exp(logp)
    panel = PricePanel(dates=dates, tickers=tickers, prices=prices)

    fwd = esscher_forward(p, mkt)
    if not fwd.report.converged:
        raise RuntimeError("synth_generate: forward Esscher transform failed")
    q_params = fwd.params_out
    nodes = tuple(SmileQuote(asset=j, maturity=T, moneyness=m, vol=0.2)
                  for j in range(n) for T in maturities for m in moneyness)
    mkt_nodes = MarketData(r=mkt.r, d=mkt.d, spot=mkt.spot, quotes=nodes,
                           years_per_unit=mkt.years_per_unit,
                           moneyness_band=mkt.moneyness_band)
    rows = []
    qdates = tuple(quote_dates) if quote_dates is not None else (dates[-1],)
    for j in range(n):
        smile = model_smile(q_params, mkt_nodes, j)
        for (T, m, iv) in smile:
            if smile_noise > 0:
                iv = iv * (1.0 + smile_noise * rng.standard_normal())
            for qd in qdates:
                rows.append((qd, tickers[j], T, m, float(iv)))
    quotes = QuoteFile(rows=tuple(sorted(rows)))
    return SynthWorld(panel=panel, quotes=quotes, params_p=p, params_q=q_params,
                      h=fwd.h, market=mkt_nodes)

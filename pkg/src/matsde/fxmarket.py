"""Bid/ask exchange-rate matrices and their simulation.

A rate matrix lists n currencies against each other: unit diagonal, selling
quotes in the upper triangle, buying quotes in the lower triangle, every
entry positive.  Series of dated rate matrices are ingested from a long CSV
format (``date,base,quote,bid,ask``) where each row fills the (base, quote)
entry with the ask and the (quote, base) entry with the bid; currencies are
indexed by first appearance.

Two model families drive simulations, both with per-entry parameters and
zero diagonals:

* ``entrywise-geometric``: each off-diagonal log entry follows an additive
  SDE d(log s) = m dt + v dB on its own driver component, so simulated
  quotes stay positive and the per-entry drift/vol estimators invert the
  simulation exactly in distribution.
* ``additive-ou``: each off-diagonal entry mean-reverts to an anchor,
  d s = m (anchor - s) dt + v dB; positivity is up to the parameters.

Every off-diagonal entry is solved as a one-dimensional matrix SDE through
:func:`matsde.sde.euler_maruyama`, driven by that entry's component of one
shared matrix Brownian path per simulated path.
"""

from __future__ import annotations

import csv
import datetime as dt
import re
import warnings
from dataclasses import dataclass

import numpy as np

from matsde.brownian import MatrixBrownianPath, SeedSpec, TimeGrid, sample_path
from matsde.sde import Coefficients, euler_maruyama

__all__ = [
    "RateMatrix",
    "RateSeries",
    "FxModelSpec",
    "validate_rate_matrix",
    "combine_matrices",
    "ingest_csv",
    "export_csv",
    "estimate_coefficients",
    "simulate_market",
]

_CODE_RE = re.compile(r"^[A-Z][A-Z0-9]{0,11}$")


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Dated n-by-n quote matrix with unit diagonal and positive entries."""

    date: dt.date
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def validate_rate_matrix(
    entries, date: dt.date | None = None, warn_crossed: bool = False
) -> RateMatrix:
    """Check positivity and the unit diagonal; optionally flag crossed quotes.

    With ``warn_crossed`` a pair whose buy and sell quotes multiply to more
    than one (a round trip that creates value) triggers a warning; real data
    can contain crossed quotes, so this never rejects.
    """
    m = np.asarray(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"rate matrix must be square, got shape {m.shape}")
    n = m.shape[0]
    if n < 2:
        raise ValueError("a rate matrix needs at least 2 currencies")
    if not np.all(np.isfinite(m)):
        raise ValueError("rate matrix contains non-finite entries")
    for i in range(n):
        for j in range(n):
            if i == j and m[i, j] != 1.0:
                raise ValueError(
                    f"diagonal entry ({i + 1}, {j + 1}) is {m[i, j]!r}, must be 1"
                )
            if m[i, j] <= 0.0:
                raise ValueError(
                    f"entry ({i + 1}, {j + 1}) is {m[i, j]!r}, must be positive"
                )
    if warn_crossed:
        for i in range(n):
            for j in range(i + 1, n):
                if m[j, i] * m[i, j] > 1.0:
                    warnings.warn(
                        f"crossed quotes for pair ({i + 1}, {j + 1}): "
                        f"buy * sell = {m[j, i] * m[i, j]:.6g} > 1",
                        stacklevel=2,
                    )
    out = m.copy()
    out.setflags(write=False)
    return RateMatrix(date if date is not None else dt.date.min, out)


@dataclass(frozen=True, eq=False)
class RateSeries:
    """Dated rate matrices over a fixed, ordered currency universe."""

    currencies: tuple[str, ...]
    matrices: tuple[RateMatrix, ...]

    def __post_init__(self):
        if len(self.currencies) < 2:
            raise ValueError("need at least 2 currencies")
        if not self.matrices:
            raise ValueError("series is empty")
        n = len(self.currencies)
        for m in self.matrices:
            if m.n != n:
                raise ValueError("matrix dimension does not match currency count")
        dates = [m.date for m in self.matrices]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("dates must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.currencies)

    @property
    def dates(self) -> list[dt.date]:
        return [m.date for m in self.matrices]

    @property
    def values(self) -> np.ndarray:
        return np.stack([m.entries for m in self.matrices])


def combine_matrices(s_k: RateMatrix, s_k1: RateMatrix, mode: str) -> RateMatrix:
    """Merge the triangles of two dates into one cross-date matrix.

    ``buy-then-sell`` keeps the upper triangle (and diagonal) of the earlier
    date and takes the lower triangle from the later one; ``sell-then-buy``
    swaps the roles.  The result is labelled with the later date.
    """
    if s_k.n != s_k1.n:
        raise ValueError(f"dimension mismatch: {s_k.n} vs {s_k1.n}")
    if not s_k.date < s_k1.date:
        raise ValueError(f"dates must increase: {s_k.date} !< {s_k1.date}")
    upper = np.triu(np.ones((s_k.n, s_k.n), dtype=bool), 1)
    lower = upper.T
    out = np.eye(s_k.n)
    if mode == "buy-then-sell":
        out[upper] = s_k.entries[upper]
        out[lower] = s_k1.entries[lower]
    elif mode == "sell-then-buy":
        out[upper] = s_k1.entries[upper]
        out[lower] = s_k.entries[lower]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return validate_rate_matrix(out, s_k1.date)


def _parse_positive(cell: str, what: str, line: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"line {line}: {what} {cell!r} is not a number") from None
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"line {line}: {what} must be positive, got {cell!r}")
    return value


def ingest_csv(path) -> RateSeries:
    """Read a long-format quote file into a dense rate series.

    Expects the header ``date,base,quote,bid,ask`` and one row per currency
    pair per date, dates in increasing blocks.  The ask fills the
    (base, quote) entry and the bid the (quote, base) entry; a duplicate or
    missing pair, an unsorted date, or a malformed cell is an error naming
    the offending line, date or pair.
    """
    currencies: list[str] = []
    index: dict[str, int] = {}
    rows: list[tuple[dt.date, int, int, float, float, int]] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != [
            "date",
            "base",
            "quote",
            "bid",
            "ask",
        ]:
            raise ValueError(f"expected header date,base,quote,bid,ask, got {header}")
        for line, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 5:
                raise ValueError(f"line {line}: expected 5 columns, got {len(row)}")
            raw_date, base, quote, bid_cell, ask_cell = [c.strip() for c in row]
            try:
                date = dt.date.fromisoformat(raw_date)
            except ValueError:
                raise ValueError(f"line {line}: bad date {raw_date!r}") from None
            for code in (base, quote):
                if not _CODE_RE.match(code):
                    raise ValueError(f"line {line}: bad currency code {code!r}")
            if base == quote:
                raise ValueError(f"line {line}: base and quote are both {base!r}")
            for code in (base, quote):
                if code not in index:
                    index[code] = len(currencies)
                    currencies.append(code)
            rows.append(
                (
                    date,
                    index[base],
                    index[quote],
                    _parse_positive(bid_cell, "bid", line),
                    _parse_positive(ask_cell, "ask", line),
                    line,
                )
            )
    if not rows:
        raise ValueError("no data rows")
    n = len(currencies)
    matrices: list[RateMatrix] = []
    current_date: dt.date | None = None
    entries: np.ndarray | None = None
    seen: dict[frozenset[int], int] = {}

    def finish_date():
        missing = [
            (currencies[i], currencies[j])
            for i in range(n)
            for j in range(i + 1, n)
            if frozenset((i, j)) not in seen
        ]
        if missing:
            raise ValueError(f"date {current_date}: missing pairs {missing}")
        matrices.append(validate_rate_matrix(entries, current_date))

    for date, bi, qi, bid, ask, line in rows:
        if current_date is None or date != current_date:
            if current_date is not None:
                if date < current_date:
                    raise ValueError(
                        f"line {line}: date {date} out of order after {current_date}"
                    )
                finish_date()
            current_date = date
            entries = np.eye(n)
            seen = {}
        pair = frozenset((bi, qi))
        if pair in seen:
            raise ValueError(
                f"line {line}: duplicate pair "
                f"({currencies[bi]}, {currencies[qi]}) on {date} "
                f"(first at line {seen[pair]})"
            )
        seen[pair] = line
        entries[bi, qi] = ask
        entries[qi, bi] = bid
    finish_date()
    return RateSeries(tuple(currencies), tuple(matrices))


def export_csv(series: RateSeries, path) -> None:
    """Write a series back to the long format, one upper-triangle row per pair."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("date,base,quote,bid,ask\n")
        for m in series.matrices:
            for i in range(series.n):
                for j in range(i + 1, series.n):
                    f.write(
                        f"{m.date.isoformat()},{series.currencies[i]},"
                        f"{series.currencies[j]},"
                        f"{float(m.entries[j, i])!r},{float(m.entries[i, j])!r}\n"
                    )


@dataclass(frozen=True, eq=False)
class FxModelSpec:
    """Per-entry dynamics: drift and vol matrices with zero diagonals.

    For the geometric family ``drift``/``vol`` act on log quotes; for the
    mean-reverting family ``drift`` is the reversion rate toward ``anchor``
    (which defaults to the starting matrix when absent).
    """

    family: str
    drift: np.ndarray
    vol: np.ndarray
    anchor: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in ("entrywise-geometric", "additive-ou"):
            raise ValueError(f"unknown family {self.family!r}")
        drift = np.asarray(self.drift, dtype=float)
        vol = np.asarray(self.vol, dtype=float)
        if drift.shape != vol.shape or drift.ndim != 2:
            raise ValueError("drift and vol must be equal-shape square matrices")
        if np.any(np.diag(drift) != 0.0) or np.any(np.diag(vol) != 0.0):
            raise ValueError("diagonals of drift and vol must be zero")
        if np.any(vol < 0.0):
            raise ValueError("vol entries must be nonnegative")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "vol", vol)

    @property
    def n(self) -> int:
        return self.drift.shape[0]


def _uniform_day_gap(dates: list[dt.date]) -> int:
    gaps = {(b - a).days for a, b in zip(dates, dates[1:])}
    if len(gaps) != 1:
        raise ValueError(f"dates must be uniformly spaced, saw gaps {sorted(gaps)}")
    return gaps.pop()


def estimate_coefficients(
    series: RateSeries, family: str, day_count: float = 365.0
) -> FxModelSpec:
    """Fit per-entry dynamics from a uniformly spaced series.

    ``entrywise-geometric``: drift is the mean log return per year, vol the
    log-return standard deviation per square-root year.  ``additive-ou``:
    the reversion rate and anchor come from a least-squares fit of entry
    differences against levels, vol from the residuals.
    """
    if len(series.matrices) < 3:
        raise ValueError("need at least 3 dates to estimate")
    step = _uniform_day_gap(series.dates) / day_count
    n = series.n
    values = series.values
    drift = np.zeros((n, n))
    vol = np.zeros((n, n))
    if family == "entrywise-geometric":
        logs = np.log(values)
        rets = np.diff(logs, axis=0)
        off = ~np.eye(n, dtype=bool)
        drift[off] = rets.mean(axis=0)[off] / step
        vol[off] = rets.std(axis=0, ddof=1)[off] / np.sqrt(step)
        return FxModelSpec(family, drift, vol)
    if family == "additive-ou":
        anchor = np.ones((n, n))
        diffs = np.diff(values, axis=0)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                level = values[:-1, i, j]
                slope, intercept = np.polyfit(level, diffs[:, i, j], 1)
                rate = -slope / step
                drift[i, j] = rate
                anchor[i, j] = (
                    -intercept / slope if slope != 0.0 else level.mean()
                )
                residual = diffs[:, i, j] - (intercept + slope * level)
                vol[i, j] = residual.std(ddof=1) / np.sqrt(step)
        return FxModelSpec(family, drift, vol, anchor)
    raise ValueError(f"unknown family {family!r}")


def _entry_driver(path: MatrixBrownianPath, i: int, j: int) -> MatrixBrownianPath:
    return MatrixBrownianPath(path.grid, path.values[:, i : i + 1, j : j + 1])


def _entry_sde(spec: FxModelSpec, i: int, j: int, s0: float) -> tuple[Coefficients, float]:
    m = float(spec.drift[i, j])
    v = float(spec.vol[i, j])
    if spec.family == "entrywise-geometric":
        c = Coefficients(
            b=lambda t, y: np.full((1, 1), m),
            sigma=lambda t, y: np.full((1, 1), v),
        )
        return c, float(np.log(s0))
    anchor = float(
        spec.anchor[i, j] if spec.anchor is not None else s0
    )
    c = Coefficients(
        b=lambda t, y: m * (anchor - y),
        sigma=lambda t, y: np.full((1, 1), v),
    )
    return c, s0


def simulate_market(
    spec: FxModelSpec,
    s0: RateMatrix,
    grid: TimeGrid,
    paths: int,
    seed: SeedSpec,
    start_date: dt.date = dt.date(2000, 1, 1),
    day_count: float = 365.0,
) -> list[RateSeries]:
    """Simulate dated rate-matrix paths entry by entry.

    Each simulated path draws one matrix Brownian path and solves every
    off-diagonal entry as a scalar SDE against its own driver component; the
    diagonal stays pinned at one.  Grid times are mapped onto calendar dates
    through ``day_count``; every emitted matrix is validated.
    """
    if spec.n != s0.n:
        raise ValueError(f"model is {spec.n}-dim but start matrix is {s0.n}-dim")
    n = spec.n
    days = np.rint(grid.nodes * day_count).astype(int)
    if np.any(np.diff(days) < 1):
        raise ValueError("grid steps are finer than one calendar day")
    dates = [start_date + dt.timedelta(days=int(d)) for d in days]
    currencies = tuple(f"C{k + 1}" for k in range(n))
    out: list[RateSeries] = []
    for p in range(paths):
        driver = sample_path(n, grid, seed.with_path(seed.path_index + p))
        entries = np.ones((len(grid), n, n))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                c, y0 = _entry_sde(spec, i, j, float(s0.entries[i, j]))
                sol = euler_maruyama(
                    c, np.full((1, 1), y0), _entry_driver(driver, i, j)
                )
                levels = sol.states[:, 0, 0]
                if spec.family == "entrywise-geometric":
                    levels = np.exp(levels)
                entries[:, i, j] = levels
                # the log/exp round trip can wobble t=0 by an ulp
                entries[0, i, j] = s0.entries[i, j]
        try:
            matrices = tuple(
                validate_rate_matrix(entries[k], dates[k])
                for k in range(len(grid))
            )
        except ValueError as err:
            raise ValueError(f"path {p}: {err}") from err
        out.append(RateSeries(currencies, matrices))
    return out

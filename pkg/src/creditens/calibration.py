"""Calibration pipeline: returns, mean correlation, rescaling, fit of N.

Returns are plain price differences over the horizon (non-overlapping
windows by default; overlapping windows would break the i.i.d. pooling the
likelihood fit relies on). The aggregated rotated-and-rescaled returns are
fitted against the univariate heavy-tailed density by maximum likelihood; a
least-squares-on-log-histogram mode exists for figure replication.

Drift/volatility estimates follow the value-mapping convention of the loss
model: mu_hat = mean(r)/dt + rho_hat^2/2 and rho_hat = std(r)/sqrt(dt), i.e.
returns are treated as centered log-returns over the horizon. This is stated
in the report diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .ensemble_returns import univariate_rescaled_logpdf
from .errors import ConsistencyError, DataError, ValidationError
from .numerics import sym_eigen

__all__ = [
    "PricePanel",
    "ReturnMatrix",
    "FitReport",
    "read_price_panel",
    "compute_returns",
    "mean_correlation",
    "rotate_and_rescale",
    "fit_n",
    "estimate_drift_vol",
    "calibrate_panel",
    "TRADING_DAYS",
]

# Trading-day conventions used throughout.
TRADING_DAYS = {"month": 20, "year": 252, "day": 1}


@dataclass(frozen=True)
class PricePanel:
    """Wide price panel: K tickers over strictly increasing trading days."""

    tickers: tuple[str, ...]
    dates: np.ndarray
    prices: np.ndarray  # (K, T_obs)
    dropped_rows: int = 0

    def __post_init__(self):
        if self.prices.shape != (len(self.tickers), self.dates.size):
            raise ValidationError("prices must have shape (n_tickers, n_dates)")
        if self.dates.size > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0)):
            raise DataError("dates must be strictly increasing")
        if not np.all(np.isfinite(self.prices)):
            raise DataError("prices contain non-finite entries after ingestion")
        bad = np.argwhere(self.prices <= 0.0)
        if bad.size:
            k, t = bad[0]
            raise DataError(
                f"nonpositive price for {self.tickers[k]} on {self.dates[t]}"
            )


@dataclass(frozen=True)
class ReturnMatrix:
    """K x n_obs panel of returns at a fixed horizon (trading days)."""

    returns: np.ndarray
    horizon_days: int

    def __post_init__(self):
        if self.returns.ndim != 2:
            raise ValidationError("returns must be 2-D (assets x observations)")
        if self.horizon_days < 1:
            raise ValidationError("horizon must be at least one trading day")
        if not np.all(np.isfinite(self.returns)):
            raise DataError("returns contain non-finite entries")


@dataclass
class FitReport:
    c_hat: float
    n_hat: float
    mu_hat: dict
    rho_hat: dict
    dropped_rows: int
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps({
            "c_hat": self.c_hat,
            "n_hat": self.n_hat,
            "mu_hat": self.mu_hat,
            "rho_hat": self.rho_hat,
            "dropped_rows": self.dropped_rows,
            "diagnostics": self.diagnostics,
        }, indent=indent)


def read_price_panel(path) -> PricePanel:
    """Ingest a wide CSV panel: header date,TICKER1,..., ISO dates, positive prices.

    Rows containing any missing price are dropped and counted in
    ``dropped_rows``.
    """
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise DataError(f"cannot parse CSV {path}: {exc}") from exc
    if df.shape[1] < 2:
        raise DataError("panel needs a date column plus at least one ticker")
    if df.columns[0].strip().lower() != "date":
        raise DataError(f"first column must be 'date', got {df.columns[0]!r}")
    try:
        dates = pd.to_datetime(df.iloc[:, 0], format="ISO8601").to_numpy()
    except Exception as exc:
        raise DataError(f"cannot parse ISO-8601 dates: {exc}") from exc
    tickers = tuple(str(c) for c in df.columns[1:])
    values = df.iloc[:, 1:].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    keep = np.all(np.isfinite(values), axis=1)
    dropped = int(np.count_nonzero(~keep))
    if not np.any(keep):
        raise DataError("every row has missing prices")
    return PricePanel(tickers=tickers, dates=dates[keep],
                      prices=values[keep].T.copy(), dropped_rows=dropped)


def compute_returns(panel: PricePanel, horizon_days: int,
                    overlapping: bool = False) -> ReturnMatrix:
    """Price-difference returns over the horizon, non-overlapping by default."""
    if horizon_days < 1:
        raise ValidationError("horizon must be at least one trading day")
    t_obs = panel.dates.size
    if horizon_days >= t_obs:
        raise ValidationError(
            f"horizon of {horizon_days} days needs more than {t_obs} rows"
        )
    s = panel.prices
    if overlapping:
        start = np.arange(0, t_obs - horizon_days)
    else:
        start = np.arange(0, t_obs - horizon_days, horizon_days)
    r = (s[:, start + horizon_days] - s[:, start]) / s[:, start]
    return ReturnMatrix(returns=r, horizon_days=horizon_days)


def mean_correlation(rm: ReturnMatrix) -> float:
    """Average of all off-diagonal sample correlation entries."""
    r = rm.returns
    k = r.shape[0]
    if k < 2:
        raise ValidationError("mean correlation needs at least two series")
    stds = r.std(axis=1)
    dead = np.nonzero(stds == 0.0)[0]
    if dead.size:
        raise DataError(f"zero-variance return series at index {dead[0]}")
    corr = np.corrcoef(r)
    return float((corr.sum() - k) / (k * (k - 1)))


def rotate_and_rescale(rm: ReturnMatrix) -> np.ndarray:
    """Whiten the return vectors in the sample-covariance eigenbasis and pool.

    Returns are centered per asset, the covariance uses the 1/T normalization
    so the pooled output has unit variance about zero by construction. All
    rescaled components of all time stamps are aggregated into one list.
    """
    r = rm.returns
    k, n = r.shape
    x = r - r.mean(axis=1, keepdims=True)
    sigma = (x @ x.T) / n
    lam, vec = sym_eigen(sigma)
    if lam[-1] <= 0.0:
        raise DataError(
            "sample covariance is not positive definite; reduce the number of "
            "assets or extend the data interval"
        )
    rt = (vec.T @ x) / np.sqrt(lam)[:, None]
    return rt.ravel()


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo: float, hi: float, tol: float, trace: list) -> float:
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    trace.extend([(c, fc), (d, fd)])
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
            trace.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
            trace.append((d, fd))
    return 0.5 * (a + b)


def fit_n(samples, bounds: tuple[float, float] = (2.05, 60.0),
          objective: str = "mle") -> tuple[float, dict]:
    """Fit the fluctuation parameter N to pooled rescaled returns.

    Maximum likelihood by golden-section search on the bounded interval;
    ``objective='lsq'`` instead least-squares-fits the log histogram density.
    An optimum pinned at a boundary sets a warning flag in the diagnostics
    (Gaussian-looking data pushes N to the upper bound).
    """
    samples = np.asarray(samples, dtype=float).ravel()
    n_lo, n_hi = bounds
    if not 2.0 < n_lo < n_hi:
        raise ValidationError(f"need 2 < n_lo < n_hi, got {bounds}")
    if samples.size < 1000:
        raise ValidationError(f"need at least 1000 samples, got {samples.size}")

    if objective == "mle":
        def score(n):
            return float(np.sum(univariate_rescaled_logpdf(samples, n)))
    elif objective == "lsq":
        span = min(20.0, float(np.max(np.abs(samples))))
        edges = np.linspace(-span, span, 82)
        counts, _ = np.histogram(samples, bins=edges)
        widths = np.diff(edges)
        centers = 0.5 * (edges[:-1] + edges[1:])
        nonzero = counts > 0
        log_emp = np.log(counts[nonzero] / (samples.size * widths[nonzero]))
        centers = centers[nonzero]

        def score(n):
            return -float(np.sum(
                (log_emp - univariate_rescaled_logpdf(centers, n))**2))
    else:
        raise ValidationError(f"objective must be 'mle' or 'lsq', got {objective!r}")

    trace: list = []
    n_hat = _golden_max(score, n_lo, n_hi, tol=1e-3, trace=trace)
    at_boundary = min(n_hat - n_lo, n_hi - n_hat) < 1e-2 * (n_hi - n_lo)
    diagnostics = {
        "objective": objective,
        "objective_value": score(n_hat),
        "bounds": [n_lo, n_hi],
        "boundary_warning": bool(at_boundary),
        "trace": [[float(n), float(v)] for n, v in trace],
    }
    return float(n_hat), diagnostics


def estimate_drift_vol(rm: ReturnMatrix, days_per_unit: int,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Per-asset drift and volatility in the chosen horizon unit.

    rho_hat = std(r)/sqrt(dt); mu_hat = mean(r)/dt + rho_hat^2/2 with dt the
    return horizon expressed in units of ``days_per_unit`` trading days.
    """
    if rm.returns.shape[1] < 2:
        raise ValidationError("need at least 2 return observations per asset")
    dt = rm.horizon_days / days_per_unit
    mean = rm.returns.mean(axis=1)
    std = rm.returns.std(axis=1, ddof=1)
    rho_hat = std / math.sqrt(dt)
    mu_hat = mean / dt + 0.5 * rho_hat**2
    return mu_hat, rho_hat


def calibrate_panel(panel: PricePanel, horizon_days: int, days_per_unit: int,
                    bounds: tuple[float, float] = (2.05, 60.0),
                    objective: str = "mle",
                    overlapping: bool = False) -> tuple[FitReport, np.ndarray]:
    """Full pipeline; returns the fit report and the pooled rescaled returns.

    A panel whose mean correlation is numerically 1 (duplicated series) is
    degenerate: the covariance cannot be whitened, so the report carries
    c_hat = 1 with a degeneracy flag and no N fit instead of failing.
    """
    rm = compute_returns(panel, horizon_days, overlapping=overlapping)
    c_hat = mean_correlation(rm)
    k = rm.returns.shape[0]
    degenerate = c_hat > 1.0 - 1e-10
    if not degenerate and not -1.0 / (k - 1) < c_hat < 1.0:
        raise ConsistencyError(f"mean correlation {c_hat} outside valid range")
    if degenerate:
        c_hat = 1.0
        rescaled = np.empty(0)
        n_hat, diag = float("nan"), {"degenerate_correlation": True}
    else:
        rescaled = rotate_and_rescale(rm)
        n_hat, diag = fit_n(rescaled, bounds=bounds, objective=objective)
    mu_hat, rho_hat = estimate_drift_vol(rm, days_per_unit)
    unit = {20: "month", 252: "year", 1: "day"}.get(days_per_unit,
                                                    f"{days_per_unit}d")
    diag.update({
        "n_return_obs": int(rm.returns.shape[1]),
        "n_pooled_samples": int(rescaled.size),
        "horizon_days": horizon_days,
        "unit": unit,
        "drift_convention": "mu = mean(r)/dt + rho^2/2 (centered log-return mapping)",
        "overlapping_windows": overlapping,
    })
    report = FitReport(
        c_hat=c_hat,
        n_hat=n_hat,
        mu_hat={t: float(m) for t, m in zip(panel.tickers, mu_hat)},
        rho_hat={t: float(s) for t, s in zip(panel.tickers, rho_hat)},
        dropped_rows=panel.dropped_rows,
        diagnostics=diag,
    )
    return report, rescaled

"""Command-line interface.

stdout carries only machine-readable output (CSV curves, JSON reports);
progress and error messages go to stderr. Exit codes: 0 ok, 2 usage or
validation, 3 data error, 4 numerical failure. Curve values are written with
12 significant digits so golden files stay stable.
"""

from __future__ import annotations

import json
import math
import os

import click
import numpy as np

from . import __version__
from .calibration import TRADING_DAYS, calibrate_panel, read_price_panel
from .ensemble_returns import DensityCurve, EnsembleParams, univariate_rescaled_density
from .errors import DataError, QuadratureError, ValidationError
from .montecarlo import (
    ComparisonReport,
    EmpiricalDensity,
    SimConfig,
    compare_density,
    default_loss_edges,
    histogram,
    simulate_losses,
)
from .numerics import DEFAULT_QUADRATURE, QuadratureConfig
from .portfolio_loss import (
    HomogeneousSpec,
    Horizon,
    limit_loss_curve,
    loss_density_curve,
)

PRESETS = {
    "monthly-paper": dict(k=100, c=0.26, n_eff=4.2, mu=0.013, rho=0.1,
                          t=1.0, f0=75.0, v0=100.0, unit="month"),
    "yearly-paper": dict(k=100, c=0.28, n_eff=6.0, mu=0.17, rho=0.35,
                         t=1.0, f0=75.0, v0=100.0, unit="year"),
}

_FMT = "{:.12g}"


def _echo_err(msg: str) -> None:
    click.echo(msg, err=True)


def _fail(code: int, msg: str):
    _echo_err(f"error: {msg}")
    raise SystemExit(code)


def _guard(fn, *args, **kwargs):
    """Run a library call mapping package errors onto the exit-code contract."""
    try:
        return fn(*args, **kwargs)
    except ValidationError as exc:
        _fail(2, str(exc))
    except DataError as exc:
        _fail(3, str(exc))
    except QuadratureError as exc:
        _fail(4, str(exc))


def _parse_grid(spec: str) -> np.ndarray:
    try:
        kind, rest = spec.split(":", 1)
        lo_s, hi_s, n_s = rest.split(",")
        lo, hi, n = float(lo_s), float(hi_s), int(n_s)
    except ValueError:
        raise click.UsageError(
            f"grid spec must look like lin:lo,hi,n or log:lo,hi,n, got {spec!r}")
    if n < 2 or not hi > lo:
        raise click.UsageError(f"grid needs hi > lo and n >= 2, got {spec!r}")
    if kind == "lin":
        return np.linspace(lo, hi, n)
    if kind == "log":
        if lo <= 0.0:
            raise click.UsageError("log grid needs lo > 0")
        return np.logspace(math.log10(lo), math.log10(hi), n)
    raise click.UsageError(f"grid kind must be lin or log, got {kind!r}")


def _parse_maturity(text: str, unit: str) -> float:
    """Maturity in horizon-units; 'Nd' means N trading days converted by unit."""
    if text.endswith("d"):
        try:
            days = float(text[:-1])
        except ValueError:
            raise click.UsageError(f"bad maturity {text!r}")
        return days / TRADING_DAYS[unit]
    try:
        return float(text)
    except ValueError:
        raise click.UsageError(f"bad maturity {text!r}")


def _write_curve(curve: DensityCurve, out: str, labels=("L", "density")) -> None:
    lines = [f"{labels[0]},{labels[1]}"]
    for x, y in zip(curve.abscissae, curve.values):
        lines.append(f"{_FMT.format(x)},{_FMT.format(y)}")
    text = "\n".join(lines) + "\n"
    if out == "-":
        click.echo(text, nl=False)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _threads_default() -> int:
    return int(os.environ.get("CREDITENS_THREADS", "1"))


class KParam(click.ParamType):
    name = "K"

    def convert(self, value, param, ctx):
        if isinstance(value, (int, float)) or value is None:
            return value
        if str(value).lower() in ("inf", "infinity"):
            return math.inf
        try:
            return int(value)
        except ValueError:
            self.fail(f"--K must be a positive integer or 'inf', got {value!r}",
                      param, ctx)


def _model_options(fn):
    opts = [
        click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None,
                     help="Fill parameter defaults from a named parameter set."),
        click.option("--K", "k", type=KParam(), default=None,
                     help="Number of obligors, or 'inf' for the limit curve."),
        click.option("--c", type=float, default=None, help="Mean correlation."),
        click.option("--N", "n_eff", type=float, default=None,
                     help="Correlation fluctuation parameter."),
        click.option("--mu", type=float, default=None, help="Drift per unit."),
        click.option("--rho", type=float, default=None,
                     help="Volatility per sqrt(unit)."),
        click.option("--T", "maturity", type=str, default=None,
                     help="Maturity in units, or 'Nd' trading days."),
        click.option("--F0", "f0", type=float, default=None, help="Face value."),
        click.option("--V0", "v0", type=float, default=None, help="Initial value."),
        click.option("--unit", type=click.Choice(["month", "year"]), default=None,
                     help="Horizon unit for trading-day conversion."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _resolve_model(preset, k, c, n_eff, mu, rho, maturity, f0, v0, unit):
    base = dict(PRESETS[preset]) if preset else {}
    unit = unit or base.get("unit", "month")
    if k is None:
        if not preset:
            raise click.UsageError("missing --K (an integer or 'inf')")
        k = base["k"]
    k = None if k == math.inf else k
    values = {
        "k": k,
        "c": c if c is not None else base.get("c"),
        "n_eff": n_eff if n_eff is not None else base.get("n_eff"),
        "mu": mu if mu is not None else base.get("mu"),
        "rho": rho if rho is not None else base.get("rho"),
        "f0": f0 if f0 is not None else base.get("f0"),
        "v0": v0 if v0 is not None else base.get("v0"),
    }
    missing = [name for name, val in values.items() if val is None and name != "k"]
    if missing:
        raise click.UsageError(
            f"missing model parameters: {', '.join('--' + m for m in missing)} "
            "(set them or use --preset)")
    if maturity is not None:
        t = _parse_maturity(maturity, unit)
    elif preset:
        t = base["t"]
    else:
        raise click.UsageError("missing --T")
    params = _guard(EnsembleParams, c=values["c"], n_eff=values["n_eff"])
    spec = _guard(HomogeneousSpec, f0=values["f0"], v0=values["v0"],
                  mu0=values["mu"], rho0=values["rho"], k=values["k"])
    horizon = _guard(Horizon, t=t, unit=unit)
    return spec, params, horizon


@click.group()
@click.version_option(version=__version__)
def main():
    """Ensemble-averaged credit portfolio loss distributions."""


@main.command()
@_model_options
@click.option("--grid", default="lin:0.001,0.5,500", show_default=True,
              help="Loss grid: lin:lo,hi,n or log:lo,hi,n.")
@click.option("--n-z", type=int, default=None,
              help="Starting order of the z quadrature.")
@click.option("--out", default="-", show_default=True,
              help="Output CSV path ('-' = stdout).")
def loss(preset, k, c, n_eff, mu, rho, maturity, f0, v0, unit, grid, n_z, out):
    """Analytic averaged loss density curve (finite K or the K->inf limit)."""
    spec, params, horizon = _resolve_model(preset, k, c, n_eff, mu, rho,
                                           maturity, f0, v0, unit)
    grid_arr = _parse_grid(grid)
    config = (DEFAULT_QUADRATURE if n_z is None
              else QuadratureConfig(n_z=n_z))
    if spec.k is None:
        curve = _guard(limit_loss_curve, grid_arr, spec, params, horizon, config)
    else:
        curve = _guard(loss_density_curve, grid_arr, spec, params, horizon, config)
    _write_curve(curve, out)
    _echo_err(f"loss curve written ({grid_arr.size} points, K={spec.k or 'inf'})")


@main.command()
@_model_options
@click.option("--samples", type=int, required=True, help="Number of MC draws.")
@click.option("--seed", type=int, required=True, help="RNG seed.")
@click.option("--batch-size", type=int, default=100_000, show_default=True)
@click.option("--threads", type=int, default=None,
              help="Worker threads (default: CREDITENS_THREADS or 1).")
@click.option("--bins", default="log:1e-5,1,201", show_default=True,
              help="Histogram bin edges spec.")
@click.option("--out-samples", default=None,
              help="Write raw losses to this .npz file.")
@click.option("--out-hist", default="-", show_default=True,
              help="Histogram CSV path ('-' = stdout).")
def simulate(preset, k, c, n_eff, mu, rho, maturity, f0, v0, unit, samples,
             seed, batch_size, threads, bins, out_samples, out_hist):
    """Monte Carlo loss draws and their empirical density."""
    spec, params, horizon = _resolve_model(preset, k, c, n_eff, mu, rho,
                                           maturity, f0, v0, unit)
    if spec.k is None:
        raise click.UsageError("simulation needs a finite --K")
    cfg = _guard(SimConfig, num_samples=samples, seed=seed, batch_size=batch_size)
    pf = spec.to_portfolio()
    losses = _guard(simulate_losses, pf, params, horizon, cfg,
                    threads=threads if threads is not None else _threads_default())
    edges = _parse_grid(bins)
    emp = _guard(histogram, losses, edges)
    if out_samples:
        meta = json.dumps({"seed": seed, "samples": samples,
                           "fingerprint": losses.fingerprint})
        np.savez_compressed(out_samples, values=losses.values, meta=meta)
    lines = [
        f"# n_total={emp.n_total}",
        f"# n_zero={emp.n_zero}",
        f"# n_below={emp.n_below}",
        f"# n_above={emp.n_above}",
        "bin_lo,bin_hi,count,density,stderr",
    ]
    for lo_e, hi_e, ct, d, se in zip(emp.edges[:-1], emp.edges[1:], emp.counts,
                                     emp.density, emp.stderr):
        lines.append(",".join([_FMT.format(lo_e), _FMT.format(hi_e), str(int(ct)),
                               _FMT.format(d), _FMT.format(se)]))
    text = "\n".join(lines) + "\n"
    if out_hist == "-":
        click.echo(text, nl=False)
    else:
        with open(out_hist, "w") as fh:
            fh.write(text)
    _echo_err(f"simulated {samples} losses (fingerprint {losses.fingerprint})")


def _read_curve_csv(path) -> DensityCurve:
    try:
        data = np.genfromtxt(path, delimiter=",", names=True, comments="#")
        names = data.dtype.names
        x = np.atleast_1d(data[names[0]]).astype(float)
        y = np.atleast_1d(data[names[1]]).astype(float)
        return DensityCurve(np.ascontiguousarray(x), np.ascontiguousarray(y))
    except (OSError, TypeError, IndexError, ValueError, ValidationError) as exc:
        raise DataError(f"cannot read curve CSV {path}: {exc}") from exc


def _read_hist_csv(path) -> EmpiricalDensity:
    meta = {}
    try:
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = int(val)
        data = np.genfromtxt(path, delimiter=",", names=True, comments="#")
        lo = np.atleast_1d(data["bin_lo"]).astype(float)
        hi = np.atleast_1d(data["bin_hi"]).astype(float)
        counts = np.atleast_1d(data["count"]).astype(np.int64)
        n_total = meta["n_total"]
        edges = np.append(lo, hi[-1])
        widths = np.diff(edges)
        return EmpiricalDensity(
            edges=edges, counts=counts,
            density=counts / (n_total * widths),
            stderr=np.sqrt(counts) / (n_total * widths),
            n_total=n_total, n_zero=meta.get("n_zero", 0),
            n_below=meta.get("n_below", 0), n_above=meta.get("n_above", 0))
    except (OSError, KeyError, TypeError, IndexError, ValueError) as exc:
        raise DataError(f"cannot read histogram CSV {path}: {exc}") from exc


@main.command()
@click.argument("analytic_csv")
@click.argument("empirical_csv")
@click.option("--min-count", type=int, default=100, show_default=True)
@click.option("--chi2-threshold", type=float, default=1.5, show_default=True)
@click.option("--z-threshold", type=float, default=4.0, show_default=True)
def compare(analytic_csv, empirical_csv, min_count, chi2_threshold, z_threshold):
    """Chi-square comparison of an analytic curve against an MC histogram."""
    curve = _guard(_read_curve_csv, analytic_csv)
    emp = _guard(_read_hist_csv, empirical_csv)
    report: ComparisonReport = _guard(
        compare_density, emp, curve, min_count=min_count,
        chi2_threshold=chi2_threshold, z_threshold=z_threshold)
    click.echo(json.dumps(report.to_dict(), indent=2))


@main.command("return-density")
@click.option("--N", "n_eff", type=float, required=True)
@click.option("--grid", default="lin:-40,40,2001", show_default=True)
@click.option("--out", default="-", show_default=True)
def return_density(n_eff, grid, out):
    """Univariate rescaled-return density curve."""
    grid_arr = _parse_grid(grid)
    vals = _guard(univariate_rescaled_density, grid_arr, n_eff)
    curve = DensityCurve(grid_arr, vals, {"kind": "return-density", "n_eff": n_eff})
    _write_curve(curve, out, labels=("r", "density"))


@main.command()
@click.argument("prices_csv")
@click.option("--horizon", default="month", show_default=True,
              help="Return horizon: month, year, or a trading-day count like 20d.")
@click.option("--bounds", default="2.05,60", show_default=True,
              help="Search interval for N.")
@click.option("--objective", type=click.Choice(["mle", "lsq"]), default="mle",
              show_default=True)
@click.option("--overlapping", is_flag=True, default=False,
              help="Use overlapping return windows.")
@click.option("--out-report", default="-", show_default=True,
              help="Fit report JSON path ('-' = stdout).")
@click.option("--out-rescaled", default=None,
              help="Histogram CSV of the pooled rescaled returns.")
@click.option("--rescaled-bins", default="lin:-15,15,151", show_default=True)
def calibrate(prices_csv, horizon, bounds, objective, overlapping, out_report,
              out_rescaled, rescaled_bins):
    """Calibrate (c, N) and per-asset drift/volatility from a price panel CSV."""
    if horizon in ("month", "year"):
        horizon_days = TRADING_DAYS[horizon]
        days_per_unit = horizon_days
    else:
        text = horizon[:-1] if horizon.endswith("d") else horizon
        try:
            horizon_days = int(text)
        except ValueError:
            raise click.UsageError(f"bad --horizon {horizon!r}")
        if horizon_days < 1:
            raise click.UsageError("--horizon must be at least one trading day")
        days_per_unit = horizon_days
    try:
        lo_s, hi_s = bounds.split(",")
        fit_bounds = (float(lo_s), float(hi_s))
    except ValueError:
        raise click.UsageError(f"--bounds must be 'lo,hi', got {bounds!r}")

    try:
        panel = read_price_panel(prices_csv)
    except DataError as exc:
        _fail(2, str(exc))
    report, rescaled = _guard(calibrate_panel, panel, horizon_days,
                              days_per_unit, bounds=fit_bounds,
                              objective=objective, overlapping=overlapping)
    text = report.to_json() + "\n"
    if out_report == "-":
        click.echo(text, nl=False)
    else:
        with open(out_report, "w") as fh:
            fh.write(text)
    if out_rescaled and rescaled.size:
        edges = _parse_grid(rescaled_bins)
        counts, _ = np.histogram(rescaled, bins=edges)
        widths = np.diff(edges)
        lines = [f"# n_samples={rescaled.size}", "r_lo,r_hi,count,density"]
        for lo_e, hi_e, ct, d in zip(edges[:-1], edges[1:], counts,
                                     counts / (rescaled.size * widths)):
            lines.append(",".join([_FMT.format(lo_e), _FMT.format(hi_e),
                                   str(int(ct)), _FMT.format(d)]))
        with open(out_rescaled, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    if report.diagnostics.get("degenerate_correlation"):
        _echo_err("warning: degenerate correlation (c_hat at 1); N was not fitted")
    if report.diagnostics.get("boundary_warning"):
        _echo_err("warning: N estimate pinned at a search bound")
    _echo_err(f"calibrated {len(report.mu_hat)} assets: "
              f"c_hat={report.c_hat:.4g}, n_hat={report.n_hat:.4g}")


if __name__ == "__main__":
    main()

"""Monte Carlo oracle: full-model loss sampling and histogram comparison.

The sampling path is the compound representation chained through the value
mapping: z ~ chi-square(N), common factor xi0, idiosyncratic xi_k, returns
r_k = rho_k sqrt(T) sqrt(z/N) (sqrt(c) xi0 + sqrt(1-c) xi_k), terminal values
by the Ito mapping, then weighted losses. Everything is deterministic given
the seed: batch i draws from the counter-based stream (seed, i) and batches
are merged in index order, so the result is independent of thread count.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _kernels as kernels
from .ensemble_returns import DensityCurve, EnsembleParams, _batch_generator
from .errors import DataError, ValidationError
from .portfolio_loss import Horizon, LossMixture, Portfolio

__all__ = [
    "SimConfig",
    "LossSamples",
    "EmpiricalDensity",
    "ComparisonReport",
    "simulate_losses",
    "histogram",
    "default_loss_edges",
    "compare_density",
]


@dataclass(frozen=True)
class SimConfig:
    num_samples: int
    seed: int
    batch_size: int = 100_000

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValidationError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class LossSamples:
    """Monte Carlo portfolio-loss draws with provenance."""

    values: np.ndarray
    config: SimConfig
    fingerprint: str


@dataclass(frozen=True)
class EmpiricalDensity:
    """Histogram density normalized by the total sample count.

    ``density * width`` sums to the fraction of samples inside the binned
    range; the zero-loss atom and out-of-range counts are carried separately.
    Standard errors are Poisson (sqrt of counts).
    """

    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    n_total: int
    n_zero: int
    n_below: int
    n_above: int


@dataclass(frozen=True)
class ComparisonReport:
    chi2_per_dof: float
    max_abs_z: float
    n_bins: int
    passed: bool
    chi2_threshold: float
    z_threshold: float
    min_count: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "chi2_per_dof": self.chi2_per_dof,
            "max_abs_z": self.max_abs_z,
            "n_bins": self.n_bins,
            "pass": self.passed,
            "chi2_threshold": self.chi2_threshold,
            "z_threshold": self.z_threshold,
            "min_count": self.min_count,
        }


def _fingerprint(pf: Portfolio, params: EnsembleParams, h: Horizon,
                 cfg: SimConfig) -> str:
    parts = [f"{ob.face_value!r},{ob.initial_value!r},{ob.drift!r},{ob.vol!r}"
             for ob in pf.obligors]
    blob = ";".join(parts) + f"|c={params.c!r},N={params.n_eff!r},T={h.t!r}"
    blob += f"|seed={cfg.seed},n={cfg.num_samples},b={cfg.batch_size}"
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def simulate_losses(pf: Portfolio, params: EnsembleParams, h: Horizon,
                    cfg: SimConfig, threads: int = 1) -> LossSamples:
    """Draw portfolio losses from the full averaged model.

    One-factor sampling (O(K) per draw) is the only path here; it is the
    correlation structure the model studies. Per-batch draw order is fixed:
    z, then the common factor, then the idiosyncratic block.
    """
    k = pf.size
    sig = np.array([ob.vol for ob in pf.obligors]) * math.sqrt(h.t)
    ito = np.array([(ob.drift - 0.5 * ob.vol**2) for ob in pf.obligors]) * h.t
    v0f = np.array([ob.initial_value / ob.face_value for ob in pf.obligors])
    weights = pf.weights
    n_eff, c = params.n_eff, params.c

    out = np.empty(cfg.num_samples, dtype=float)
    n_batches = math.ceil(cfg.num_samples / cfg.batch_size)

    def run_batch(i: int) -> None:
        start = i * cfg.batch_size
        n = min(cfg.batch_size, cfg.num_samples - start)
        rng = _batch_generator(cfg.seed, i)
        z = rng.gamma(0.5 * n_eff, 2.0, size=n)
        xi0 = rng.standard_normal(n)
        xi = rng.standard_normal((n, k))
        out[start:start + n] = kernels.mc_losses(z, xi0, xi, sig, ito, v0f,
                                                 weights, c, n_eff)

    if threads > 1 and n_batches > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_batch, range(n_batches)))
    else:
        for i in range(n_batches):
            run_batch(i)
    return LossSamples(values=out, config=cfg,
                       fingerprint=_fingerprint(pf, params, h, cfg))


def default_loss_edges(n_bins: int = 200, lo: float = 1e-5) -> np.ndarray:
    """Log-spaced loss bins on [lo, 1]; the atom at L = 0 is tracked separately."""
    return np.logspace(math.log10(lo), 0.0, n_bins + 1)


def histogram(samples: LossSamples, edges) -> EmpiricalDensity:
    """Bin the loss draws; densities are normalized by the total draw count."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or not np.all(np.diff(edges) > 0.0):
        raise ValidationError("edges must be a strictly increasing 1-D array")
    v = samples.values
    if v.size == 0:
        raise ValidationError("empty sample set")
    counts, _ = np.histogram(v, bins=edges)
    widths = np.diff(edges)
    n_total = v.size
    density = counts / (n_total * widths)
    stderr = np.sqrt(counts) / (n_total * widths)
    n_zero = int(np.count_nonzero(v == 0.0))
    n_below = int(np.count_nonzero((v > 0.0) & (v < edges[0]))) + (
        n_zero if edges[0] > 0.0 else 0)
    n_above = int(np.count_nonzero(v > edges[-1]))
    return EmpiricalDensity(edges=edges, counts=counts, density=density,
                            stderr=stderr, n_total=n_total, n_zero=n_zero,
                            n_below=n_below, n_above=n_above)


def _curve_bin_masses(curve: DensityCurve, edges: np.ndarray) -> np.ndarray:
    x, y = curve.abscissae, curve.values
    if edges[0] < x[0] - 1e-12 or edges[-1] > x[-1] + 1e-12:
        raise DataError(
            "analytic curve does not cover the histogram support "
            f"(curve [{x[0]:g}, {x[-1]:g}], bins [{edges[0]:g}, {edges[-1]:g}])"
        )
    cum = np.concatenate([[0.0], cumulative_trapezoid(y, x)])
    at_edges = np.interp(edges, x, cum)
    return np.diff(at_edges)


def compare_density(emp: EmpiricalDensity, analytic, min_count: int = 100,
                    chi2_threshold: float = 1.5, z_threshold: float = 4.0,
                    ) -> ComparisonReport:
    """Per-bin z-scores and chi-square of a histogram against an analytic density.

    ``analytic`` is either a DensityCurve (bin masses by trapezoid
    integration of the sampled curve) or a LossMixture (exact bin masses).
    Only bins with at least ``min_count`` observed entries enter the
    statistics; expected-count variance is used for the z-scores.
    """
    edges = emp.edges
    if isinstance(analytic, LossMixture):
        p = analytic.bin_masses(edges)
    else:
        p = _curve_bin_masses(analytic, edges)
    n = emp.n_total
    use = emp.counts >= min_count
    if not np.any(use):
        raise DataError(f"no histogram bin reaches min_count={min_count}")
    p_use = np.maximum(p[use], 1e-300)
    z = (emp.counts[use] - n * p_use) / np.sqrt(n * p_use * (1.0 - p_use))
    chi2 = float(np.sum(z * z))
    n_bins = int(np.count_nonzero(use))
    max_abs_z = float(np.max(np.abs(z)))
    passed = (chi2 / n_bins < chi2_threshold) and (max_abs_z < z_threshold)
    details = {
        "bin_lo": edges[:-1][use],
        "bin_hi": edges[1:][use],
        "count": emp.counts[use],
        "expected": n * p_use,
        "z": z,
    }
    return ComparisonReport(chi2_per_dof=chi2 / n_bins, max_abs_z=max_abs_z,
                            n_bins=n_bins, passed=passed,
                            chi2_threshold=chi2_threshold,
                            z_threshold=z_threshold, min_count=min_count,
                            details=details)

"""Ensemble-averaged return distributions and their exact samplers.

The working model: on short intervals returns are multivariate Gaussian with
covariance Sigma; averaging Sigma over a Wishart-distributed family that
fluctuates around the mean produces a Bessel-K shaped multivariate density
controlled by two parameters, the mean pairwise correlation c and the
fluctuation strength N. The same average has an exact compound
representation

    r | z  ~  Normal(0, (z/N) Sigma),      z ~ chi-square(N),

valid for any real N > 0, which is what the sampler uses (no K x N model
matrices are ever formed, so fractional N is fine).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .errors import ValidationError
from .numerics import (
    DEFAULT_QUADRATURE,
    QuadratureConfig,
    bessel_k_log,
    converge_by_doubling,
    gauss_laguerre,
)

__all__ = [
    "EnsembleParams",
    "CovarianceSpec",
    "DensityCurve",
    "gaussian_density",
    "averaged_density",
    "averaged_density_onefactor",
    "univariate_rescaled_density",
    "univariate_rescaled_logpdf",
    "sample_returns",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class EnsembleParams:
    """The two macroscopic parameters: mean correlation c, fluctuation N.

    c = 1 is rejected (the one-factor formulas divide by 1 - c) and
    n_eff must exceed 2 so the compound representation has finite
    covariance.
    """

    c: float
    n_eff: float

    def __post_init__(self):
        if not 0.0 <= self.c < 1.0:
            raise ValidationError(f"need 0 <= c < 1, got c={self.c}")
        if not self.n_eff > 2.0:
            raise ValidationError(f"need n_eff > 2, got n_eff={self.n_eff}")


@dataclass(frozen=True)
class CovarianceSpec:
    """Volatility vector plus correlation structure (full matrix or one-factor).

    Exactly one of ``correlation`` (full symmetric matrix) and ``c``
    (one-factor parameter, all off-diagonals equal) is set. The covariance is
    Sigma = diag(vols) C diag(vols).
    """

    vols: np.ndarray
    correlation: np.ndarray | None = None
    c: float | None = None

    def __post_init__(self):
        vols = np.atleast_1d(np.asarray(self.vols, dtype=float))
        object.__setattr__(self, "vols", vols)
        if vols.ndim != 1 or not np.all(vols > 0.0):
            raise ValidationError("vols must be a 1-D vector of positive reals")
        if (self.correlation is None) == (self.c is None):
            raise ValidationError("set exactly one of correlation matrix or c")
        if self.c is not None:
            if not 0.0 <= self.c < 1.0:
                raise ValidationError(f"one-factor c must be in [0, 1), got {self.c}")
        else:
            corr = np.asarray(self.correlation, dtype=float)
            object.__setattr__(self, "correlation", corr)
            k = vols.size
            if corr.shape != (k, k):
                raise ValidationError(f"correlation must be {k}x{k}, got {corr.shape}")
            if np.abs(corr - corr.T).max() > 1e-10:
                raise ValidationError("correlation matrix must be symmetric")
            if np.abs(np.diag(corr) - 1.0).max() > 1e-12:
                raise ValidationError("correlation diagonal must be all ones")
            if np.abs(corr).max() > 1.0 + 1e-12:
                raise ValidationError("correlation entries must lie in [-1, 1]")

    @classmethod
    def one_factor(cls, vols, c: float) -> "CovarianceSpec":
        return cls(vols=np.asarray(vols, dtype=float), c=float(c))

    @classmethod
    def full(cls, vols, correlation) -> "CovarianceSpec":
        return cls(vols=np.asarray(vols, dtype=float),
                   correlation=np.asarray(correlation, dtype=float))

    @property
    def dim(self) -> int:
        return self.vols.size

    def correlation_matrix(self) -> np.ndarray:
        if self.correlation is not None:
            return self.correlation
        k = self.dim
        return (1.0 - self.c) * np.eye(k) + self.c * np.ones((k, k))

    def sigma(self) -> np.ndarray:
        corr = self.correlation_matrix()
        return corr * np.outer(self.vols, self.vols)


@dataclass(frozen=True)
class DensityCurve:
    """A sampled probability density on a strictly increasing grid."""

    abscissae: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.abscissae, dtype=float)
        y = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "abscissae", x)
        object.__setattr__(self, "values", y)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValidationError("abscissae and values must be 1-D of equal length")
        if x.size > 1 and not np.all(np.diff(x) > 0.0):
            raise ValidationError("abscissae must be strictly increasing")
        if np.any(y < 0.0):
            raise ValidationError("density values must be nonnegative")

    def mass(self) -> float:
        """Trapezoidal integral over the stored grid."""
        return float(np.trapezoid(self.values, self.abscissae))


def _chol_sigma(cov: CovarianceSpec):
    try:
        return cho_factor(cov.sigma(), lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValidationError("covariance matrix is singular or not positive definite") from exc


def gaussian_density(r, cov: CovarianceSpec) -> float:
    """Multivariate Gaussian density at the return point r."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if r.size != cov.dim:
        raise ValidationError(f"point has dim {r.size}, covariance has {cov.dim}")
    chol, lower = _chol_sigma(cov)
    q = float(r @ cho_solve((chol, lower), r))
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return math.exp(-0.5 * (cov.dim * _LOG_2PI + logdet + q))


def averaged_density(r, cov: CovarianceSpec, n_eff: float) -> float:
    """Wishart-averaged multivariate return density (Bessel-K form).

    Evaluated in log space; the Bessel order is (K - N)/2. At a bilinear form
    of exactly zero the expression diverges whenever K >= n_eff, which is
    rejected; for K < n_eff the finite small-argument limit is returned.
    """
    if n_eff <= 0.0:
        raise ValidationError(f"n_eff must be > 0, got {n_eff}")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    k = cov.dim
    if r.size != k:
        raise ValidationError(f"point has dim {r.size}, covariance has {k}")
    chol, lower = _chol_sigma(cov)
    q = float(r @ cho_solve((chol, lower), r))
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    nu = 0.5 * (k - n_eff)
    log_pref = (
        0.5 * k * math.log(n_eff)
        - 0.5 * (n_eff - 2.0) * math.log(2.0)
        - math.lgamma(0.5 * n_eff)
        - 0.5 * (k * _LOG_2PI + logdet)
    )
    s = math.sqrt(n_eff * q)
    if s == 0.0:
        if k >= n_eff:
            raise ValidationError(
                "averaged density diverges at bilinear form 0 when K >= n_eff"
            )
        anu = -nu
        return math.exp(log_pref + (anu - 1.0) * math.log(2.0) + math.lgamma(anu))
    return math.exp(log_pref + bessel_k_log(nu, s) - nu * math.log(s))


def _onefactor_quad(r, vols, c, n_eff, n_z, n_u):
    """Double-quadrature evaluation of the one-factor averaged density."""
    from scipy.special import roots_hermite

    rule_z = gauss_laguerre(0.5 * n_eff - 1.0, n_z)
    z = 2.0 * rule_z.nodes
    log_wz = np.log(rule_z.weights) - math.lgamma(0.5 * n_eff)
    x, w = roots_hermite(n_u)
    # per-z scaled Hermite rule for the weight e^{-N u^2 / (2 z)}
    stretch = np.sqrt(2.0 * z / n_eff)[:, None]
    u = x[None, :] * stretch
    log_wu = np.log(w)[None, :] + np.log(stretch)
    log_pref_u = 0.5 * (np.log(n_eff) - np.log(2.0 * math.pi * z))
    var = (z * (1.0 - c) / n_eff)[:, None, None] * (vols**2)[None, None, :]
    shift = (r[None, None, :] + math.sqrt(c) * u[:, :, None] * vols[None, None, :])
    log_inner = np.sum(-0.5 * (_LOG_2PI + np.log(var)) - shift**2 / (2.0 * var), axis=2)
    return float(np.exp(logsumexp(
        log_wz[:, None] + log_pref_u[:, None] + log_wu + log_inner
    )))


def averaged_density_onefactor(r, vols, params: EnsembleParams,
                               config: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """One-factor averaged density via the z and u quadratures.

    Agrees with ``averaged_density`` under the equal-correlation matrix; the
    quadrature orders are doubled until two successive results agree to
    config.rtol.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    vols = np.atleast_1d(np.asarray(vols, dtype=float))
    if not np.all(vols > 0.0):
        raise ValidationError("vols must be positive")
    if r.size != vols.size:
        raise ValidationError(f"point has dim {r.size}, vols has {vols.size}")
    ratio = config.n_u / config.n_z

    def estimate(n):
        return _onefactor_quad(r, vols, params.c, params.n_eff, n, max(1, round(n * ratio)))

    return converge_by_doubling(estimate, config.n_z, config.rtol, config.max_doublings)


def univariate_rescaled_logpdf(r_tilde, n_eff: float):
    """log of the single rescaled-return density (unit variance family)."""
    if n_eff <= 0.0:
        raise ValidationError(f"n_eff must be > 0, got {n_eff}")
    r = np.asarray(r_tilde, dtype=float)
    x = math.sqrt(n_eff) * np.abs(r)
    log_pref = (
        0.5 * (1.0 - n_eff) * math.log(2.0)
        + 0.5 * math.log(n_eff)
        - 0.5 * math.log(math.pi)
        - math.lgamma(0.5 * n_eff)
    )
    half = 0.5 * (n_eff - 1.0)
    out = np.empty_like(x)
    zero = x == 0.0
    if np.any(zero):
        if n_eff <= 1.0:
            out[zero] = np.inf
        else:
            # small-argument limit: x^half K_half(x) -> 2^(half-1) Gamma(half)
            out[zero] = log_pref + (half - 1.0) * math.log(2.0) + math.lgamma(half)
    nz = ~zero
    if np.any(nz):
        xs = x[nz]
        out[nz] = log_pref + half * np.log(xs) + bessel_k_log(half, xs)
    return float(out) if np.isscalar(r_tilde) else out


def univariate_rescaled_density(r_tilde, n_eff: float):
    """Density of one rotated-and-rescaled return; heavy-tailed, unit variance."""
    return np.exp(univariate_rescaled_logpdf(r_tilde, n_eff))


def _batch_generator(seed: int, batch_index: int) -> np.random.Generator:
    """Counter-based stream for one batch, fixed by (seed, batch index)."""
    ss = np.random.SeedSequence(seed, spawn_key=(batch_index,))
    return np.random.Generator(np.random.Philox(ss))


def sample_returns(cov: CovarianceSpec, n_eff: float, count: int, seed: int,
                   batch_size: int = 262144) -> np.ndarray:
    """Draw i.i.d. return vectors from the averaged distribution.

    Compound scheme: z ~ Gamma(N/2, scale 2) (a chi-square with fractional
    dof), then a Gaussian with covariance (z/N) Sigma. The one-factor spec
    uses the O(K) construction sig_k sqrt(z/N) (sqrt(c) xi0 + sqrt(1-c) xi_k);
    a full correlation matrix goes through its Cholesky factor. Deterministic
    given seed: batch i uses the stream (seed, i), results are concatenated
    in batch order.
    """
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    if n_eff <= 0.0:
        raise ValidationError(f"n_eff must be > 0, got {n_eff}")
    k = cov.dim
    one_factor = cov.c is not None
    if not one_factor:
        try:
            chol = np.linalg.cholesky(cov.correlation_matrix())
        except np.linalg.LinAlgError as exc:
            raise ValidationError("correlation matrix is not positive definite") from exc
    out = np.empty((count, k), dtype=float)
    start = 0
    for batch in range(math.ceil(count / batch_size)):
        n = min(batch_size, count - start)
        rng = _batch_generator(seed, batch)
        z = rng.gamma(0.5 * n_eff, 2.0, size=n)
        scale = np.sqrt(z / n_eff)[:, None]
        if one_factor:
            xi0 = rng.standard_normal(n)
            xi = rng.standard_normal((n, k))
            mix = math.sqrt(cov.c) * xi0[:, None] + math.sqrt(1.0 - cov.c) * xi
        else:
            mix = rng.standard_normal((n, k)) @ chol.T
        out[start:start + n] = cov.vols[None, :] * scale * mix
        start += n
    return out

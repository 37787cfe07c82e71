"""Special functions, quadrature rules, root finding and eigendecomposition.

Everything here is pure and reentrant. The quadrature rules are thin,
validated wrappers around Golub-Welsch node computations; the Bessel function
and the normal CDF wrap vetted scipy.special routines (the accuracy contract,
not the implementation, is what matters to callers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sp
from scipy.optimize import brentq

from .errors import BracketError, QuadratureError, ValidationError

__all__ = [
    "QuadratureRule",
    "QuadratureConfig",
    "bessel_k",
    "gauss_laguerre",
    "gauss_hermite_scaled",
    "std_normal_cdf",
    "std_normal_logcdf",
    "bracketed_root",
    "sym_eigen",
]

# K_nu(x) drops below the smallest positive double near x ~ 746; beyond that
# we return 0 rather than raising.
BESSEL_UNDERFLOW_X = 746.0


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a Gaussian quadrature rule.

    ``kind`` records the weight function: ``generalized-laguerre(alpha)``
    integrates against t^alpha e^{-t} on (0, inf); ``hermite-like(scale)``
    against e^{-scale u^2} on the real line.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    order: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValidationError("nodes and weights must be 1-D of equal length")
        if not np.all(weights > 0.0):
            raise ValidationError("quadrature weights must be strictly positive")
        if nodes.size > 1 and not np.all(np.diff(nodes) > 0.0):
            raise ValidationError("quadrature nodes must be strictly increasing")

    def integrate(self, f) -> float:
        """Apply the rule to a callable; nodes are summed in index order."""
        return float(np.dot(self.weights, f(self.nodes)))


@dataclass(frozen=True)
class QuadratureConfig:
    """Defaults and adaptivity knobs for the density quadratures.

    ``n_z``/``n_u`` are starting orders; on a convergence miss the order is
    doubled until two successive results agree to ``rtol`` (relative, with an
    absolute floor scaled off the larger result), at most ``max_doublings``
    times. ``mesh_theta``/``mesh_order`` control how finely the correlation
    integral resolves the Gaussian loss kernels(see portfolio_loss), and
    ``sd_floor`` is the kernel width used when the conditional variance
    degenerates to zero.
    """

    n_z: int = 64
    n_u: int = 64
    rtol: float = 1e-8
    max_doublings: int = 3
    mesh_theta: float = 0.35
    mesh_order: int = 8
    mesh_weight_cut: float = 1e-16
    sd_floor: float = 1e-12

    def __post_init__(self):
        if self.n_z < 1 or self.n_u < 1:
            raise ValidationError("quadrature orders must be >= 1")


DEFAULT_QUADRATURE = QuadratureConfig()


def bessel_k(nu: float, x):
    """Modified Bessel function of the second kind, K_nu(x), real order.

    Accepts scalar or array ``x``; every element must be > 0. Underflows to
    0.0 for x beyond ~746. Raises OverflowError where the true value exceeds
    the double range (small x with large |nu|).
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0.0):
        raise ValidationError(f"bessel_k requires x > 0, got {x!r}")
    out = sp.kv(nu, x_arr)
    if np.any(np.isinf(out)):
        raise OverflowError(
            f"K_nu overflows double precision at nu={nu}, x={x!r}"
        )
    return float(out) if np.isscalar(x) else out


def bessel_k_log(nu: float, x):
    """log K_nu(x) evaluated without overflow, via the scaled Bessel function."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0.0):
        raise ValidationError(f"bessel_k_log requires x > 0, got {x!r}")
    out = np.log(sp.kve(nu, x_arr)) - x_arr
    return float(out) if np.isscalar(x) else out


def gauss_laguerre(alpha: float, n: int) -> QuadratureRule:
    """Generalized Gauss-Laguerre rule: weight t^alpha e^{-t} on (0, inf).

    Nodes come from the (values-only, always stable) Jacobi-matrix
    eigenproblem; weights from the Christoffel sum of the orthonormal
    recurrence, carried with a running rescale so they keep full relative
    precision at orders where direct polynomial evaluation overflows.
    """
    if alpha <= -1.0:
        raise ValidationError(f"generalized Laguerre needs alpha > -1, got {alpha}")
    if n < 1:
        raise ValidationError("order must be >= 1")
    from scipy.linalg import eigvalsh_tridiagonal

    i = np.arange(n, dtype=float)
    diag = 2.0 * i + alpha + 1.0
    off = np.sqrt(i[1:] * (i[1:] + alpha))
    try:
        if n == 1:
            nodes = np.array([alpha + 1.0])
        else:
            nodes = eigvalsh_tridiagonal(diag, off)
    except np.linalg.LinAlgError as exc:
        raise QuadratureError(f"node computation failed for alpha={alpha}, n={n}") from exc
    if not np.all(np.isfinite(nodes)):
        raise QuadratureError(f"node computation failed for alpha={alpha}, n={n}")

    # w_i = mu0 / sum_j p_j(x_i)^2 with p_j orthonormal; the sum grows like
    # e^{x_i}, so rescale per node and track the log of the factor
    p_prev = np.zeros(n)
    p_cur = np.ones(n)
    ssum = np.ones(n)
    logscale = np.zeros(n)
    for j in range(n - 1):
        p_next = ((nodes - diag[j]) * p_cur - (off[j - 1] if j > 0 else 0.0) * p_prev) / off[j]
        p_prev, p_cur = p_cur, p_next
        ssum = ssum + p_cur**2
        big = np.abs(p_cur) > 1e120
        if np.any(big):
            p_prev[big] *= 1e-120
            p_cur[big] *= 1e-120
            ssum[big] *= 1e-240
            logscale[big] += 240.0 * math.log(10.0)
    log_w = math.lgamma(alpha + 1.0) - (np.log(ssum) + logscale)
    weights = np.exp(log_w)
    # weights that underflow double precision entirely contribute nothing
    keep = weights > 0.0
    return QuadratureRule(nodes[keep], weights[keep],
                          f"generalized-laguerre({alpha})", n)


def gauss_hermite_scaled(scale: float, n: int) -> QuadratureRule:
    """Gauss-Hermite rule rescaled to the weight e^{-scale u^2} on R."""
    if scale <= 0.0:
        raise ValidationError(f"scale must be > 0, got {scale}")
    if n < 1:
        raise ValidationError("order must be >= 1")
    x, w = sp.roots_hermite(n)
    root = math.sqrt(scale)
    keep = w > 0.0
    return QuadratureRule(x[keep] / root, w[keep] / root,
                          f"hermite-like({scale})", n)


def std_normal_cdf(x):
    """Standard normal CDF Phi(x)."""
    out = sp.ndtr(x)
    return float(out) if np.isscalar(x) else out


def std_normal_logcdf(x):
    """log Phi(x), stable deep into the left tail."""
    out = sp.log_ndtr(x)
    return float(out) if np.isscalar(x) else out


def bracketed_root(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of a continuous function on a sign-changing bracket.

    Deterministic derivative-free hybrid (Brent). Raises BracketError when
    f(lo) and f(hi) do not have opposite signs, so the caller can widen.
    """
    if not lo < hi:
        raise ValidationError(f"need lo < hi, got [{lo}, {hi}]")
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: f(lo)={f_lo:.6g}, f(hi)={f_hi:.6g}"
        )
    return brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)


def sym_eigen(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns (eigenvalues, eigenvectors) with orthonormal eigenvector columns
    such that m = U diag(lam) U^T.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > 1e-10 * scale:
        raise ValidationError("matrix is not symmetric within tolerance 1e-10")
    lam, vec = np.linalg.eigh(m)
    return lam[::-1].copy(), vec[:, ::-1].copy()


def converge_by_doubling(estimate, n0: int, rtol: float, max_doublings: int,
                         distance=None):
    """Order-doubling convergence loop shared by the density quadratures.

    ``estimate(n)`` produces a result at order n; ``distance(a, b)`` returns a
    relative discrepancy (defaults to |a-b|/max(|b|, tiny) for scalars).
    Returns the converged (finer) estimate. Raises QuadratureError with the
    last two estimates attached if the loop runs out of doublings.
    """
    if distance is None:
        def distance(a, b):
            return abs(a - b) / max(abs(b), 1e-300)

    prev = estimate(n0)
    n = n0
    last_pair = (prev,)
    for _ in range(max_doublings):
        n *= 2
        cur = estimate(n)
        if distance(prev, cur) <= rtol:
            return cur
        last_pair = (prev, cur)
        prev = cur
    raise QuadratureError(
        f"quadrature did not converge after doubling to n={n}",
        last_estimates=last_pair,
    )

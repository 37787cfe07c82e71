"""Pure-numpy implementations of the hot kernels.

Same call signatures as the compiled extension (_core). All functions are
pure; arrays are never modified in place unless explicitly documented.

Parameter conventions shared by both backends, for one obligor group with
face value F, initial value V0, drift mu, volatility rho, horizon T, mean
correlation c and fluctuation parameter N:

    b0  = ln(F/V0) - (mu - rho^2/2) T     distance of the default threshold
    gam = sqrt(c T) rho                   coupling of the common factor u
    s   = rho sqrt(T (1-c) / N)           conditional return spread

Conditional on (z, u) the rescaled terminal return is Gaussian with mean
-gam*u and standard deviation s, defaults happen below b0/sqrt(z), and the
loss moments reduce to linear combinations of normal CDFs with exponentially
tilted arguments.
"""

import numpy as np
from scipy.special import log_ndtr, ndtr

__all__ = [
    "cond_m1",
    "conditional_moments",
    "find_u0_grid",
    "mc_losses",
    "mixture_pdf",
    "mixture_cdf",
    "mixture_sf",
    "mixture_mass",
]


def conditional_moments(z, u, b0, gam, s):
    """First and second conditional loss moments and d(m1)/du.

    ``z`` and ``u`` must broadcast against each other; returns (m1, m2, dm1)
    with the broadcast shape. m1 and m2 are clipped to [0, 1] against
    round-off; the exact cancellation A*phi(d2) == phi(d1) makes dm1 a single
    positive term.
    """
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    sqz = np.sqrt(z)
    d1 = (b0 / sqz + gam * u) / s
    szs = sqz * s
    e1 = -b0 - sqz * (gam * u)
    zs2h = 0.5 * z * (s * s)
    t1 = np.exp(e1 + zs2h + log_ndtr(d1 - szs))
    t2 = np.exp(2.0 * e1 + 4.0 * zs2h + log_ndtr(d1 - 2.0 * szs))
    phi1 = ndtr(d1)
    m1 = np.clip(phi1 - t1, 0.0, 1.0)
    m2 = np.clip(phi1 - 2.0 * t1 + t2, 0.0, 1.0)
    dm1 = gam * sqz * t1
    return m1, m2, dm1


def cond_m1(z, u, b0, gam, s):
    """First conditional moment only (root-finding fast path)."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    sqz = np.sqrt(z)
    d1 = (b0 / sqz + gam * u) / s
    t1 = np.exp(-b0 - sqz * (gam * u) + 0.5 * z * (s * s) + log_ndtr(d1 - sqz * s))
    return np.clip(ndtr(d1) - t1, 0.0, 1.0)


def find_u0_grid(z, L, b0, gam, s, u_lo, u_hi, n_iter=60):
    """Solve m1(z_i, u) = L_j on the (z, L) grid by bisection.

    m1 is strictly increasing in u (gam > 0 required). Returns (u0, ok) of
    shape (len(z), len(L)); entries with ok == False mean the level L is not
    reachable below u_hi and carry u0 = nan.
    """
    z = np.asarray(z, dtype=float)[:, None]
    L = np.asarray(L, dtype=float)[None, :]
    shape = np.broadcast_shapes(z.shape, L.shape)
    lo = np.full(shape, float(u_lo))
    hi = np.full(shape, float(u_hi))
    ok = cond_m1(z, np.full(shape, float(u_hi)), b0, gam, s) >= L
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        above = cond_m1(z, mid, b0, gam, s) >= L
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    u0 = 0.5 * (lo + hi)
    return np.where(ok, u0, np.nan), ok


def mc_losses(z, xi0, xi, sig, ito, v0_over_f, weights, c, n_eff):
    """Portfolio losses for a batch of Monte Carlo draws.

    z: (n,) chi-square draws; xi0: (n,) common factors; xi: (n, K)
    idiosyncratic normals. sig = rho*sqrt(T), ito = (mu - rho^2/2)*T,
    v0_over_f = V0/F and weights = f_k, all per obligor (K,).
    """
    z = np.asarray(z, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    xi = np.asarray(xi, dtype=float)
    scale = np.sqrt(z / n_eff)
    mix = np.sqrt(c) * xi0[:, None] + np.sqrt(1.0 - c) * xi
    r = (scale[:, None] * mix) * sig[None, :]
    lk = 1.0 - v0_over_f[None, :] * np.exp(r + ito[None, :])
    np.maximum(lk, 0.0, out=lk)
    return np.sum(lk * weights[None, :], axis=1)


def _chunked(x, mu, w_over_sd_or_w, sd, combine):
    # (n_x, n_kernel) work split into ~2e7-element chunks to bound memory
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape, dtype=float)
    n_k = mu.size
    step = max(1, int(2e7) // max(1, x.size))
    for a in range(0, n_k, step):
        b = min(n_k, a + step)
        combine(out, x[..., None], w_over_sd_or_w[a:b], mu[a:b], sd[a:b])
    return out


_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def mixture_pdf(x, w, mu, sd):
    """Density of a Gaussian mixture sum_k w_k Normal(mu_k, sd_k) at x."""
    def combine(out, xc, wk, muk, sdk):
        t = (xc - muk) / sdk
        out += np.sum((wk / sdk) * np.exp(-0.5 * t * t), axis=-1)

    return _INV_SQRT_2PI * _chunked(x, mu, w, sd, combine)


def mixture_cdf(x, w, mu, sd):
    """CDF of the Gaussian mixture at x."""
    def combine(out, xc, wk, muk, sdk):
        out += np.sum(wk * ndtr((xc - muk) / sdk), axis=-1)

    return _chunked(x, mu, w, sd, combine)


def mixture_sf(x, w, mu, sd):
    """Upper tail mass of the Gaussian mixture, accurate far above the means."""
    def combine(out, xc, wk, muk, sdk):
        out += np.sum(wk * ndtr((muk - xc) / sdk), axis=-1)

    return _chunked(x, mu, w, sd, combine)


def mixture_mass(a, b, w, mu, sd):
    """Mixture mass on the interval [a, b], per-kernel in the better tail."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    def combine(out, ac_bc, wk, muk, sdk):
        ac, bc = ac_bc
        ta = (ac - muk) / sdk
        tb = (bc - muk) / sdk
        low = ndtr(tb) - ndtr(ta)
        high = ndtr(-ta) - ndtr(-tb)
        out += np.sum(wk * np.where(ta + tb > 0.0, high, low), axis=-1)

    out = np.zeros(a.shape, dtype=float)
    n_k = mu.size
    step = max(1, int(2e7) // max(1, a.size))
    for i in range(0, n_k, step):
        j = min(n_k, i + step)
        combine(out, (a[..., None], b[..., None]), w[i:j], mu[i:j], sd[i:j])
    return out

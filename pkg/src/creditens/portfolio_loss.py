"""Merton portfolio losses under ensemble-averaged correlations.

Conditional on the two latent mixing variables (z, u) the obligors are
independent and each loss moment has a closed form (normal CDFs with
exponentially tilted arguments). The averaged portfolio loss density is then
a Gaussian mixture over the latent measure: a generalized Gauss-Laguerre rule
handles z, and u is covered by an adaptive mesh that refines intervals until
neighbouring kernel means are closer than a fraction of the local kernel
width. That makes pdf, cdf and tail masses of the approximation available in
closed form, including the near-zero spike that a fixed grid cannot resolve.

The infinite-portfolio limit collapses the kernel to a point mass; evaluating
it reduces to a root find in u per z node plus the closed-form derivative of
the first moment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr, roots_legendre

from . import _kernels as kernels
from .ensemble_returns import DensityCurve, EnsembleParams
from .errors import ConsistencyError, QuadratureError, ValidationError
from .numerics import DEFAULT_QUADRATURE, QuadratureConfig, gauss_laguerre

__all__ = [
    "Obligor",
    "Portfolio",
    "HomogeneousSpec",
    "Horizon",
    "LossMixture",
    "individual_loss",
    "portfolio_loss",
    "terminal_value",
    "moment_mjk",
    "moment_mjk_du",
    "aggregate_moments",
    "loss_distribution",
    "loss_density",
    "loss_density_curve",
    "loss_tail_mass",
    "limit_loss_density",
    "limit_loss_curve",
    "limit_tail_mass",
]

# Gaussian weight exp(-N u^2 / 2) underflows past u^2 = 2*745/N; roots beyond
# carry no mass.
_EXP_UNDERFLOW = 745.0


@dataclass(frozen=True)
class Obligor:
    """One credit contract: face value, initial value, drift and volatility.

    Drift is per horizon-unit and volatility per sqrt(horizon-unit); the
    horizon must be expressed in the same unit.
    """

    face_value: float
    initial_value: float
    drift: float
    vol: float

    def __post_init__(self):
        if self.face_value <= 0.0:
            raise ValidationError(f"face_value must be > 0, got {self.face_value}")
        if self.initial_value <= 0.0:
            raise ValidationError(f"initial_value must be > 0, got {self.initial_value}")
        if self.vol <= 0.0:
            raise ValidationError(f"vol must be > 0, got {self.vol}")


@dataclass(frozen=True)
class Horizon:
    """Maturity in horizon-units (months or years)."""

    t: float
    unit: str = "month"

    def __post_init__(self):
        if self.t <= 0.0:
            raise ValidationError(f"maturity must be > 0, got {self.t}")


@dataclass(frozen=True)
class Portfolio:
    """A list of obligors with face-value weights f_k = F_k / sum F_i."""

    obligors: tuple[Obligor, ...]

    def __post_init__(self):
        obligors = tuple(self.obligors)
        object.__setattr__(self, "obligors", obligors)
        if len(obligors) < 1:
            raise ValidationError("portfolio needs at least one obligor")

    @property
    def size(self) -> int:
        return len(self.obligors)

    @property
    def weights(self) -> np.ndarray:
        faces = np.array([ob.face_value for ob in self.obligors])
        return faces / faces.sum()


@dataclass(frozen=True)
class HomogeneousSpec:
    """Homogeneous portfolio: every obligor shares F0, V0, mu0, rho0.

    ``k`` is the number of obligors; k=None denotes the infinite-portfolio
    limit and is only accepted by the limit functions.
    """

    f0: float
    v0: float
    mu0: float
    rho0: float
    k: int | None

    def __post_init__(self):
        if self.f0 <= 0.0 or self.v0 <= 0.0 or self.rho0 <= 0.0:
            raise ValidationError("f0, v0, rho0 must all be > 0")
        if self.k is not None and self.k < 1:
            raise ValidationError(f"k must be >= 1 (or None for the limit), got {self.k}")

    def obligor(self) -> Obligor:
        return Obligor(self.f0, self.v0, self.mu0, self.rho0)

    def to_portfolio(self) -> Portfolio:
        if self.k is None:
            raise ValidationError("infinite spec has no finite portfolio")
        return Portfolio(tuple(self.obligor() for _ in range(self.k)))


def individual_loss(v_t, face: float):
    """Normalized loss of one contract: (F - V_T)/F when V_T < F, else 0."""
    if face <= 0.0:
        raise ValidationError(f"face must be > 0, got {face}")
    v = np.asarray(v_t, dtype=float)
    if np.any(v < 0.0):
        raise ValidationError("terminal value must be nonnegative")
    out = np.maximum(1.0 - v / face, 0.0)
    return float(out) if np.isscalar(v_t) else out


def portfolio_loss(losses, weights) -> float:
    """Face-value weighted portfolio loss sum f_k L_k."""
    losses = np.asarray(losses, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if losses.shape != weights.shape:
        raise ValidationError(
            f"losses and weights length mismatch: {losses.shape} vs {weights.shape}"
        )
    if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValidationError("weights must be positive and sum to 1")
    return float(np.dot(weights, losses))


def terminal_value(r, ob: Obligor, h: Horizon):
    """Map a centered return to the terminal value V(T) = V0 e^{r + (mu - rho^2/2) T}."""
    drift_term = (ob.drift - 0.5 * ob.vol**2) * h.t
    out = ob.initial_value * np.exp(np.asarray(r, dtype=float) + drift_term)
    return float(out) if np.isscalar(r) else out


# ---------------------------------------------------------------------------
# Conditional moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Group:
    """Obligors sharing (F, V0, mu, rho): one moment evaluation for all."""

    b0: float      # ln(F/V0) - (mu - rho^2/2) T
    gam: float     # sqrt(c T) rho
    s: float       # rho sqrt(T (1-c)/N)
    count: int
    weight: float  # per-member portfolio weight f_k


def _make_group(ob: Obligor, params: EnsembleParams, h: Horizon,
                count: int = 1, weight: float = 1.0) -> _Group:
    t = h.t
    b0 = math.log(ob.face_value / ob.initial_value) - (ob.drift - 0.5 * ob.vol**2) * t
    gam = math.sqrt(params.c * t) * ob.vol
    s = ob.vol * math.sqrt(t * (1.0 - params.c) / params.n_eff)
    return _Group(b0=b0, gam=gam, s=s, count=count, weight=weight)


def _groups_from(pf: Portfolio | HomogeneousSpec, params: EnsembleParams,
                 h: Horizon) -> list[_Group]:
    if isinstance(pf, HomogeneousSpec):
        if pf.k is None:
            raise ValidationError("finite-K machinery needs a finite portfolio size")
        return [_make_group(pf.obligor(), params, h, count=pf.k, weight=1.0 / pf.k)]
    weights = pf.weights
    seen: dict[tuple, list] = {}
    for ob, w in zip(pf.obligors, weights):
        key = (ob.face_value, ob.initial_value, ob.drift, ob.vol)
        entry = seen.setdefault(key, [ob, 0, w])
        entry[1] += 1
    groups = []
    for ob, count, w in seen.values():
        groups.append(_make_group(ob, params, h, count=count, weight=float(w)))
    return groups


def moment_mjk(j: int, z: float, u: float, ob: Obligor, params: EnsembleParams,
               h: Horizon) -> float:
    """Conditional loss moment m_jk(z, u) of order j in {1, 2}, closed form."""
    if j not in (1, 2):
        raise ValidationError(f"moment order must be 1 or 2, got {j}")
    if z <= 0.0:
        raise ValidationError(f"z must be > 0, got {z}")
    g = _make_group(ob, params, h)
    m1, m2, _ = kernels.conditional_moments(z, u, g.b0, g.gam, g.s)
    return float(m1) if j == 1 else float(m2)


def moment_mjk_du(z: float, u: float, ob: Obligor, params: EnsembleParams,
                  h: Horizon) -> float:
    """Closed-form partial derivative of the first moment with respect to u.

    The normal-pdf terms produced by differentiating the CDF arguments cancel
    exactly against each other; what survives is sqrt(z c T) rho times the
    tilted CDF term.
    """
    if z <= 0.0:
        raise ValidationError(f"z must be > 0, got {z}")
    g = _make_group(ob, params, h)
    _, _, dm1 = kernels.conditional_moments(z, u, g.b0, g.gam, g.s)
    return float(dm1)


def _aggregate_arrays(z, u, groups):
    """Portfolio-level M1(z, u) and M2(z, u) over broadcastable arrays."""
    m1_total = 0.0
    var_total = 0.0
    for g in groups:
        m1, m2, _ = kernels.conditional_moments(z, u, g.b0, g.gam, g.s)
        m1_total = m1_total + g.count * g.weight * m1
        var_total = var_total + g.count * g.weight**2 * (m2 - m1 * m1)
    return m1_total, var_total


def aggregate_moments(z: float, u: float, pf: Portfolio, params: EnsembleParams,
                      h: Horizon) -> tuple[float, float]:
    """(M1, M2): conditional mean and variance of the portfolio loss at (z, u)."""
    if z <= 0.0:
        raise ValidationError(f"z must be > 0, got {z}")
    groups = _groups_from(pf, params, h)
    m1, m2 = _aggregate_arrays(np.float64(z), np.float64(u), groups)
    m1, m2 = float(m1), float(m2)
    if m2 < -1e-14:
        raise ConsistencyError(f"aggregate variance {m2} below round-off floor")
    return m1, max(m2, 0.0)


# ---------------------------------------------------------------------------
# Averaged loss density: Gaussian mixture over the latent (z, u) measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossMixture:
    """Gaussian-mixture form of the averaged loss density at finite K.

    Each latent quadrature node contributes weight * Normal(mean, sd). The
    kernels integrate to one over the whole real line, so ``total_weight`` is
    the full-line mass of the represented density; mass escaping [0, 1] is an
    artifact of the second-order approximation and is reported, not clipped.
    """

    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def pdf(self, x):
        out = kernels.mixture_pdf(np.asarray(x, dtype=float), self.weights,
                                  self.means, self.sds)
        return float(out) if np.isscalar(x) else out

    def cdf(self, x):
        out = kernels.mixture_cdf(np.asarray(x, dtype=float), self.weights,
                                  self.means, self.sds)
        return float(out) if np.isscalar(x) else out

    def tail_mass(self, x):
        """P(L > x), exact per kernel (no curve integration)."""
        out = kernels.mixture_sf(np.asarray(x, dtype=float), self.weights,
                                 self.means, self.sds)
        return float(out) if np.isscalar(x) else out

    def mass(self, a, b):
        """Mass on [a, b]."""
        out = kernels.mixture_mass(np.atleast_1d(np.asarray(a, dtype=float)),
                                   np.atleast_1d(np.asarray(b, dtype=float)),
                                   self.weights, self.means, self.sds)
        return float(out[0]) if np.isscalar(a) else out

    def bin_masses(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        return self.mass(edges[:-1], edges[1:])

    def mean(self) -> float:
        """Full-line mean of the represented density."""
        return float(np.dot(self.weights, self.means))


def _u_mesh_kernels(z, wz, groups, n_eff, cfg: QuadratureConfig):
    """Adaptive u-mesh per z node; returns flat kernel (weights, means, sds).

    Intervals on [-a, a] are bisected until the kernel means at the endpoints
    differ by at most mesh_theta times the smaller endpoint kernel width
    (floored), so that the resulting Gaussian mixture is smooth in L at every
    scale the quadrature can see. Intervals whose Gaussian u-weight has
    underflown past mesh_weight_cut are never refined.
    """
    n_z = z.size
    a = 12.0 / math.sqrt(n_eff)
    n0 = 33
    u0 = np.linspace(-a, a, n0)
    z2 = np.repeat(z, n0)
    u2 = np.tile(u0, n_z)
    m1, var = _aggregate_arrays(z2, u2, groups)
    m1 = m1.reshape(n_z, n0)
    sd = np.sqrt(np.maximum(var.reshape(n_z, n0), 0.0))

    zi = np.repeat(np.arange(n_z), n0 - 1)
    ul = np.tile(u0[:-1], n_z)
    ur = np.tile(u0[1:], n_z)
    m1l = m1[:, :-1].ravel()
    m1r = m1[:, 1:].ravel()
    sdl = sd[:, :-1].ravel()
    sdr = sd[:, 1:].ravel()

    done = []
    max_total = 500_000
    total = zi.size
    for _ in range(64):
        straddle = (ul < 0.0) & (ur > 0.0)
        min_abs_u = np.where(straddle, 0.0, np.minimum(np.abs(ul), np.abs(ur)))
        log_w = -0.5 * n_eff * min_abs_u**2
        alive = log_w > math.log(cfg.mesh_weight_cut)
        width_floor = np.minimum(sdl, sdr)
        width_floor = np.maximum(width_floor, cfg.sd_floor)
        resolved = np.abs(m1r - m1l) <= cfg.mesh_theta * width_floor
        split = alive & ~resolved
        keep = ~split
        done.append((zi[keep], ul[keep], ur[keep]))
        if not np.any(split):
            break
        zi, ul, ur = zi[split], ul[split], ur[split]
        m1l, m1r, sdl, sdr = m1l[split], m1r[split], sdl[split], sdr[split]
        um = 0.5 * (ul + ur)
        m1m, varm = _aggregate_arrays(z[zi], um, groups)
        sdm = np.sqrt(np.maximum(varm, 0.0))
        total += zi.size
        if total > max_total:
            raise QuadratureError("correlation-integral mesh exceeded size budget")
        zi = np.concatenate([zi, zi])
        ul, ur = np.concatenate([ul, um]), np.concatenate([um, ur])
        m1l = np.concatenate([m1l, m1m])
        m1r = np.concatenate([m1m, m1r])
        sdl = np.concatenate([sdl, sdm])
        sdr = np.concatenate([sdm, sdr])
    else:
        raise QuadratureError("correlation-integral mesh failed to resolve kernels")

    zi = np.concatenate([d[0] for d in done])
    ul = np.concatenate([d[1] for d in done])
    ur = np.concatenate([d[2] for d in done])

    xq, wq = roots_legendre(cfg.mesh_order)
    half = 0.5 * (ur - ul)
    mid = 0.5 * (ur + ul)
    un = (mid[:, None] + half[:, None] * xq[None, :]).ravel()
    wn = (half[:, None] * wq[None, :]).ravel()
    zn = np.repeat(z[zi], cfg.mesh_order)
    wzn = np.repeat(wz[zi], cfg.mesh_order)
    m1n, varn = _aggregate_arrays(zn, un, groups)
    sdn = np.maximum(np.sqrt(np.maximum(varn, 0.0)), cfg.sd_floor)
    gauss_w = math.sqrt(n_eff / (2.0 * math.pi)) * np.exp(-0.5 * n_eff * un**2)
    return wzn * wn * gauss_w, m1n, sdn


def loss_distribution(pf: Portfolio | HomogeneousSpec, params: EnsembleParams,
                      h: Horizon, config: QuadratureConfig = DEFAULT_QUADRATURE,
                      n_z: int | None = None) -> LossMixture:
    """Build the Gaussian-mixture loss distribution at fixed quadrature order.

    ``loss_density`` / ``loss_density_curve`` wrap this with order doubling;
    call this directly when repeated evaluations against one build are needed
    (CDF, tail masses, bin masses).
    """
    groups = _groups_from(pf, params, h)
    n = config.n_z if n_z is None else n_z
    rule = gauss_laguerre(0.5 * params.n_eff - 1.0, n)
    z = 2.0 * rule.nodes
    wz = rule.weights / math.gamma(0.5 * params.n_eff)
    w, mu, sd = _u_mesh_kernels(z, wz, groups, params.n_eff, config)
    meta = {"n_z": n, "c": params.c, "n_eff": params.n_eff, "t": h.t,
            "kernels": int(w.size)}
    return LossMixture(weights=w, means=mu, sds=sd, meta=meta)


def _doubling_values(make_values, cfg: QuadratureConfig):
    """Order-doubling on a vector-valued quadrature result."""
    def distance(va, vb):
        scale = max(float(np.max(np.abs(vb))), 1e-300)
        denom = np.maximum(np.abs(vb), 1e-13 * scale)
        return float(np.max(np.abs(va - vb) / denom))

    prev = make_values(cfg.n_z)
    n = cfg.n_z
    last = (prev,)
    for _ in range(cfg.max_doublings):
        n *= 2
        cur = make_values(n)
        if distance(prev, cur) <= cfg.rtol:
            return cur
        last = (prev, cur)
        prev = cur
    raise QuadratureError(f"loss quadrature did not converge at n_z={n}",
                          last_estimates=last)


def loss_density(L, pf: Portfolio | HomogeneousSpec, params: EnsembleParams,
                 h: Horizon, config: QuadratureConfig = DEFAULT_QUADRATURE):
    """Averaged loss density at L (scalar or array), adaptive in the z order."""
    arr = np.atleast_1d(np.asarray(L, dtype=float))
    vals = _doubling_values(
        lambda n: loss_distribution(pf, params, h, config, n_z=n).pdf(arr), config)
    return float(vals[0]) if np.isscalar(L) else vals


def loss_density_curve(grid, pf: Portfolio | HomogeneousSpec, params: EnsembleParams,
                       h: Horizon, config: QuadratureConfig = DEFAULT_QUADRATURE,
                       ) -> DensityCurve:
    grid = np.asarray(grid, dtype=float)
    vals = _doubling_values(
        lambda n: loss_distribution(pf, params, h, config, n_z=n).pdf(grid), config)
    k = pf.k if isinstance(pf, HomogeneousSpec) else pf.size
    meta = {"kind": "loss-density", "K": k, "c": params.c, "n_eff": params.n_eff,
            "t": h.t}
    return DensityCurve(grid, vals, meta)


def loss_tail_mass(x, pf: Portfolio | HomogeneousSpec, params: EnsembleParams,
                   h: Horizon, config: QuadratureConfig = DEFAULT_QUADRATURE):
    """P(L > x) under the averaged finite-K density, adaptive in z order."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    vals = _doubling_values(
        lambda n: loss_distribution(pf, params, h, config, n_z=n).tail_mass(arr),
        config)
    return float(vals[0]) if np.isscalar(x) else vals


# ---------------------------------------------------------------------------
# Infinite-portfolio limit
# ---------------------------------------------------------------------------

def _limit_group(spec: HomogeneousSpec, params: EnsembleParams, h: Horizon) -> _Group:
    if params.c == 0.0:
        raise ValidationError(
            "the infinite-portfolio limit needs c > 0 (at c = 0 the loss "
            "collapses to the deterministic conditional mean in z alone)"
        )
    return _make_group(spec.obligor(), params, h)


def _limit_log_dm1(z, u, g: _Group):
    """log of d(m1)/du on arrays, safe where the derivative underflows."""
    sqz = np.sqrt(z)
    d2 = (g.b0 / sqz + g.gam * u) / g.s - sqz * g.s
    return (math.log(g.gam) + 0.5 * np.log(z) - g.b0 - sqz * (g.gam * u)
            + 0.5 * z * g.s**2 + log_ndtr(d2))


def _limit_values(L, g: _Group, n_eff: float, n_z: int) -> np.ndarray:
    rule = gauss_laguerre(0.5 * n_eff - 1.0, n_z)
    z = 2.0 * rule.nodes
    log_wz = np.log(rule.weights) - math.lgamma(0.5 * n_eff)
    u_max = math.sqrt(2.0 * _EXP_UNDERFLOW / n_eff)
    u0, ok = kernels.find_u0_grid(z, L, g.b0, g.gam, g.s, -u_max, u_max)
    u0f = np.where(ok, u0, 0.0)
    lw = (log_wz[:, None] + 0.5 * math.log(n_eff / (2.0 * math.pi))
          - 0.5 * n_eff * u0f**2 - _limit_log_dm1(z[:, None], u0f, g))
    contrib = np.where(ok, np.exp(lw), 0.0)
    return contrib.sum(axis=0)


def limit_loss_density(L, spec: HomogeneousSpec, params: EnsembleParams,
                       h: Horizon, config: QuadratureConfig = DEFAULT_QUADRATURE):
    """Exact K -> infinity averaged loss density at L in (0, 1).

    Per z node the Gaussian kernel collapses to a point mass at the first
    conditional moment; the density is the u-weight at the matching root over
    the derivative, integrated over z. Roots pushed beyond the range where
    the u-weight underflows contribute nothing.
    """
    arr = np.atleast_1d(np.asarray(L, dtype=float))
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValidationError("limit density is defined for 0 < L < 1")
    g = _limit_group(spec, params, h)
    vals = _doubling_values(lambda n: _limit_values(arr, g, params.n_eff, n), config)
    return float(vals[0]) if np.isscalar(L) else vals


def limit_loss_curve(grid, spec: HomogeneousSpec, params: EnsembleParams,
                     h: Horizon, config: QuadratureConfig = DEFAULT_QUADRATURE,
                     ) -> DensityCurve:
    vals = limit_loss_density(np.asarray(grid, dtype=float), spec, params, h, config)
    meta = {"kind": "loss-density", "K": "inf", "c": params.c,
            "n_eff": params.n_eff, "t": h.t}
    return DensityCurve(np.asarray(grid, dtype=float), vals, meta)


def _limit_tail_values(x, g: _Group, n_eff: float, n_z: int) -> np.ndarray:
    rule = gauss_laguerre(0.5 * n_eff - 1.0, n_z)
    z = 2.0 * rule.nodes
    wz = rule.weights / math.gamma(0.5 * n_eff)
    u_max = math.sqrt(2.0 * _EXP_UNDERFLOW / n_eff)
    u0, ok = kernels.find_u0_grid(z, x, g.b0, g.gam, g.s, -u_max, u_max)
    # P(L > x | z) = P(u > u0(z, x)) with u ~ Normal(0, 1/N)
    p_u = np.where(ok, ndtr(-math.sqrt(n_eff) * np.where(ok, u0, 0.0)), 0.0)
    return wz @ p_u


def limit_tail_mass(x, spec: HomogeneousSpec, params: EnsembleParams,
                    h: Horizon, config: QuadratureConfig = DEFAULT_QUADRATURE):
    """P(L > x) under the limiting density, via the exact conditional CDF."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValidationError("tail threshold must be in (0, 1)")
    g = _limit_group(spec, params, h)
    vals = _doubling_values(lambda n: _limit_tail_values(arr, g, params.n_eff, n),
                            config)
    return float(vals[0]) if np.isscalar(x) else vals

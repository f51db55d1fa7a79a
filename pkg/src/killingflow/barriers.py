"""Barrier families and a priori estimate constants.

Four barrier mechanisms are implemented:

* the expanding radial supersolution built from the CMC profiles (a ball
  whose rim radius R(t) grows so that the profile rises at least as fast
  as any flow below it),
* the resulting sup/inf height bounds on a fixed ball,
* the logarithmic boundary gradient barrier h(d) = log(1 + A d)/L,
* the exponential barrier at infinity over a geodesic halfplane in the
  hyperbolic plane (the strict-convexity barrier).

The module also evaluates the explicit interior-gradient and curvature
bound constants so runs can be checked against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .cmc import eval_vR, eval_vR_prime, sample_vR
from .geometry import (GeometryError, ModelGeometry, R_MIN,
                       _CumulativeIntegral)
from .quadrature import adaptive_simpson


class BarrierError(ValueError):
    pass


# ---------------------------------------------------------------------------
# expanding radial supersolution


@dataclass
class SupersolutionFlow:
    """Rim radius schedule R(t) of the expanding radial supersolution.

    R(t) is defined implicitly by  integral_{r0}^{R} V/A = t, equivalently
    dR/dt = -n H(R) with R(0) = r0.
    """

    model: ModelGeometry
    r0: float

    def __post_init__(self):
        if self.r0 <= 0:
            raise BarrierError("r0 must be positive")
        self._time = _CumulativeIntegral(self._integrand,
                                         self.model.quad_tol,
                                         start=self.r0)

    def _integrand(self, s: float) -> float:
        return self.model.V(s) / self.model.A(s)

    def _time_of(self, R: float) -> float:
        # cumulative integral of V/A from r0, cached on a growing knot list
        return self._time(R)

    def R_of_t(self, t: float) -> float:
        if t < 0:
            raise BarrierError("t must be nonnegative")
        if t == 0.0:
            return self.r0
        hi = self.r0 * 2.0
        while self._time_of(hi) < t:
            hi *= 2.0
            if hi > 1e6 * self.r0:
                raise BarrierError(
                    f"R(t) bracket expansion failed below 1e6*r0 for t={t}")
        return float(brentq(lambda R: self._time_of(R) - t, self.r0, hi,
                            xtol=1e-13, rtol=1e-14))


def mu_of_t(model: ModelGeometry, r0: float, t: float) -> float:
    """Rim radius R(t) = r0 + mu(t) of the radial supersolution."""
    return SupersolutionFlow(model, r0).R_of_t(t)


def eval_u_plus(model: ModelGeometry, r0: float, r: float, t: float,
                flow: SupersolutionFlow | None = None) -> float:
    """Height of the radial supersolution at radius r and time t."""
    if not 0.0 <= r <= r0:
        raise BarrierError(f"need 0 <= r <= r0, got r={r}, r0={r0}")
    R = (flow or SupersolutionFlow(model, r0)).R_of_t(t)
    return eval_vR(model, R, r)


def verify_supersolution(model: ModelGeometry, r0: float,
                         t_grid: np.ndarray, r_grid: np.ndarray,
                         discrete_Q: Callable[[np.ndarray, np.ndarray],
                                              np.ndarray]) -> float:
    """Minimum of d/dt u_plus + Q[u_plus] over the (t, r) grid.

    ``discrete_Q(r_grid, u)`` must return the discrete spatial operator on
    the same nodes (interior values used here).  The supersolution property
    asserts the continuum minimum is >= 0; the caller allows a discretization
    slack.  Time derivative by centered differences, so the first and last
    time slices are excluded, as are the two radial nodes at each end.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    r_grid = np.asarray(r_grid, dtype=float)
    if t_grid.size < 64 or r_grid.size < 64:
        raise BarrierError("grids must have >= 64 points")
    flow = SupersolutionFlow(model, r0)
    u = np.empty((t_grid.size, r_grid.size))
    # quadrature only needs to stay well below the finite-difference error
    # of the residual itself, so don't pay for full model.quad_tol here
    samp_tol = min(1e-8, model.quad_tol * 1e2)
    for a, t in enumerate(t_grid):
        R = flow.R_of_t(float(t))
        u[a] = sample_vR(model, R, r_grid, tol=samp_tol)
    ut = np.gradient(u, t_grid, axis=0)
    worst = math.inf
    for a in range(1, t_grid.size - 1):
        q = discrete_Q(r_grid, u[a])
        res = ut[a] + q
        worst = min(worst, float(np.min(res[2:-2])))
    return worst


def height_bounds(model: ModelGeometry, r0: float, T: float,
                  sup_u0: float) -> tuple[Callable[[float], float],
                                          Callable[[float], float]]:
    """(lower, upper) height evaluators for flows on the ball of radius r0.

    upper(r) = sup|u0| + v_{R(T)}(0) - v_{r0}(r) and lower is its mirror
    image; any solution with |initial data| <= sup_u0 and zero boundary
    motion stays between them up to time T.
    """
    if T <= 0:
        raise BarrierError("T must be positive")
    RT = mu_of_t(model, r0, T)
    cap = eval_vR(model, RT, 0.0)

    def upper(r: float) -> float:
        return sup_u0 + cap - eval_vR(model, r0, r)

    def lower(r: float) -> float:
        return -sup_u0 - cap + eval_vR(model, r0, r)

    return lower, upper


def c0_height_cap(model: ModelGeometry, r0: float, l0: int,
                  samples: int = 1024) -> float:
    """Uniform cap on the supersolution height while R(t) <= l0 * r0.

    Equals sup over (0, l0 r0] of H^2/(rho H') times -1/H(l0 r0).  Requires
    the radial mean curvature to be strictly increasing on the window.
    """
    if l0 < 1:
        raise BarrierError("l0 must be >= 1")
    rmax = l0 * r0
    rs = rmax * np.geomspace(1e-6, 1.0, samples)
    sup = -math.inf
    for r in rs:
        Hp = model.H_prime(float(r))
        if Hp <= 0:
            raise BarrierError(
                f"H'(r) <= 0 at r={r:.6g}; monotonicity premise violated")
        H = model.H(float(r))
        sup = max(sup, H * H / (float(model.rho.value(r)) * Hp))
    return sup * (-1.0 / model.H(rmax))


# ---------------------------------------------------------------------------
# boundary gradient barrier


@dataclass(frozen=True)
class BoundaryBarrier:
    """Logarithmic distance barrier h(d) = log(1 + A d)/L on a collar
    of width d0 inside the boundary, with A = L/(1 - L d0)."""

    L: float
    d0: float
    A_coef: float
    u0_ext: Callable | None = None

    def h(self, d: float) -> float:
        return math.log1p(self.A_coef * d) / self.L

    def h_prime(self, d: float) -> float:
        return self.A_coef / (self.L * (1.0 + self.A_coef * d))

    def h_second(self, d: float) -> float:
        return -self.A_coef ** 2 / (self.L * (1.0 + self.A_coef * d) ** 2)

    def gradient_cap(self, sup_grad_u0_ext: float = 0.0) -> float:
        return sup_grad_u0_ext + self.h_prime(0.0)


def make_boundary_barrier(L: float, d0: float,
                          u0_ext: Callable | None = None) -> BoundaryBarrier:
    if L <= 0:
        raise BarrierError("L must be positive")
    if not 0.0 < d0 < 1.0 / L:
        raise BarrierError(f"need 0 < d0 < 1/L = {1.0 / L}, got d0={d0}")
    return BoundaryBarrier(L=L, d0=d0, A_coef=L / (1.0 - L * d0),
                           u0_ext=u0_ext)


# ---------------------------------------------------------------------------
# barrier at infinity over a geodesic halfplane in the hyperbolic plane
#
# Points of the hyperbolic plane are represented on the hyperboloid
# x1^2 + x2^2 - x3^2 = -1, x3 > 0, with the polar chart
# (r, theta) -> (sinh r cos theta, sinh r sin theta, cosh r).  A complete
# geodesic is the zero set of <x, nu> for a unit spacelike nu; the halfplane
# is U = {<x, nu> > 0} and the signed distance inside U is arcsinh <x, nu>.


def _mink(x, y) -> float:
    return x[0] * y[0] + x[1] * y[1] - x[2] * y[2]


@dataclass(frozen=True)
class GeodesicSpec:
    """Geodesic halfplane U = {<x, nu> > 0}, nu unit spacelike."""

    nu: tuple[float, float, float]

    def __post_init__(self):
        if abs(_mink(self.nu, self.nu) - 1.0) > 1e-10:
            raise BarrierError("nu must be a unit spacelike vector")

    @staticmethod
    def at_distance(a: float) -> "GeodesicSpec":
        """Halfplane whose boundary geodesic sits at distance a from the
        pole, with the pole outside."""
        if a <= 0:
            raise BarrierError("a must be positive")
        return GeodesicSpec((math.cosh(a), 0.0, math.sinh(a)))


def _hyperboloid_point(r: float, theta: float) -> tuple[float, float, float]:
    return (math.sinh(r) * math.cos(theta),
            math.sinh(r) * math.sin(theta),
            math.cosh(r))


@dataclass
class ScBarrier:
    """Upper barrier eta at infinity: constant C off the deep region
    U0 = {d >= d0} and C1 exp(-alpha d) inside it."""

    model: ModelGeometry
    geodesic: GeodesicSpec
    C: float
    d0: float
    alpha: float
    C1: float

    def dist_eval(self, r: float, theta: float) -> float:
        """Signed distance to the boundary geodesic, positive inside U."""
        q = _mink(_hyperboloid_point(r, theta), self.geodesic.nu)
        return math.asinh(q)

    def radial_dist_derivative(self, r: float, theta: float) -> float:
        # d = arcsinh(q(r, theta)); |grad d| = 1 so <grad r, grad d> = d_r d
        nu = self.geodesic.nu
        q = _mink(_hyperboloid_point(r, theta), nu)
        qr = (math.cosh(r) * math.cos(theta) * nu[0]
              + math.cosh(r) * math.sin(theta) * nu[1]
              - math.sinh(r) * nu[2])
        return qr / math.sqrt(1.0 + q * q)

    def eta(self, r: float, theta: float) -> float:
        d = self.dist_eval(r, theta)
        if d <= self.d0:
            return self.C
        return self.C1 * math.exp(-self.alpha * d)


def _sample_deep_region(geodesic: GeodesicSpec, d0: float, count: int,
                        rng: np.random.Generator | None = None,
                        depth_span: float = 5.0,
                        margin: float = 0.0) -> np.ndarray:
    """Sample (r, theta) points with distance in [d0 + margin, d0 + span]."""
    rng = rng or np.random.default_rng(0)
    pts = []
    guard = 0
    while len(pts) < count:
        guard += 1
        if guard > 200 * count:
            raise BarrierError("could not sample the deep region")
        theta = float(rng.uniform(-0.6, 0.6))
        r = float(rng.uniform(0.0, 30.0))
        q = _mink(_hyperboloid_point(r, theta), geodesic.nu)
        d = math.asinh(q) if q > 0 else -1.0
        if d0 + margin <= d <= d0 + margin + depth_span:
            pts.append((r, theta))
    return np.asarray(pts)


def make_sc_barrier(model: ModelGeometry, halfplane_geodesic: GeodesicSpec,
                    C: float, d0: float, samples: int = 400,
                    seed: int = 0) -> ScBarrier:
    """Build the exponential barrier at infinity over a geodesic halfplane.

    Only implemented for the hyperbolic built-in base (the one base with a
    distance-to-convex-set in closed form).  The decay rate alpha is the
    sampled infimum of (rho'/rho) <grad r, grad d> over the deep region; a
    nonpositive infimum (e.g. constant rho) is a construction error, since
    the barrier then cannot decay.
    """
    if model.xi.kind != "hyperbolic":
        raise BarrierError("SC barrier needs the hyperbolic built-in base")
    if d0 < 2.0:
        raise BarrierError("d0 must be >= 2")
    if C <= 0:
        raise BarrierError("barrier height C must be positive")
    probe = ScBarrier(model=model, geodesic=halfplane_geodesic, C=C, d0=d0,
                      alpha=1.0, C1=1.0)
    rng = np.random.default_rng(seed)
    pts = _sample_deep_region(halfplane_geodesic, d0, samples, rng)
    alpha = math.inf
    for r, theta in pts:
        lr = float(model.log_rho_d1(max(r, R_MIN)))
        alpha = min(alpha, lr * probe.radial_dist_derivative(r, theta))
    if not alpha > 0.0:
        raise BarrierError(
            f"decay rate infimum {alpha:.3g} <= 0 at sampling resolution; "
            "the warping must grow (rho'/rho bounded below by a positive "
            "constant) for the barrier to exist")
    return ScBarrier(model=model, geodesic=halfplane_geodesic, C=C, d0=d0,
                     alpha=alpha, C1=C * math.exp(alpha * d0))


def pointwise_Q(model: ModelGeometry, func: Callable[[float, float], float],
                r: float, theta: float, h: float = 1e-3) -> float:
    """Finite-difference evaluation of the graph flow operator at one point.

    Local polar coordinates of the base with metric dr^2 + xi^2 dtheta^2;
    second-order centered stencils of width h.  Used for spot checks of
    smooth analytic fields (barriers), independent of the grid solver.
    """
    if r <= 2 * h:
        raise BarrierError("pointwise_Q needs r away from the pole")
    f0 = func(r, theta)
    fr1 = func(r + h, theta)
    fr0 = func(r - h, theta)
    ft1 = func(r, theta + h)
    ft0 = func(r, theta - h)
    ur = (fr1 - fr0) / (2 * h)
    ut = (ft1 - ft0) / (2 * h)
    urr = (fr1 - 2 * f0 + fr0) / (h * h)
    utt = (ft1 - 2 * f0 + ft0) / (h * h)
    urt = (func(r + h, theta + h) - func(r + h, theta - h)
           - func(r - h, theta + h) + func(r - h, theta - h)) / (4 * h * h)
    xi = float(model.xi.value(r))
    xi1 = float(model.xi.d1(r))
    rho = float(model.rho.value(r))
    lrho = float(model.log_rho_d1(r))
    # covariant Hessian components
    h_rr = urr
    h_rt = urt - (xi1 / xi) * ut
    h_tt = utt + xi * xi1 * ur
    inv_xi2 = 1.0 / (xi * xi)
    grad2 = ur * ur + ut * ut * inv_xi2
    W2 = 1.0 / (rho * rho) + grad2
    lap = h_rr + inv_xi2 * h_tt
    # u^i u^j u_{;ij} with indices raised by the diagonal metric
    uij = (ur * ur * h_rr + 2.0 * ur * (ut * inv_xi2) * h_rt
           + (ut * inv_xi2) ** 2 * h_tt)
    return (lap - uij / W2) + (1.0 + 1.0 / (rho * rho * W2)) * lrho * ur


# ---------------------------------------------------------------------------
# estimate constants


@dataclass(frozen=True)
class GradientBoundReport:
    beta: float
    k: float
    delta: float
    delta_prime: float
    mu_const: float
    C0: float
    log_bound_first: float
    log_bound_second: float
    log_bound: float

    @property
    def bound(self) -> float:
        try:
            return math.exp(self.log_bound)
        except OverflowError:
            return math.inf


def interior_gradient_bound(model: ModelGeometry, R: float, M: float,
                            beta: float, k: float,
                            samples: int = 1024) -> GradientBoundReport:
    """Explicit interior gradient bound constants on the ball of radius R.

    The bound is the larger of two exponential branches; both the raw value
    and its logarithm are reported since the exponent easily overflows.
    Parameter requirements: k > 16, beta close enough to 1 that the derived
    log-scale constant exceeds k and the auxiliary constant mu is positive.
    """
    if R <= 0 or M < 0:
        raise BarrierError("need R > 0 and M >= 0")
    if k <= 16:
        raise BarrierError("k must exceed 16")
    if not 0.75 < beta < 1.0:
        raise BarrierError("beta must lie in (3/4, 1)")
    rs = R * np.geomspace(1e-8, 1.0, samples)
    rho = np.asarray(model.rho.value(rs), dtype=float)
    min_rho = float(np.min(np.append(rho, float(model.rho.value(0.0)))))
    delta = 1.5 * beta - 1.0
    delta_prime = math.log(beta / ((1.0 - beta) * min_rho ** 2))
    if delta_prime <= k:
        raise BarrierError(
            f"beta too small: derived constant {delta_prime:.3f} must "
            f"exceed k={k}")
    mu = 2.0 * beta * (delta * delta_prime - 2.0) / delta_prime
    if mu <= 0:
        raise BarrierError(f"auxiliary constant mu={mu:.3g} not positive")
    zR = model.zeta(R)
    xi = np.asarray(model.xi.value(rs), dtype=float)
    xi1 = np.asarray(model.xi.d1(rs), dtype=float)
    lrho = np.asarray(model.log_rho_d1(rs), dtype=float)
    sq = math.sqrt(1.0 - beta)
    braces = (1.25 + model.n * M * xi1 / zR + 2.0 * sq * xi / zR
              + (M * (6.0 - 5.0 * beta) * xi / zR + 2.0 * sq) * lrho)
    C0 = float(np.max(rho ** 2 / mu * braces))
    shape = (1.0 + min_rho) ** 2 / min_rho
    log_first = 128.0 * shape * M * float(np.max(xi)) / zR
    log_second = 64.0 * shape * M * C0
    return GradientBoundReport(
        beta=beta, k=k, delta=delta, delta_prime=delta_prime, mu_const=mu,
        C0=C0, log_bound_first=log_first, log_bound_second=log_second,
        log_bound=max(log_first, log_second))


def compute_delta_psi(gamma: float, sup_W2: float) -> float:
    """delta_psi = gamma / (2 sup W^2), gamma = inf 1/rho^2."""
    if gamma <= 0 or sup_W2 <= 0:
        raise BarrierError("gamma and sup W^2 must be positive")
    return gamma / (2.0 * sup_W2)


def compute_E_R(delta_psi: float, sup_xi2: float, n: int, zeta_R: float,
                sup_xi_prime: float) -> float:
    """Cutoff-interaction constant of the curvature estimate."""
    if delta_psi <= 0:
        raise BarrierError("delta_psi must be positive")
    return (1.0 / delta_psi + 4.0) * sup_xi2 + n * zeta_R * sup_xi_prime


def curvature_bound(delta_psi: float, L1: float, C_sim: float,
                    C_sim_tilde: float, E_R: float, zeta_R: float,
                    T: float) -> float:
    """Explicit bound on max |A| over the parabolic interior cylinder."""
    if delta_psi <= 0 or T <= 0 or zeta_R <= 0:
        raise BarrierError("delta_psi, zeta_R and T must be positive")
    if min(L1, C_sim, C_sim_tilde, E_R) < 0:
        raise BarrierError("constants must be nonnegative")
    inner = 1.0 + L1 + C_sim_tilde + C_sim + E_R / zeta_R ** 2 + 1.0 / (2 * T)
    return 4.0 / math.sqrt(delta_psi) * math.sqrt(inner)


@dataclass(frozen=True)
class EstimateConstants:
    """Bundle of every estimate constant for one run configuration."""

    beta: float
    delta: float
    delta_prime: float
    mu_const: float
    C0: float
    gamma: float
    delta_psi: float
    E_R: float
    curvature: float
    c0_cap: float
    C_sim: float
    C_sim_tilde: float

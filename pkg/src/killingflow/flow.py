"""Finite-difference solver for the graphical mean curvature flow.

The height u(r, theta, t) of the evolving Killing graph over a geodesic
ball satisfies the quasilinear equation du/dt = Q[u] with

    Q[u] = (g^{ij} - u^i u^j / W^2) u_{i;j}
           + (1 + 1/(rho^2 W^2)) (log rho)' u_r,

written in polar coordinates of the base with metric dr^2 + xi^2 dtheta^2.
The covariant Hessian uses the base Christoffels G^r_tt = -xi xi' and
G^t_rt = xi'/xi.  The chart is singular at the pole; there the operator is
evaluated through the Fourier modes of the first grid ring, which
reconstruct the local Cartesian gradient and Hessian of u.

Time stepping is semi-implicit by default (coefficients lagged one step,
sparse direct solve); explicit Euler is kept as a debugging fallback with
a hard CFL guard.

The same machinery specializes to radial data, where the base dimension n
is arbitrary and everything is one-dimensional.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import barriers
from .geometry import GeometryError, ModelGeometry, R_MIN, ambient_frame


class FlowError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# grid and problem data


@dataclass(frozen=True)
class Grid:
    """Uniform polar grid: nr radial intervals on [0, R], ntheta angles.

    Node (j, i) sits at (j*hr, i*dtheta); row 0 is the pole, row nr the
    Dirichlet boundary.  ntheta = 1 selects the radial fast path.
    """

    R: float
    nr: int
    ntheta: int

    def __post_init__(self):
        if self.R <= 0:
            raise FlowError("R must be positive")
        if self.nr < 8:
            raise FlowError("nr must be >= 8")
        if self.ntheta != 1 and self.ntheta < 8:
            raise FlowError("ntheta must be >= 8 (or exactly 1 for radial)")

    @property
    def hr(self) -> float:
        return self.R / self.nr

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.ntheta

    @property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.nr + 1)

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.ntheta) * self.dtheta

    @property
    def radial(self) -> bool:
        return self.ntheta == 1

    def shape(self) -> tuple[int, int]:
        return (self.nr + 1, self.ntheta)


@dataclass
class BallProblem:
    """Dirichlet problem for the flow on the ball of radius R.

    phi and u0 are callables phi(theta) and u0(r, theta) accepting numpy
    arrays.  T defaults to zeta(R)/2.
    """

    model: ModelGeometry
    R: float
    phi: Callable
    u0: Callable
    T: float | None = None

    def __post_init__(self):
        if self.T is None:
            self.T = 0.5 * self.model.zeta(self.R)
        if self.T <= 0:
            raise FlowError("T must be positive")

    def sample(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        """(u0 field, phi row) on the grid, with compatibility enforced."""
        r = grid.r[:, None]
        th = grid.theta[None, :]
        u0 = np.broadcast_to(np.asarray(self.u0(r, th), dtype=float),
                             grid.shape()).copy()
        phi = np.broadcast_to(np.asarray(self.phi(grid.theta), dtype=float),
                              (grid.ntheta,)).copy()
        if not np.all(np.isfinite(u0)):
            raise FlowError("u0 must be finite on the closed ball")
        gap = float(np.max(np.abs(u0[-1] - phi)))
        if gap > 1e-12:
            raise FlowError(
                f"u0 and phi disagree at the boundary (gap {gap:.3e})")
        if float(np.ptp(u0[0])) > 1e-12:
            raise FlowError("u0 must be single-valued at the pole")
        return u0, phi


@dataclass(frozen=True)
class StepControl:
    scheme: str = "semi-implicit"
    cfl: float = 0.5
    dt_max: float = 1e-3
    tol_lin: float = 1e-10

    def __post_init__(self):
        if self.scheme not in ("semi-implicit", "explicit-euler"):
            raise FlowError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.cfl <= 1.0:
            raise FlowError("cfl must be in (0, 1]")
        if self.dt_max <= 0:
            raise FlowError("dt_max must be positive")


@dataclass(frozen=True)
class FlowState:
    t: float
    u: np.ndarray
    W: np.ndarray
    step_count: int


# ---------------------------------------------------------------------------
# derivatives


def _theta_derivs(u: np.ndarray, k: float):
    up = np.roll(u, -1, axis=1)
    um = np.roll(u, 1, axis=1)
    ut = (up - um) / (2.0 * k)
    utt = (up - 2.0 * u + um) / (k * k)
    return ut, utt


def _pole_fourier(u_ring: np.ndarray, h: float, theta: np.ndarray):
    """Local Cartesian gradient (a, b) and Hessian (c, d, e) at the pole
    from the first grid ring (row at r = h) and the pole value."""
    N = u_ring.size
    m0 = float(np.mean(u_ring))
    a = 2.0 * float(np.mean(u_ring * np.cos(theta))) / h
    b = 2.0 * float(np.mean(u_ring * np.sin(theta))) / h
    p2c = 2.0 * float(np.mean(u_ring * np.cos(2 * theta)))
    p2s = 2.0 * float(np.mean(u_ring * np.sin(2 * theta)))
    return m0, a, b, p2c, p2s


def compute_W(model: ModelGeometry, grid: Grid, u: np.ndarray) -> np.ndarray:
    """Tilt factor W = sqrt(rho^{-2} + |grad u|^2) on the grid.

    Deterministic function of (model, grid, u); the stepper stores exactly
    this field so recomputation is bit-identical.
    """
    r = grid.r
    rho = np.asarray(model.rho.value(r), dtype=float)
    if grid.radial:
        v = u[:, 0] if u.ndim == 2 else u
        ur = np.gradient(v, r)
        ur[0] = 0.0
        ur[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * grid.hr)
        W = np.sqrt(1.0 / rho ** 2 + ur ** 2)
        return W[:, None] if u.ndim == 2 else W
    h = grid.hr
    xi = np.asarray(model.xi.value(r), dtype=float)
    ur = np.empty_like(u)
    ur[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    ur[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
    ut, _ = _theta_derivs(u, grid.dtheta)
    grad2 = np.empty_like(u)
    grad2[1:] = ur[1:] ** 2 + (ut[1:] / xi[1:, None]) ** 2
    _, a, b, _, _ = _pole_fourier(u[1], h, grid.theta)
    grad2[0] = a * a + b * b
    return np.sqrt(1.0 / rho[:, None] ** 2 + grad2)


# ---------------------------------------------------------------------------
# spatial operator


def _d2_nonuniform(r: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Second derivative on a (possibly) nonuniform grid, 3-point stencil."""
    d2 = np.zeros_like(u)
    h1 = r[1:-1] - r[:-2]
    h2 = r[2:] - r[1:-1]
    d2[1:-1] = 2.0 * (u[:-2] / (h1 * (h1 + h2)) - u[1:-1] / (h1 * h2)
                      + u[2:] / (h2 * (h1 + h2)))
    d2[0] = d2[1]
    d2[-1] = d2[-2]
    return d2


def radial_Q(model: ModelGeometry, r: np.ndarray, u: np.ndarray,
             n: int | None = None) -> np.ndarray:
    """Discrete flow operator for radial fields on an increasing r grid.

    The first node may be the pole (r = 0), handled by the symmetric
    one-sided Laplacian; the last node's value is meaningless (Dirichlet).
    """
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    n = n if n is not None else model.n
    ur = np.gradient(u, r)
    urr = _d2_nonuniform(r, u)
    rho = np.asarray(model.rho.value(r), dtype=float)
    pole = r[0] <= R_MIN
    rs = np.where(r > R_MIN, r, 1.0)
    xi_ratio = np.asarray(model.xi.ratio_d1(rs), dtype=float)
    lrho = np.asarray(model.log_rho_d1(r), dtype=float)
    if pole:
        ur[0] = 0.0
    W2 = 1.0 / rho ** 2 + ur ** 2
    Q = (urr + (n - 1) * xi_ratio * ur - ur ** 2 * urr / W2
         + (1.0 + 1.0 / (rho ** 2 * W2)) * lrho * ur)
    if pole:
        # radial smoothness gives u'(0) = 0 and Lap u(0) = n u''(0)
        Q[0] = n * 2.0 * (u[1] - u[0]) / (r[1] - r[0]) ** 2
    Q[-1] = 0.0
    return Q


def discretize_Q(model: ModelGeometry, grid: Grid,
                 u: np.ndarray) -> np.ndarray:
    """Discrete flow operator on the polar grid (second order in space).

    Boundary row is returned as zero (the Dirichlet row never moves).
    """
    if grid.radial:
        v = u[:, 0] if u.ndim == 2 else u
        q = radial_Q(model, grid.r, v, n=2)
        return q[:, None] if u.ndim == 2 else q
    h = grid.hr
    k = grid.dtheta
    r = grid.r
    Q = np.zeros_like(u)
    ur = (u[2:] - u[:-2]) / (2 * h)
    urr = (u[2:] - 2 * u[1:-1] + u[:-2]) / (h * h)
    ut_full, utt_full = _theta_derivs(u, k)
    ut = ut_full[1:-1]
    utt = utt_full[1:-1]
    urt = (ut_full[2:] - ut_full[:-2]) / (2 * h)
    ri = r[1:-1]
    xi = np.asarray(model.xi.value(ri), dtype=float)[:, None]
    xi1 = np.asarray(model.xi.d1(ri), dtype=float)[:, None]
    rho = np.asarray(model.rho.value(ri), dtype=float)[:, None]
    lrho = np.asarray(model.log_rho_d1(ri), dtype=float)[:, None]
    inv_xi2 = 1.0 / xi ** 2
    grad2 = ur ** 2 + ut ** 2 * inv_xi2
    W2 = 1.0 / rho ** 2 + grad2
    h_rr = urr
    h_rt = urt - (xi1 / xi) * ut
    h_tt = utt + xi * xi1 * ur
    lap = h_rr + inv_xi2 * h_tt
    uij = (ur ** 2 * h_rr + 2 * ur * (ut * inv_xi2) * h_rt
           + (ut * inv_xi2) ** 2 * h_tt)
    Q[1:-1] = lap - uij / W2 + (1.0 + 1.0 / (rho ** 2 * W2)) * lrho * ur
    # pole: reconstruct the local Cartesian quadratic from the first ring.
    # The warping is rotationally symmetric and smooth, so (log rho)'(0) = 0
    # and the drift term drops out at the pole.
    m0, a, b, p2c, p2s = _pole_fourier(u[1], h, grid.theta)
    u0 = float(u[0, 0])
    ce_sum = 4.0 * (m0 - u0) / (h * h)
    ce_dif = 4.0 * p2c / (h * h)
    c = 0.5 * (ce_sum + ce_dif)
    e = 0.5 * (ce_sum - ce_dif)
    d = 2.0 * p2s / (h * h)
    rho0 = float(model.rho.value(0.0))
    W2_0 = 1.0 / rho0 ** 2 + a * a + b * b
    Q[0] = ce_sum - (a * a * c + 2 * a * b * d + b * b * e) / W2_0
    return Q


# ---------------------------------------------------------------------------
# time stepping


def _cfl_dt(model: ModelGeometry, grid: Grid, control: StepControl) -> float:
    h_angular = math.inf
    if not grid.radial:
        xi1 = float(model.xi.value(grid.hr))
        h_angular = xi1 * grid.dtheta
    h_min = min(grid.hr, h_angular)
    # the diffusion matrix g^{ij} - u^i u^j / W^2 has eigenvalues <= those
    # of g^{ij}, i.e. <= 1 in physical (orthonormal) directions
    return control.cfl * h_min * h_min / 2.0


def _assemble_radial(model: ModelGeometry, grid: Grid, u: np.ndarray,
                     dt: float, n: int):
    r = grid.r
    m = r.size
    h = grid.hr
    ur = np.gradient(u, r)
    ur[0] = 0.0
    rho = np.asarray(model.rho.value(r), dtype=float)
    rs = np.where(r > R_MIN, r, 1.0)
    xi_ratio = np.asarray(model.xi.ratio_d1(rs), dtype=float)
    lrho = np.asarray(model.log_rho_d1(r), dtype=float)
    W2 = 1.0 / rho ** 2 + ur ** 2
    arr = 1.0 - ur ** 2 / W2
    br = (n - 1) * xi_ratio + (1.0 + 1.0 / (rho ** 2 * W2)) * lrho
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    # pole row: u0 - dt * 2n (u1 - u0)/h^2
    add(0, 0, 1.0 + dt * 2.0 * n / h ** 2)
    add(0, 1, -dt * 2.0 * n / h ** 2)
    for j in range(1, m - 1):
        cw = arr[j] / h ** 2
        cb = br[j] / (2 * h)
        add(j, j - 1, -dt * (cw - cb))
        add(j, j, 1.0 + dt * 2.0 * cw)
        add(j, j + 1, -dt * (cw + cb))
    add(m - 1, m - 1, 1.0)
    A = sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(m, m)))
    return A


def _assemble_2d(model: ModelGeometry, grid: Grid, u: np.ndarray, dt: float):
    nr, nt = grid.nr, grid.ntheta
    h, k = grid.hr, grid.dtheta
    r = grid.r

    def idx(j, i):
        return j * nt + i % nt

    m = (nr + 1) * nt
    ur = (u[2:] - u[:-2]) / (2 * h)
    ut_full, _ = _theta_derivs(u, k)
    ut = ut_full[1:-1]
    ri = r[1:-1]
    xi = np.asarray(model.xi.value(ri), dtype=float)[:, None]
    xi1 = np.asarray(model.xi.d1(ri), dtype=float)[:, None]
    rho = np.asarray(model.rho.value(ri), dtype=float)[:, None]
    lrho = np.asarray(model.log_rho_d1(ri), dtype=float)[:, None]
    inv_xi2 = 1.0 / xi ** 2
    W2 = 1.0 / rho ** 2 + ur ** 2 + ut ** 2 * inv_xi2
    utheta_up = ut * inv_xi2            # raised-index angular slope
    arr = 1.0 - ur ** 2 / W2
    art = -ur * utheta_up / W2
    att = inv_xi2 - utheta_up ** 2 / W2
    br = (1.0 + 1.0 / (rho ** 2 * W2)) * lrho + att * xi * xi1
    bt = -2.0 * art * (xi1 / xi)
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    # interior stencil, vectorized per (j, i) via python loops on j only
    for jj in range(nr - 1):
        j = jj + 1
        for i in range(nt):
            a_rr = float(arr[jj, i]) / h ** 2
            a_rt = float(art[jj, i]) / (2 * h * k)
            a_tt = float(att[jj, i]) / k ** 2
            b_r = float(br[jj, i]) / (2 * h)
            b_t = float(bt[jj, i]) / (2 * k)
            row = idx(j, i)
            add(row, row, 1.0 + dt * (2 * a_rr + 2 * a_tt))
            add(row, idx(j + 1, i), -dt * (a_rr + b_r))
            add(row, idx(j - 1, i), -dt * (a_rr - b_r))
            add(row, idx(j, i + 1), -dt * (a_tt + b_t))
            add(row, idx(j, i - 1), -dt * (a_tt - b_t))
            add(row, idx(j + 1, i + 1), -dt * a_rt)
            add(row, idx(j - 1, i - 1), -dt * a_rt)
            add(row, idx(j + 1, i - 1), dt * a_rt)
            add(row, idx(j - 1, i + 1), dt * a_rt)
    # pole equation on unknown (0, 0); rows (0, i>0) tie the ring together
    _, a, b, _, _ = _pole_fourier(u[1], h, grid.theta)
    rho0 = float(model.rho.value(0.0))
    W2_0 = 1.0 / rho0 ** 2 + a * a + b * b
    ca = 1.0 - a * a / W2_0
    cb = 1.0 - b * b / W2_0
    cd = -2.0 * a * b / W2_0
    theta = grid.theta
    w_ring = (ca * (2.0 / (nt * h * h)) * (1.0 + 2.0 * np.cos(2 * theta))
              + cb * (2.0 / (nt * h * h)) * (1.0 - 2.0 * np.cos(2 * theta))
              + cd * (4.0 / (nt * h * h)) * np.sin(2 * theta))
    w_pole = -(2.0 / (h * h)) * (ca + cb)
    add(0, 0, 1.0 - dt * w_pole)
    for i in range(nt):
        add(0, idx(1, i), -dt * float(w_ring[i]))
    for i in range(1, nt):
        add(idx(0, i), idx(0, i), 1.0)
        add(idx(0, i), 0, -1.0)
    for i in range(nt):
        add(idx(nr, i), idx(nr, i), 1.0)
    A = sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(m, m)))
    return A


def step(state: FlowState, problem: BallProblem, grid: Grid,
         control: StepControl, dt: float | None = None,
         phi_row: np.ndarray | None = None) -> FlowState:
    """Advance the flow one time step and re-impose the Dirichlet row."""
    model = problem.model
    if phi_row is None:
        phi_row = np.broadcast_to(
            np.asarray(problem.phi(grid.theta), dtype=float),
            (grid.ntheta,)).copy()
    dt = control.dt_max if dt is None else dt
    if dt <= 0:
        raise FlowError("dt must be positive")
    u = state.u
    if control.scheme == "explicit-euler":
        lim = _cfl_dt(model, grid, control)
        if dt > lim:
            raise FlowError(
                f"explicit step dt={dt:.3e} exceeds the CFL limit {lim:.3e}")
        u_new = u + dt * discretize_Q(model, grid, u)
    else:
        if grid.radial:
            v = u[:, 0] if u.ndim == 2 else u
            A = _assemble_radial(model, grid, v, dt, n=model.n)
            rhs = v.copy()
            rhs[-1] = float(phi_row[0])
            sol = spla.spsolve(A, rhs)
            u_new = sol[:, None] if u.ndim == 2 else sol
        else:
            A = _assemble_2d(model, grid, u, dt)
            rhs = u.flatten()
            rhs[0:grid.ntheta][1:] = 0.0       # pole tie rows
            rhs[-grid.ntheta:] = phi_row
            sol = spla.spsolve(A, rhs)
            u_new = sol.reshape(grid.shape())
            u_new[0, :] = u_new[0, 0]
    if u_new.ndim == 2:
        u_new[-1, :] = phi_row
    else:
        u_new[-1] = float(phi_row[0])
    if not np.all(np.isfinite(u_new)):
        raise FlowError("non-finite field after step (linear solve failed?)")
    return FlowState(t=state.t + dt, u=u_new,
                     W=compute_W(model, grid, u_new),
                     step_count=state.step_count + 1)


# ---------------------------------------------------------------------------
# derived geometric fields


def _partials_2d(grid: Grid, u: np.ndarray):
    h, k = grid.hr, grid.dtheta
    ur = np.zeros_like(u)
    urr = np.zeros_like(u)
    ur[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    urr[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / (h * h)
    ut, utt = _theta_derivs(u, k)
    urt = np.zeros_like(u)
    urt[1:-1] = (ut[2:] - ut[:-2]) / (2 * h)
    return ur, ut, urr, urt, utt


def second_fundamental_form(model: ModelGeometry, grid: Grid,
                            u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(|A|^2 field, nH field) of the graph of u over the polar grid.

    Assembled from the ambient Christoffels of the warped metric applied to
    the graph parametrization (one derivative order lower than
    differentiating the mean curvature expression).  Pole and boundary rows
    are copies of the nearest interior row; treat them as extrapolation.
    """
    if grid.radial:
        v = u[:, 0] if u.ndim == 2 else u
        a2, nh = radial_second_fundamental_form(model, grid.r, v)
        if u.ndim == 2:
            return a2[:, None], nh[:, None]
        return a2, nh
    r = grid.r
    ur, ut, urr, urt, utt = _partials_2d(grid, u)
    sl = slice(1, -1)
    ri = r[sl]
    xi = np.asarray(model.xi.value(ri), dtype=float)[:, None]
    xi1 = np.asarray(model.xi.d1(ri), dtype=float)[:, None]
    rho = np.asarray(model.rho.value(ri), dtype=float)[:, None]
    rho1 = np.asarray(model.rho.d1(ri), dtype=float)[:, None]
    lrho = rho1 / rho
    Ur, Ut = ur[sl], ut[sl]
    Urr, Urt, Utt = urr[sl], urt[sl], utt[sl]
    W = np.sqrt(1.0 / rho ** 2 + Ur ** 2 + Ut ** 2 / xi ** 2)
    a_rr = (Urr + 2 * Ur * lrho + rho * rho1 * Ur ** 3) / W
    a_rt = (Urt + Ut * lrho + rho * rho1 * Ur ** 2 * Ut
            - (xi1 / xi) * Ut) / W
    a_tt = (Utt + rho * rho1 * Ut ** 2 * Ur + xi * xi1 * Ur) / W
    g_rr = 1.0 + rho ** 2 * Ur ** 2
    g_rt = rho ** 2 * Ur * Ut
    g_tt = xi ** 2 + rho ** 2 * Ut ** 2
    det = g_rr * g_tt - g_rt ** 2
    i_rr = g_tt / det
    i_rt = -g_rt / det
    i_tt = g_rr / det
    s11 = i_rr * a_rr + i_rt * a_rt
    s12 = i_rr * a_rt + i_rt * a_tt
    s21 = i_rt * a_rr + i_tt * a_rt
    s22 = i_rt * a_rt + i_tt * a_tt
    nH = np.zeros_like(u)
    A2 = np.zeros_like(u)
    nH[sl] = s11 + s22
    A2[sl] = s11 ** 2 + 2 * s12 * s21 + s22 ** 2
    nH[0], nH[-1] = nH[1], nH[-2]
    A2[0], A2[-1] = A2[1], A2[-2]
    return A2, nH


def radial_second_fundamental_form(model: ModelGeometry, r: np.ndarray,
                                   u: np.ndarray
                                   ) -> tuple[np.ndarray, np.ndarray]:
    """Principal curvatures of a radial graph: the profile direction and
    the (n-1)-fold spherical direction.  Returns (|A|^2, nH) on the grid."""
    n = model.n
    ur = np.gradient(u, r)
    urr = _d2_nonuniform(r, u)
    pole = r[0] <= R_MIN
    if pole:
        ur[0] = 0.0
        urr[0] = 2.0 * (u[1] - u[0]) / (r[1] - r[0]) ** 2
    rho = np.asarray(model.rho.value(r), dtype=float)
    rho1 = np.asarray(model.rho.d1(r), dtype=float)
    rs = np.where(r > R_MIN, r, 1.0)
    xi_ratio = np.asarray(model.xi.ratio_d1(rs), dtype=float)
    W = np.sqrt(1.0 / rho ** 2 + ur ** 2)
    lam_r = (urr + 2 * ur * rho1 / rho + rho * rho1 * ur ** 3) \
        / (W * (1.0 + rho ** 2 * ur ** 2))
    lam_t = xi_ratio * ur / W
    if pole:
        lam_t[0] = urr[0] / W[0]
        lam_r[0] = urr[0] / W[0]
    A2 = lam_r ** 2 + (n - 1) * lam_t ** 2
    nH = lam_r + (n - 1) * lam_t
    return A2, nH


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    problem: BallProblem
    grid: Grid
    control: StepControl
    states: list
    times: np.ndarray
    max_grad: np.ndarray
    max_A: np.ndarray


def _max_grad(model: ModelGeometry, grid: Grid, state: FlowState) -> float:
    rho = np.asarray(model.rho.value(grid.r), dtype=float)
    if state.u.ndim == 2:
        rho = rho[:, None]
    grad2 = state.W ** 2 - 1.0 / rho ** 2
    return float(math.sqrt(max(float(np.max(grad2)), 0.0)))


def solve_ball(problem: BallProblem, grid: Grid, control: StepControl,
               snapshot_every: int = 0) -> Trajectory:
    """Integrate the Dirichlet flow to time T, collecting snapshots.

    snapshot_every = 0 keeps only the initial and final states.  A state
    whose sup norm exceeds ten times the barrier height bound aborts the
    run: the continuum solution is bounded, so runaway growth can only be
    numerical instability.
    """
    model = problem.model
    u0, phi = problem.sample(grid)
    if grid.radial:
        u0 = u0[:, 0]
    state = FlowState(t=0.0, u=u0, W=compute_W(model, grid, u0),
                      step_count=0)
    sup0 = max(float(np.max(np.abs(u0))), float(np.max(np.abs(phi))))
    _, upper = barriers.height_bounds(model, problem.R, problem.T, sup0)
    guard = 10.0 * max(abs(upper(0.0)), 1.0)
    n_steps = max(int(math.ceil(problem.T / control.dt_max)), 1)
    dt = problem.T / n_steps
    states = [state]
    times = [0.0]
    mg = [_max_grad(model, grid, state)]
    a2, _ = second_fundamental_form(model, grid, state.u)
    ma = [float(np.sqrt(np.max(a2)))]
    for sidx in range(n_steps):
        state = step(state, problem, grid, control, dt=dt, phi_row=phi)
        if float(np.max(np.abs(state.u))) > guard:
            raise FlowError(
                f"divergence guard tripped at t={state.t:.4g}: "
                f"sup|u| exceeds 10x the height bound {guard / 10.0:.4g}")
        times.append(state.t)
        mg.append(_max_grad(model, grid, state))
        a2, _ = second_fundamental_form(model, grid, state.u)
        ma.append(float(np.sqrt(np.max(a2))))
        last = sidx == n_steps - 1
        if last or (snapshot_every and (sidx + 1) % snapshot_every == 0):
            states.append(state)
    return Trajectory(problem=problem, grid=grid, control=control,
                      states=states, times=np.asarray(times),
                      max_grad=np.asarray(mg), max_A=np.asarray(ma))


def radial_solve(problem: BallProblem, nr: int,
                 control: StepControl, snapshot_every: int = 0) -> Trajectory:
    """Radial fast path: same contracts as solve_ball on a 1D grid."""
    grid = Grid(R=problem.R, nr=nr, ntheta=1)
    return solve_ball(problem, grid, control, snapshot_every)


# ---------------------------------------------------------------------------
# evolution identity residuals


@dataclass(frozen=True)
class IdentityReport:
    max_abs_tilt: float        # residual of the tilt-factor evolution law
    max_abs_height: float      # residual of the height evolution identity
    min_slack_cylinder: float  # slack of the radial-cylinder inequality
    snapshots: int


def _intrinsic_laplacian(F: np.ndarray, r: np.ndarray, J: np.ndarray,
                         g_rr: np.ndarray) -> np.ndarray:
    flux = J * np.gradient(F, r) / g_rr
    return np.gradient(flux, r) / J


def residual_identities(model: ModelGeometry, trajectory: Trajectory,
                        burn_in: float = 0.1) -> IdentityReport:
    """Discrete residuals of the evolution identities along a radial run.

    Checks, with the material derivative D_t = d/dt - (nH u_r / W) d/dr
    correcting for the graphical gauge (the graph parametrization slides
    tangentially relative to the normal flow):

    * tilt factor:  D_t W - Lap W + W (|A|^2 + Ric(N, N)) + 2 |grad W|^2 / W
      should vanish,
    * height:       D_t u - Lap u + 2 <grad log rho, N><grad s, N>
      should vanish,
    * cylinder size: D_t zeta - Lap zeta
      + n xi' + rho^2 |grad s|^2 xi (<grad log rho, grad r> - xi'/xi)
      should be nonnegative (equality on the model space itself).

    All Laplacians/gradients are intrinsic to the evolving graph.  Residuals
    are maximized over interior nodes (3 trimmed at each end) and interior
    snapshots.  Snapshots in the first ``burn_in`` fraction of the time span
    are skipped: generic initial data is only zeroth-order compatible with
    the Dirichlet condition, and the resulting corner nonsmoothness at
    (r = R, t = 0) would dominate the residual no matter how fine the grid.
    """
    if len(trajectory.states) < 3:
        raise FlowError("need at least 3 snapshots")
    grid = trajectory.grid
    if not grid.radial:
        raise FlowError("identity residuals are implemented for radial runs")
    n = model.n
    r = grid.r
    t = np.asarray([s.t for s in trajectory.states])
    U = np.stack([s.u if s.u.ndim == 1 else s.u[:, 0]
                  for s in trajectory.states])
    rho = np.asarray(model.rho.value(r), dtype=float)
    rho1 = np.asarray(model.rho.d1(r), dtype=float)
    xi = np.asarray(model.xi.value(r), dtype=float)
    xi1 = np.asarray(model.xi.d1(r), dtype=float)
    zeta = np.asarray([model.zeta(float(x)) for x in r])
    frame = ambient_frame(model)
    ric = np.asarray([frame.ricci_eigenvalues(float(x)) if x > R_MIN
                      else frame.ricci_eigenvalues(1e-6)
                      for x in r])
    Ut = np.gradient(U, t, axis=0)
    Ur_all = np.gradient(U, r, axis=1)
    Ur_all[:, 0] = 0.0
    W_all = np.sqrt(1.0 / rho ** 2 + Ur_all ** 2)
    Wt_all = np.gradient(W_all, t, axis=0)
    sl = slice(3, -3)
    t_min = t[0] + burn_in * (t[-1] - t[0])
    worst_tilt = 0.0
    worst_height = 0.0
    min_slack = math.inf
    evaluated = 0
    for a in range(1, t.size - 1):
        if t[a] < t_min:
            continue
        evaluated += 1
        u = U[a]
        ur = Ur_all[a]
        W = W_all[a]
        A2, nH = radial_second_fundamental_form(model, r, u)
        g_rr = 1.0 + rho ** 2 * ur ** 2
        J = np.sqrt(g_rr) * xi ** (n - 1)
        J[0] = J[1] * 1e-12      # placeholder; trimmed region excludes pole
        gauge = nH * ur / W
        # tilt factor
        Wt = Wt_all[a]
        Wr = np.gradient(W, r)
        DtW = Wt - gauge * Wr
        lapW = _intrinsic_laplacian(W, r, J, g_rr)
        ricNN = (1.0 / (rho * W)) ** 2 * ric[:, 0] + (ur / W) ** 2 * ric[:, 1]
        gradW2 = Wr ** 2 / g_rr
        res_tilt = DtW - lapW + W * (A2 + ricNN) + 2.0 * gradW2 / W
        worst_tilt = max(worst_tilt, float(np.max(np.abs(res_tilt[sl]))))
        # height
        Dtu = Ut[a] - gauge * ur
        lapU = _intrinsic_laplacian(u, r, J, g_rr)
        coupling = 2.0 * (-(rho1 / rho) * ur / W) * (1.0 / (rho ** 2 * W))
        res_height = Dtu - lapU + coupling
        worst_height = max(worst_height,
                           float(np.max(np.abs(res_height[sl]))))
        # cylinder size
        Dtz = -gauge * xi
        lapZ = _intrinsic_laplacian(zeta, r, J, g_rr)
        grad_s2 = 1.0 / rho ** 2 - 1.0 / (rho ** 4 * W ** 2)
        # the warping correction pairs the full ambient gradients, so the
        # coefficient is rho'/rho itself, with no tangential projection
        xi_ratio = np.where(r > R_MIN, xi1 / np.where(xi > 0, xi, 1.0), 0.0)
        slack = (Dtz - lapZ + n * xi1
                 + rho ** 2 * grad_s2 * xi * (rho1 / rho - xi_ratio))
        min_slack = min(min_slack, float(np.min(slack[sl])))
    if evaluated == 0:
        raise FlowError("no snapshots past the burn-in window")
    return IdentityReport(max_abs_tilt=worst_tilt,
                          max_abs_height=worst_height,
                          min_slack_cylinder=min_slack,
                          snapshots=len(trajectory.states))


# ---------------------------------------------------------------------------
# snapshot persistence


def model_hash(model: ModelGeometry) -> str:
    blob = json.dumps(model.spec_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_snapshot(path: str, grid: Grid, state: FlowState) -> None:
    """Write one snapshot as CSV t,r,theta,u,W with shortest round-trip
    float formatting, so reading it back is bit-exact."""
    u = state.u if state.u.ndim == 2 else state.u[:, None]
    W = state.W if state.W.ndim == 2 else state.W[:, None]
    r = grid.r
    theta = grid.theta if not grid.radial else np.array([0.0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "theta", "u", "W"])
        for j in range(r.size):
            for i in range(theta.size):
                w.writerow([repr(state.t), repr(float(r[j])),
                            repr(float(theta[i])),
                            repr(float(u[j, i])), repr(float(W[j, i]))])


def load_snapshot(path: str, grid: Grid) -> FlowState:
    nt = 1 if grid.radial else grid.ntheta
    u = np.empty((grid.nr + 1, nt))
    W = np.empty_like(u)
    t = 0.0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row_i, row in enumerate(reader):
            j, i = divmod(row_i, nt)
            t = float(row[0])
            u[j, i] = float(row[3])
            W[j, i] = float(row[4])
    if grid.radial:
        u = u[:, 0]
        W = W[:, 0]
    return FlowState(t=t, u=u, W=W, step_count=-1)


def save_run(dirpath: str, trajectory: Trajectory) -> str:
    """Persist a trajectory: one CSV per snapshot plus a JSON manifest.
    Returns the manifest path."""
    os.makedirs(dirpath, exist_ok=True)
    grid = trajectory.grid
    files = []
    for i, state in enumerate(trajectory.states):
        name = f"snapshot_{i:05d}.csv"
        save_snapshot(os.path.join(dirpath, name), grid, state)
        files.append(name)
    manifest = {
        "snapshots": files,
        "grid": {"R": grid.R, "nr": grid.nr, "ntheta": grid.ntheta},
        "control": {"scheme": trajectory.control.scheme,
                    "cfl": trajectory.control.cfl,
                    "dt_max": trajectory.control.dt_max,
                    "tol_lin": trajectory.control.tol_lin},
        "model_hash": model_hash(trajectory.problem.model),
        "model": trajectory.problem.model.spec_dict(),
        "T": trajectory.problem.T,
        "times": [repr(float(x)) for x in trajectory.times],
        "max_grad": [repr(float(x)) for x in trajectory.max_grad],
        "max_A": [repr(float(x)) for x in trajectory.max_A],
    }
    mpath = os.path.join(dirpath, "manifest.json")
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return mpath


def load_run(manifest_path: str) -> dict:
    """Load a manifest and its snapshots; values round-trip bit-exactly."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    g = manifest["grid"]
    grid = Grid(R=g["R"], nr=g["nr"], ntheta=g["ntheta"])
    base = os.path.dirname(manifest_path)
    states = [load_snapshot(os.path.join(base, f), grid)
              for f in manifest["snapshots"]]
    return {
        "manifest": manifest,
        "grid": grid,
        "states": states,
        "times": np.asarray([float(x) for x in manifest["times"]]),
        "max_grad": np.asarray([float(x) for x in manifest["max_grad"]]),
        "max_A": np.asarray([float(x) for x in manifest["max_A"]]),
    }

"""Fifth-order WENO finite differences with third-order TVD Runge-Kutta.

Component-wise scheme for the augmented system ``(u, phi)_t + (f(u, phi), 0)_x = 0``:
global Lax-Friedrichs flux splitting, WENO-JS reconstruction of each split
flux, constant extrapolation into three ghost cells on each side. The
porosity row has zero flux, so phi is never touched by the time stepper.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import flux as F
from .exceptions import CFLViolation, GridMismatch, NonConservativeUnsupported

logger = logging.getLogger(__name__)

GHOST = 3
WENO_EPS = 1e-6
LINEAR_WEIGHTS = (0.1, 0.6, 0.3)


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int
    ghost: int = GHOST

    def __post_init__(self):
        if not self.x_max > self.x_min or self.n_cells < 1:
            raise ValueError("grid needs x_max > x_min and at least one cell")
        if self.ghost != GHOST:
            raise ValueError("the WENO5 stencil needs exactly 3 ghost cells")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self):
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass
class FieldPair:
    u: np.ndarray
    phi: np.ndarray

    def copy(self):
        return FieldPair(self.u.copy(), self.phi.copy())


def weno5_reconstruct(v0, v1, v2, v3, v4, eps=WENO_EPS):
    """Left-biased WENO-JS value at x_{i+1/2} from v_{i-2}, ..., v_{i+2}.

    Works elementwise on arrays.
    """
    # candidate values q_k = v2 + e_k, written as increments so constants pass exactly
    e0 = (2.0 * (v0 - v1) - 5.0 * (v1 - v2)) / 6.0
    e1 = (2.0 * (v3 - v2) - (v1 - v2)) / 6.0
    e2 = (5.0 * (v3 - v2) - (v4 - v2)) / 6.0

    b0 = 13.0 / 12.0 * (v0 - 2.0 * v1 + v2) ** 2 + 0.25 * (v0 - 4.0 * v1 + 3.0 * v2) ** 2
    b1 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3) ** 2 + 0.25 * (v1 - v3) ** 2
    b2 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4) ** 2 + 0.25 * (3.0 * v2 - 4.0 * v3 + v4) ** 2

    d0, d1, d2 = LINEAR_WEIGHTS
    a0 = d0 / (eps + b0) ** 2
    a1 = d1 / (eps + b1) ** 2
    a2 = d2 / (eps + b2) ** 2
    return v2 + (a0 * e0 + a1 * e1 + a2 * e2) / (a0 + a1 + a2)


def split_flux_divergence(fplus, fminus, dx):
    """-dF/dx at interior nodes from padded split fluxes.

    ``fplus`` and ``fminus`` carry 3 ghost values on each side; the result
    has ``len(fplus) - 6`` entries.
    """
    n = fplus.shape[0] - 2 * GHOST
    # interfaces i+1/2 for i = 2 .. n+2 (padded indexing), n+1 of them
    sl = lambda k: slice(k, k + n + 1)  # noqa: E731
    fp = weno5_reconstruct(fplus[sl(0)], fplus[sl(1)], fplus[sl(2)], fplus[sl(3)], fplus[sl(4)])
    # right-biased: mirror the stencil v_{i+3}, ..., v_{i-1}
    fm = weno5_reconstruct(fminus[sl(5)], fminus[sl(4)], fminus[sl(3)], fminus[sl(2)], fminus[sl(1)])
    flux = fp + fm
    return -(flux[1:] - flux[:-1]) / dx


def pad_extrapolate(a):
    return np.pad(a, GHOST, mode="edge")


def pad_periodic(a):
    return np.pad(a, GHOST, mode="wrap")


def lax_friedrichs_rhs(u, flux, alpha, dx, pad=pad_extrapolate):
    """Semi-discrete operator for a scalar law with global LF splitting."""
    up = pad(u)
    fu = flux(up)
    return split_flux_divergence(0.5 * (fu + alpha * up), 0.5 * (fu - alpha * up), dx)


def max_speed(fields: FieldPair, M):
    return float(np.max(np.abs(F.flux_f_u(fields.u, fields.phi, M))))


def rhs(fields: FieldPair, grid: Grid1D, M=F.DEFAULT_M, alpha=None):
    """Return the increment (du/dt, dphi/dt) of the GBL system.

    The porosity increment is identically zero.
    """
    if alpha is None:
        alpha = max_speed(fields, M)
    phi_p = pad_extrapolate(fields.phi)
    du = lax_friedrichs_rhs(
        fields.u, lambda up: F.flux_f(up, phi_p, M), alpha, grid.dx
    )
    return FieldPair(du, np.zeros_like(fields.phi))


def tvd_rk3(u, dt, L):
    """One Shu-Osher step for ``u' = L(u)`` on plain arrays."""
    u1 = u + dt * L(u)
    u2 = 0.75 * u + 0.25 * (u1 + dt * L(u1))
    return u / 3.0 + 2.0 / 3.0 * (u2 + dt * L(u2))


def step_tvdrk3(fields: FieldPair, dt, grid: Grid1D, M=F.DEFAULT_M, cfl=0.4, clip=True):
    """Advance (u, phi) by dt. Returns (new fields, clipped magnitude)."""
    alpha = max_speed(fields, M)
    if alpha * dt / grid.dx > cfl * (1.0 + 1e-12):
        raise CFLViolation(f"alpha*dt/dx = {alpha * dt / grid.dx:.4g} exceeds CFL {cfl}")
    phi = fields.phi

    def L(u):
        return rhs(FieldPair(u, phi), grid, M, alpha=alpha).u

    u_new = tvd_rk3(fields.u, dt, L)
    clipped = 0.0
    if clip:
        bounded = np.clip(u_new, 0.0, phi)
        clipped = float(np.max(np.abs(bounded - u_new)))
        u_new = bounded
    return FieldPair(u_new, phi), clipped


def stable_dt(fields: FieldPair, grid: Grid1D, M=F.DEFAULT_M, cfl=0.4):
    alpha = max_speed(fields, M)
    if alpha == 0.0:
        return np.inf
    return cfl * grid.dx / alpha


def march(fields: FieldPair, grid: Grid1D, times, M=F.DEFAULT_M, cfl=0.4):
    """Integrate to each time in ``times`` (ascending); yield (t, FieldPair)."""
    t = 0.0
    max_clip = 0.0
    for t_out in times:
        while t < t_out:
            dt = min(stable_dt(fields, grid, M, cfl), t_out - t)
            fields, clipped = step_tvdrk3(fields, dt, grid, M, cfl)
            max_clip = max(max_clip, clipped)
            t = t_out if t + dt >= t_out else t + dt
        if max_clip > 0.0:
            logger.debug("u clipped to [0, phi] by up to %.3e before t=%g", max_clip, t_out)
        yield t_out, fields.copy(), max_clip


def default_cells(x_min, x_max, dx=0.005):
    """Cell count giving spacing ``dx`` (2200 cells on [-1, 10])."""
    return int(round((x_max - x_min) / dx))


def initial_fields(case, grid: Grid1D) -> FieldPair:
    from .riemann import initial_profile

    u, phi = initial_profile(case.riemann_data, grid.centers)
    return FieldPair(np.asarray(u, dtype=float), np.asarray(phi, dtype=float))


def solve_weno(case, n_cells=None, times=None, cfl=0.4):
    """March a conservative case and return the cell-center SolutionField.

    Rows are ordered t-major, then x. Non-conservative cases are refused.
    """
    from .metrics import SolutionField

    if not case.conservative:
        raise NonConservativeUnsupported(
            "WENO5 is implemented for the conservative form only")
    if n_cells is None:
        n_cells = case.weno_cells or default_cells(case.x_min, case.x_max)
    if times is None:
        times = case.eval_grid.times
    grid = Grid1D(case.x_min, case.x_max, n_cells)
    fields = initial_fields(case, grid)
    xs, ts, us, ps = [], [], [], []
    max_clip = 0.0
    for t, f, clip in march(fields, grid, sorted(times), case.M, cfl):
        xs.append(grid.centers)
        ts.append(np.full(n_cells, t))
        us.append(f.u)
        ps.append(f.phi)
        max_clip = max(max_clip, clip)
    return SolutionField(np.concatenate(xs), np.concatenate(ts), np.concatenate(us),
                         np.concatenate(ps), method="weno5", case=case.name,
                         meta={"n_cells": n_cells, "cfl": cfl, "max_clip": max_clip})


def resample(field, points):
    """Linear interpolation in x of a t-major field onto rows (x, t) of ``points``."""
    from .metrics import SolutionField

    points = np.asarray(points, dtype=float)
    u = np.empty(len(points))
    phi = np.empty(len(points))
    for t in np.unique(points[:, 1]):
        sel = points[:, 1] == t
        src = np.isclose(field.t, t)
        if not src.any():
            raise GridMismatch(f"field has no samples at t={t}")
        u[sel] = np.interp(points[sel, 0], field.x[src], field.u[src])
        phi[sel] = np.interp(points[sel, 0], field.x[src], field.phi[src])
    return SolutionField(points[:, 0], points[:, 1], u, phi, method=field.method,
                         case=field.case, seed=field.seed, meta=dict(field.meta))

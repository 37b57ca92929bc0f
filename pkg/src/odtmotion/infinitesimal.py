"""Per-frame angular-velocity estimation and temporal regularization,
assembled into a rotation trajectory by projected Euler integration.

The per-frame estimate scans a fixed angle grid, solving a 2x2 least
squares problem per angle (see :mod:`odtmotion.energy`).  The series is
then refined by gradient descent on the data misfit plus a penalty on the
time variation of the angular velocity, and finally integrated on SO(3).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import energy, so3
from .energy import PolarEnergyGrid, radial_factor
from .grids import FieldStack

__all__ = [
    "CylindricalSeries",
    "estimate_series",
    "regularize_series",
    "infinitesimal_pipeline",
]


@dataclass
class CylindricalSeries:
    """Angular velocity per frame in cylindrical components: the in-plane
    speed rho, the axis azimuth phi, and the axial component zeta."""

    rho: np.ndarray
    phi: np.ndarray
    zeta: np.ndarray

    def __len__(self):
        return self.rho.size

    def omegas(self) -> np.ndarray:
        """(T, 3) angular-velocity vectors."""
        return np.column_stack([
            self.rho * np.cos(self.phi),
            self.rho * np.sin(self.phi),
            self.zeta,
        ])


def estimate_series(grid: PolarEnergyGrid,
                    r_min: float = 0.0) -> CylindricalSeries:
    """Run the per-frame estimator on every frame of the energy grid."""
    T = grid.n_frames
    rho = np.empty(T)
    phi = np.empty(T)
    zeta = np.empty(T)
    for t in range(T):
        _, (r, p, z, _, _) = energy.estimate_omega_frame(
            grid, t, return_details=True, r_min=r_min)
        rho[t], phi[t], zeta[t] = r, p, z
    return CylindricalSeries(rho, phi, zeta)


def _make_continuous(series: CylindricalSeries) -> CylindricalSeries:
    """Pick per-frame representatives (rho, phi) ~ (-rho, phi + pi) so the
    azimuth varies smoothly; the angular-velocity vectors are unchanged."""
    rho = series.rho.copy()
    phi = series.phi.copy()
    for t in range(1, len(series)):
        ks = np.arange(-2, 3)
        cand = phi[t] + ks * np.pi
        k = ks[np.argmin(np.abs(cand - phi[t - 1]))]
        phi[t] += k * np.pi
        if k % 2 != 0:
            rho[t] = -rho[t]
    return CylindricalSeries(rho, phi, series.zeta.copy())


def _second_diff(x: np.ndarray) -> np.ndarray:
    xp = np.concatenate([x[:1], x, x[-1:]])
    return xp[2:] - 2.0 * xp[1:-1] + xp[:-2]


def _first_diff(x: np.ndarray) -> np.ndarray:
    xp = np.concatenate([x[:1], x, x[-1:]])
    return 0.5 * (xp[2:] - xp[:-2])


def _interp_angle_rows(stack: np.ndarray, angles: np.ndarray,
                       phi: np.ndarray) -> np.ndarray:
    """Linear interpolation of per-frame rows at continuous azimuths.

    ``stack`` is (T, L, R); evaluation wraps past the angle axis with the
    radius-flip continuation.  Returns (T, R).
    """
    T, L, R = stack.shape
    dphi = angles[1] - angles[0]
    pos = (phi - angles[0]) / dphi
    # reduce to [0, 2L): period 2L in row index with flip every L rows
    pos = np.mod(pos, 2 * L)
    i0 = np.floor(pos).astype(int)
    frac = pos - i0
    i1 = (i0 + 1) % (2 * L)
    rows = np.arange(T)

    def fetch(i):
        flip = i >= L
        base = np.where(flip, i - L, i)
        vals = stack[rows, base, :]
        vals[flip] = vals[flip, ::-1]
        return vals

    return (1.0 - frac)[:, None] * fetch(i0) + frac[:, None] * fetch(i1)


class _ObjectiveWorkspace:
    """Precomputed derivative stacks shared by all descent iterations."""

    def __init__(self, grid: PolarEnergyGrid, r_min: float = 0.0):
        if not grid.has_derivatives():
            raise ValueError("run sobel_derivatives first")
        self.angles = grid.angles
        self.dr = float(grid.signed_radii[1] - grid.signed_radii[0])
        keep = np.abs(grid.signed_radii) >= r_min
        self.fac = radial_factor(grid.signed_radii, grid.k0)[keep]
        self.g = grid.dt_nu[:, :, keep]
        self.q = grid.dphi_nu[:, :, keep]
        # Sobel applied twice for the angle-gradient integrand; the angle
        # stencil runs on the full radius axis (the wrap needs symmetry)
        self.dphidt = energy.sobel_angle_derivative(grid.dt_nu,
                                                    grid.dphi)[:, :, keep]
        self.dphi2 = energy.sobel_angle_derivative(grid.dphi_nu,
                                                   grid.dphi)[:, :, keep]

    def data_terms(self, rho, phi, zeta):
        """Per-frame misfit values and partial derivatives at (rho, phi, zeta)."""
        g = _interp_angle_rows(self.g, self.angles, phi)
        q = _interp_angle_rows(self.q, self.angles, phi)
        ddt = _interp_angle_rows(self.dphidt, self.angles, phi)
        dqq = _interp_angle_rows(self.dphi2, self.angles, phi)
        p = self.fac[None, :] * q
        resid = g - rho[:, None] * p - zeta[:, None] * q
        J = self.dr * np.sum(resid**2, axis=1)
        dJ_rho = -2.0 * self.dr * np.sum(p * resid, axis=1)
        dJ_zeta = -2.0 * self.dr * np.sum(q * resid, axis=1)
        coef = rho[:, None] * self.fac[None, :] + zeta[:, None]
        dJ_phi = 2.0 * self.dr * np.sum(resid * (ddt - coef * dqq), axis=1)
        return J, dJ_rho, dJ_phi, dJ_zeta


def _objective(ws, rho, phi, zeta, lam):
    J = ws.data_terms(rho, phi, zeta)[0]
    pen = (_first_diff(rho) ** 2 + np.abs(rho) * _first_diff(phi) ** 2
           + _first_diff(zeta) ** 2)
    return float(np.sum(J + lam * pen))


def regularize_series(series: CylindricalSeries, grid: PolarEnergyGrid,
                      lam: float = 0.1, alpha: float = 1e-10,
                      iterations: int = 50,
                      max_halvings: int = 20,
                      r_min: float = 0.0) -> CylindricalSeries:
    """Gradient descent on the penalized misfit over the whole series.

    The penalty per frame is (rho')^2 + |rho| (phi')^2 + (zeta')^2 with
    time derivatives by centered differences (replicated ends).  A step
    that increases the objective is retried with a halved step size; this
    keeps the paper-scale default step usable across data scalings.
    """
    ws = _ObjectiveWorkspace(grid, r_min)
    s = _make_continuous(series)
    rho, phi, zeta = s.rho, s.phi, s.zeta
    obj = _objective(ws, rho, phi, zeta, lam)
    for _ in range(iterations):
        _, dr_, dp_, dz_ = ws.data_terms(rho, phi, zeta)
        grad_rho = dr_ + lam * (-2.0 * _second_diff(rho) + _first_diff(phi) ** 2)
        grad_phi = dp_ - 2.0 * lam * rho * _second_diff(phi)
        grad_zeta = dz_ - 2.0 * lam * _second_diff(zeta)
        step = alpha
        for _ in range(max_halvings + 1):
            r_new = rho - step * grad_rho
            p_new = phi - step * grad_phi
            z_new = zeta - step * grad_zeta
            if np.all(np.isfinite(r_new)) and np.all(np.isfinite(p_new)) \
                    and np.all(np.isfinite(z_new)):
                new_obj = _objective(ws, r_new, p_new, z_new, lam)
                if np.isfinite(new_obj) and new_obj <= obj:
                    rho, phi, zeta, obj = r_new, p_new, z_new, new_obj
                    break
            step /= 2.0
        else:
            if not (np.all(np.isfinite(rho)) and np.isfinite(obj)):
                raise FloatingPointError("divergent descent; reduce alpha")
            # no improving step found at any scale; keep the iterate
    return CylindricalSeries(rho, phi, zeta)


def infinitesimal_pipeline(stack: FieldStack,
                           R0: Optional[np.ndarray] = None,
                           n_radii: Optional[int] = None,
                           n_angles: int = 180,
                           lam: float = 0.1,
                           alpha: float = 1e-10,
                           iterations: int = 50,
                           band_fraction: float = 0.99,
                           derivative_method: str = "sobel",
                           inner_exclusion_cells: float = 0.0,
                           return_grid: bool = False):
    """Preprocessed measurements -> rotation trajectory.

    Steps: polar energy grid, Sobel derivatives (optionally replacing the
    angle derivative with the spectral identity), per-frame estimates,
    temporal regularization, and projected Euler integration from ``R0``.
    """
    radii, angles = energy.default_polar_grid(stack.n, stack.k0,
                                              n_radii=n_radii,
                                              n_angles=n_angles)
    grid = energy.nu_polar(stack, radii, angles, band_fraction=band_fraction)
    grid = energy.sobel_derivatives(grid)
    if derivative_method == "spectral-phi":
        dphi = np.stack([
            energy.dphi_nu_spectral(stack.frame(t), grid.signed_radii,
                                    angles, stack.k0)
            for t in range(stack.n_frames)
        ])
        grid.dphi_nu = dphi
    elif derivative_method != "sobel":
        raise ValueError("derivative_method must be 'sobel' or 'spectral-phi'")
    r_min = inner_exclusion_cells * 2.0 * np.pi / (stack.n * stack.pitch)
    series = estimate_series(grid, r_min=r_min)
    if iterations > 0 and lam >= 0:
        series = regularize_series(series, grid, lam=lam, alpha=alpha,
                                   iterations=iterations, r_min=r_min)
    traj = so3.integrate_trajectory(series.omegas(), R0)
    if return_grid:
        return traj, grid
    return traj

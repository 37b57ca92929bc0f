"""The translation-invariant spectral energy nu and its derivatives.

nu_t(k) = (2/pi) kappa^2(k) |F2[m_t](k)|^2 is computed on the centered
Cartesian frequency grid, where the translation phase factor of the
forward model cancels exactly under the modulus.  The polar representation
samples this Cartesian grid with cubic-spline interpolation on signed
radii r in (-r_max, r_max) and angles phi in [0, pi), which together cover
the full disk: the polar point (-r, phi) is the Cartesian point (r, phi+pi).

Derivatives in time and angle use the 3D Sobel stencil (central difference
along the target axis, (1,2,1)/4 smoothing along the other two).  The
angle axis is continued past its ends with the exact identity
nu(r, phi+pi) = nu(-r, phi), i.e. rows wrap with the radius axis flipped.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import ndimage

from .fourier import fft2_centered, polar_samples
from .grids import FieldImage, FieldStack

__all__ = [
    "CartesianEnergyGrid",
    "PolarEnergyGrid",
    "GPQProfile",
    "default_polar_grid",
    "nu_cartesian",
    "nu_polar",
    "sobel_derivatives",
    "dphi_nu_spectral",
    "radial_factor",
    "gpq_profile",
    "solve_rho_zeta",
    "estimate_omega_frame",
]

_SMOOTH = np.array([0.25, 0.5, 0.25])
DEGENERATE_COND = 1e12


@dataclass
class CartesianEnergyGrid:
    """nu on the centered N x N frequency grid, zero outside the band."""

    values: np.ndarray
    pitch: float
    k0: float
    band_fraction: float = 0.99

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def freq_step(self) -> float:
        return 2.0 * np.pi / (self.n * self.pitch)

    def interpolator(self):
        """Cubic-spline coefficients for repeated off-grid evaluation."""
        return ndimage.spline_filter(self.values, order=3, mode="constant")

    def sample(self, nodes: np.ndarray, coeffs: Optional[np.ndarray] = None
               ) -> np.ndarray:
        """Cubic-spline values at (m, 2) frequency nodes; zero outside."""
        if coeffs is None:
            coeffs = self.interpolator()
        idx = np.asarray(nodes, dtype=float).T / self.freq_step + self.n // 2
        return ndimage.map_coordinates(coeffs, idx, order=3, mode="constant",
                                       cval=0.0, prefilter=False)


@dataclass
class PolarEnergyGrid:
    """nu[t, l, n] on angles[l] in [0, pi) and signed_radii[n], plus the
    derivative stacks once :func:`sobel_derivatives` has run.

    ``radii`` keeps the nonnegative radii; ``signed_radii`` is their
    symmetric extension (odd length, centered at 0).
    """

    values: np.ndarray
    radii: np.ndarray
    signed_radii: np.ndarray
    angles: np.ndarray
    k0: float
    dt_nu: Optional[np.ndarray] = None
    dphi_nu: Optional[np.ndarray] = None

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dr(self) -> float:
        return float(self.radii[1] - self.radii[0])

    @property
    def dphi(self) -> float:
        return float(self.angles[1] - self.angles[0])

    def has_derivatives(self) -> bool:
        return self.dt_nu is not None and self.dphi_nu is not None


@dataclass
class GPQProfile:
    """Signed-radius data profiles of one (frame, angle) slice."""

    signed_radii: np.ndarray
    g: np.ndarray
    p: np.ndarray
    q: np.ndarray


def default_polar_grid(n_pixels: int, k0: float, n_radii: Optional[int] = None,
                       n_angles: int = 180, r_max_fraction: float = 0.95):
    """Radii uniform on [0, r_max_fraction*k0), angles uniform on [0, pi)."""
    if n_radii is None:
        n_radii = n_pixels // 2
    radii = np.linspace(0.0, r_max_fraction * k0, n_radii, endpoint=False)
    angles = np.linspace(0.0, np.pi, n_angles, endpoint=False)
    return radii, angles


def signed_radius_grid(radii: np.ndarray) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    if radii[0] != 0.0:
        raise ValueError("radii must start at 0")
    return np.concatenate([-radii[:0:-1], radii])


def nu_cartesian(m: FieldImage, k0: float, band_fraction: float = 0.99,
                 oversample: int = 1,
                 inner_exclusion: float = 0.0) -> CartesianEnergyGrid:
    """(2/pi) kappa^2 |F2[m]|^2 inside the band, zero outside.

    ``oversample`` > 1 zero-pads the field before the transform, refining
    the frequency grid by that factor; the band and scaling are unchanged.
    Off-grid interpolation of nu benefits accordingly.

    ``inner_exclusion`` additionally zeroes |k| below the given radius:
    the origin neighborhood is shared by every hemisphere (it carries no
    rotation information) and is where residuals of the incident-field
    subtraction concentrate.
    """
    if oversample > 1:
        n = m.n
        big = np.zeros((oversample * n, oversample * n), dtype=complex)
        lo = (oversample * n - n) // 2
        big[lo:lo + n, lo:lo + n] = m.values
        m = FieldImage(big, m.pitch)
    spec = fft2_centered(m)
    kk = spec.k_coords()
    K1, K2 = np.meshgrid(kk, kk, indexing="ij")
    ksq = K1**2 + K2**2
    vals = (2.0 / np.pi) * (k0**2 - ksq) * np.abs(spec.values) ** 2
    vals[ksq >= (band_fraction * k0) ** 2] = 0.0
    if inner_exclusion > 0.0:
        vals[ksq < inner_exclusion**2] = 0.0
    return CartesianEnergyGrid(vals, m.pitch, k0, band_fraction)


def nu_polar(stack: FieldStack, radii: np.ndarray, angles: np.ndarray,
             k0: Optional[float] = None, band_fraction: float = 0.99,
             oversample: int = 1) -> PolarEnergyGrid:
    """Polar resampling of the Cartesian energy of every frame.

    Evaluating nu on the Cartesian grid first keeps the exact translation
    invariance of the modulus; the polar grid then samples that grid with
    an interpolating cubic spline (zero extension outside the band).
    """
    if k0 is None:
        k0 = stack.k0
    radii = np.asarray(radii, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if np.any(radii >= band_fraction * k0):
        raise ValueError("radii must stay below the band cutoff")
    signed = signed_radius_grid(radii)
    kx = signed[None, :] * np.cos(angles)[:, None]
    ky = signed[None, :] * np.sin(angles)[:, None]
    nodes = np.stack([kx.ravel(), ky.ravel()], axis=1)
    T = stack.n_frames
    out = np.empty((T, angles.size, signed.size))
    for t in range(T):
        grid = nu_cartesian(stack.frame(t), k0, band_fraction, oversample)
        vals = grid.sample(nodes)
        out[t] = vals.reshape(angles.size, signed.size)
    np.clip(out, 0.0, None, out=out)   # spline undershoot; nu >= 0
    return PolarEnergyGrid(out, radii, signed, angles, k0)


def _smooth_radius(arr: np.ndarray) -> np.ndarray:
    return ndimage.correlate1d(arr, _SMOOTH, axis=2, mode="nearest")


def _smooth_time(arr: np.ndarray) -> np.ndarray:
    return ndimage.correlate1d(arr, _SMOOTH, axis=0, mode="nearest")


def _angle_neighbors(arr: np.ndarray):
    """Previous/next rows along the angle axis with the flip-wrap rule
    nu(r, phi+pi) = nu(-r, phi)."""
    prev = np.concatenate([arr[:, -1:, ::-1], arr[:, :-1, :]], axis=1)
    nxt = np.concatenate([arr[:, 1:, :], arr[:, :1, ::-1]], axis=1)
    return prev, nxt


def _smooth_angle(arr: np.ndarray) -> np.ndarray:
    prev, nxt = _angle_neighbors(arr)
    return 0.25 * prev + 0.5 * arr + 0.25 * nxt


def _deriv_time(arr: np.ndarray) -> np.ndarray:
    # central differences inside, one-sided at the ends, unit frame step
    return np.gradient(arr, axis=0, edge_order=1)


def _deriv_angle(arr: np.ndarray, dphi: float) -> np.ndarray:
    prev, nxt = _angle_neighbors(arr)
    return (nxt - prev) / (2.0 * dphi)


def sobel_time_derivative(values: np.ndarray) -> np.ndarray:
    return _deriv_time(_smooth_angle(_smooth_radius(values)))


def sobel_angle_derivative(values: np.ndarray, dphi: float) -> np.ndarray:
    return _deriv_angle(_smooth_time(_smooth_radius(values)), dphi)


def sobel_derivatives(grid: PolarEnergyGrid) -> PolarEnergyGrid:
    """Fill d/dt nu and d/dphi nu with the separable Sobel stencil."""
    T, L, _ = grid.values.shape
    if T < 3 or L < 3:
        raise ValueError("need at least 3 frames and 3 angles for Sobel")
    dt = sobel_time_derivative(grid.values)
    dphi = sobel_angle_derivative(grid.values, grid.dphi)
    return replace(grid, dt_nu=dt, dphi_nu=dphi)


def dphi_nu_spectral(m: FieldImage, radii: np.ndarray, angles: np.ndarray,
                     k0: float, method: str = "auto") -> np.ndarray:
    """Angular derivative of nu via the Fourier differentiation identity.

    d/dphi nu(r cos phi, r sin phi)
        = (4/pi) (k0^2 - r^2) Re( conj(F2[m]) * r <F2[-i x m], tangent> ),

    an alternative to the Sobel angle derivative with spectral accuracy.
    Radii may be signed; output shape is (len(angles), len(radii)).
    """
    radii = np.asarray(radii, dtype=float)
    angles = np.asarray(angles, dtype=float)
    x = m.x_coords()
    M1 = FieldImage(-1j * x[:, None] * m.values, m.pitch)
    M2 = FieldImage(-1j * x[None, :] * m.values, m.pitch)
    F = polar_samples(m, radii, angles, method=method)
    F1 = polar_samples(M1, radii, angles, method=method)
    F2 = polar_samples(M2, radii, angles, method=method)
    tangential = (-np.sin(angles)[:, None] * F1 + np.cos(angles)[:, None] * F2)
    kap2 = (k0**2 - radii**2)[None, :]
    return (4.0 / np.pi) * kap2 * np.real(np.conj(F) * radii[None, :] * tangential)


def radial_factor(signed_radii: np.ndarray, k0: float) -> np.ndarray:
    """(k0 - sqrt(k0^2 - r^2)) / r with the limit value 0 at r = 0."""
    r = np.asarray(signed_radii, dtype=float)
    out = np.zeros_like(r)
    nz = r != 0.0
    out[nz] = (k0 - np.sqrt(k0**2 - r[nz] ** 2)) / r[nz]
    return out


def gpq_profile(grid: PolarEnergyGrid, t: int, ell: int) -> GPQProfile:
    """Signed-radius data profiles g, p, q for frame t and angle index ell."""
    if not grid.has_derivatives():
        raise ValueError("run sobel_derivatives first")
    g = grid.dt_nu[t, ell]
    q = grid.dphi_nu[t, ell]
    p = radial_factor(grid.signed_radii, grid.k0) * q
    return GPQProfile(grid.signed_radii, g, p, q)


def solve_rho_zeta(profile: GPQProfile, dr: Optional[float] = None) -> tuple:
    """Least-squares (rho, zeta) for g ~ rho p + zeta q, plus the residual.

    Inner products are Riemann sums on the signed radius grid.  A nearly
    dependent (p, q) pair is rejected.
    """
    if dr is None:
        dr = float(profile.signed_radii[1] - profile.signed_radii[0])
    p, q, g = profile.p, profile.q, profile.g
    a = dr * np.dot(p, p)
    b = dr * np.dot(p, q)
    c = dr * np.dot(q, q)
    tr, det = a + c, a * c - b * b
    disc = np.sqrt(max(tr * tr / 4.0 - det, 0.0))
    lam_min, lam_max = tr / 2.0 - disc, tr / 2.0 + disc
    if lam_min <= 0.0 or lam_max / lam_min > DEGENERATE_COND:
        raise ValueError("degenerate profile: p and q nearly dependent")
    rhs1 = dr * np.dot(g, p)
    rhs2 = dr * np.dot(g, q)
    rho = (c * rhs1 - b * rhs2) / det
    zeta = (a * rhs2 - b * rhs1) / det
    resid = dr * np.sum((g - rho * p - zeta * q) ** 2)
    return float(rho), float(zeta), float(resid)


def estimate_omega_frame(grid: PolarEnergyGrid, t: int,
                         return_details: bool = False,
                         r_min: float = 0.0):
    """Angular velocity of one frame: solve the per-angle 2x2 systems and
    take the angle minimizing the residual.

    Angles with a degenerate (p, q) pair are skipped; if every angle is
    degenerate the frame is unusable and an error is raised.  Radii below
    ``r_min`` are excluded from the fit: near the origin all hemispheres
    coincide (no rotation information), while incident-subtraction
    residuals concentrate exactly there.
    """
    if not grid.has_derivatives():
        raise ValueError("run sobel_derivatives first")
    dr = float(grid.signed_radii[1] - grid.signed_radii[0])
    keep = np.abs(grid.signed_radii) >= r_min
    fac = radial_factor(grid.signed_radii, grid.k0)[keep]
    G = grid.dt_nu[t][:, keep]            # (L, R')
    Q = grid.dphi_nu[t][:, keep]
    P = fac[None, :] * Q
    a = dr * np.sum(P * P, axis=1)
    b = dr * np.sum(P * Q, axis=1)
    c = dr * np.sum(Q * Q, axis=1)
    tr, det = a + c, a * c - b * b
    disc = np.sqrt(np.clip(tr * tr / 4.0 - det, 0.0, None))
    lam_min, lam_max = tr / 2.0 - disc, tr / 2.0 + disc
    ok = (lam_min > 0.0) & (lam_max <= DEGENERATE_COND * lam_min)
    if not ok.any():
        raise ValueError(f"all angles degenerate at frame {t}")
    rhs1 = dr * np.sum(G * P, axis=1)
    rhs2 = dr * np.sum(G * Q, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = (c * rhs1 - b * rhs2) / det
        zeta = (a * rhs2 - b * rhs1) / det
    resid = dr * np.sum(
        (G - rho[:, None] * P - zeta[:, None] * Q) ** 2, axis=1)
    resid[~ok] = np.inf
    ell = int(np.argmin(resid))
    phi = float(grid.angles[ell])
    omega = np.array([rho[ell] * np.cos(phi), rho[ell] * np.sin(phi), zeta[ell]])
    if return_details:
        return omega, (float(rho[ell]), phi, float(zeta[ell]), ell,
                       float(resid[ell]))
    return omega

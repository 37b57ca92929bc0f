"""Raw total-field videos -> transformed measurements m_t.

Order used by the pipeline: incident-field estimation, Born subtraction or
Rytov transform, soft circular cutoff, 3D Gaussian pre-smoothing, and
optional in-plane shift compensation via circle fitting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .grids import FieldStack, coords

__all__ = [
    "IncidentEstimate",
    "ShiftEstimate",
    "estimate_incident",
    "born_subtract",
    "rytov_transform",
    "cutoff_profile",
    "soft_cutoff",
    "gaussian_smooth_3d",
    "estimate_shifts",
    "recenter",
]


@dataclass
class IncidentEstimate:
    """Per-frame incident-field surrogate: median phase and amplitude."""

    phi_med: np.ndarray
    a_med: np.ndarray

    def field(self) -> np.ndarray:
        """Complex incident estimate e^{i phi_med} per frame."""
        return np.exp(1j * self.phi_med)


class ShiftEstimate(NamedTuple):
    shifts: np.ndarray   # (T, 2) pixels, (row, col) offsets of the object
    warned: np.ndarray   # (T,) True where the fit fell back to zero


def _lower_median(a: np.ndarray) -> float:
    """Median taking the lower of the two middle values for even counts."""
    flat = np.sort(a, axis=None)
    return float(flat[(flat.size - 1) // 2])


def estimate_incident(stack: FieldStack,
                      smooth_window: int = 0) -> IncidentEstimate:
    """Per-frame lower median of phase and amplitude over all pixels.

    The physical incident field drifts slowly, so ``smooth_window`` > 1
    median-filters the per-frame series over time; that suppresses the
    frame-to-frame jitter the estimate picks up when the object's
    diffraction pattern fills most of the frame.
    """
    T = stack.n_frames
    phi = np.empty(T)
    amp = np.empty(T)
    for t in range(T):
        phi[t] = _lower_median(np.angle(stack.values[t]))
        amp[t] = _lower_median(np.abs(stack.values[t]))
    if smooth_window > 1:
        size = min(smooth_window, T)
        phi = ndimage.median_filter(phi, size=size, mode="nearest")
        amp = ndimage.median_filter(amp, size=size, mode="nearest")
    return IncidentEstimate(phi, amp)


def born_subtract(stack: FieldStack, inc: IncidentEstimate) -> FieldStack:
    """u_t = u_t^tot - e^{i phi_med_t}."""
    return stack.with_values(stack.values - inc.field()[:, None, None])


def rytov_transform(stack: FieldStack, inc: IncidentEstimate) -> FieldStack:
    """Rytov data u^inc * (i (phi - phi_med) + log(a / a_med)).

    Phase differences are wrapped to (-pi, pi] pointwise; no unwrapping.
    """
    a = np.abs(stack.values)
    if np.any(a == 0.0):
        t, i, j = np.argwhere(a == 0.0)[0]
        raise ValueError(
            f"zero amplitude at frame {t}, pixel ({i}, {j}); "
            "Rytov transform undefined")
    dphi = np.angle(stack.values) - inc.phi_med[:, None, None]
    dphi = np.angle(np.exp(1j * dphi))           # wrap to (-pi, pi]
    logs = np.log(a / inc.a_med[:, None, None])
    vals = inc.field()[:, None, None] * (1j * dphi + logs)
    return stack.with_values(vals)


def cutoff_profile(r: np.ndarray, r1: float, r2: float) -> np.ndarray:
    """C^1 radial window: 1 inside r1, 0 outside r2, cubic blend between."""
    if not 0.0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out[r <= r1] = 1.0
    mid = (r > r1) & (r < r2)
    rm = r[mid]
    out[mid] = (r2 - rm) ** 2 * (2.0 * rm + r2 - 3.0 * r1) / (r2 - r1) ** 3
    return out


def soft_cutoff(stack: FieldStack, r1: float, r2: float) -> FieldStack:
    """Multiply every frame by the circular cutoff around the frame center."""
    x = coords(stack.n, stack.pitch)
    rr = np.hypot(x[:, None], x[None, :])
    window = cutoff_profile(rr, r1, r2)
    return stack.with_values(stack.values * window[None, :, :])


def default_cutoff_radii(stack: FieldStack) -> tuple:
    """r2 at 95% of the half frame, r1 at 70% of r2."""
    r2 = 0.95 * (stack.n / 2) * stack.pitch
    return 0.7 * r2, r2


def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = int(np.floor(4.0 * sigma))
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth_3d(stack: FieldStack, sigma: float = 0.65) -> FieldStack:
    """Separable Gaussian over (t, x1, x2), kernel cut at 4 sigma and
    renormalized; edges replicate."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    k = _gauss_kernel(sigma)
    out = stack.values
    for axis in range(3):
        out = (ndimage.correlate1d(out.real, k, axis=axis, mode="nearest")
               + 1j * ndimage.correlate1d(out.imag, k, axis=axis, mode="nearest"))
    return stack.with_values(out)


def _kasa_circle_fit(rows: np.ndarray, cols: np.ndarray) -> tuple:
    """Algebraic least-squares circle fit; returns the center (row, col)."""
    A = np.column_stack([rows, cols, np.ones_like(rows)])
    b = -(rows**2 + cols**2)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return -sol[0] / 2.0, -sol[1] / 2.0


def estimate_shifts(stack: FieldStack, threshold_frac: float = 0.75,
                    median_size: int = 3) -> ShiftEstimate:
    """Per-frame in-plane object shift from a circle fit of the object
    footprint in |u_t|.

    |u_t| is median filtered, thresholded at a fraction of its maximum, and
    the boundary of the resulting region is fitted with an algebraic
    circle.  The shift is the fitted center minus the frame center, in
    pixels.  Empty regions yield shift (0, 0) with a warning flag.
    """
    T, n = stack.n_frames, stack.n
    center = n // 2
    shifts = np.zeros((T, 2))
    warned = np.zeros(T, dtype=bool)
    for t in range(T):
        amp = ndimage.median_filter(np.abs(stack.values[t]), size=median_size)
        mask = amp >= threshold_frac * amp.max()
        if not mask.any() or amp.max() == 0.0:
            warned[t] = True
            continue
        boundary = mask & ~ndimage.binary_erosion(mask)
        rows, cols = np.nonzero(boundary if boundary.sum() >= 3 else mask)
        ci, cj = _kasa_circle_fit(rows.astype(float), cols.astype(float))
        shifts[t] = (ci - center, cj - center)
    return ShiftEstimate(shifts, warned)


def recenter(stack: FieldStack, shifts: np.ndarray) -> FieldStack:
    """Bilinear resample each frame by minus its shift; reads outside the
    frame give 0."""
    shifts = np.asarray(shifts, dtype=float)
    if not np.all(np.isfinite(shifts)):
        raise ValueError("shifts must be finite")
    n = stack.n
    ii, jj = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float),
                         indexing="ij")
    out = np.empty_like(stack.values)
    for t in range(stack.n_frames):
        coords_t = np.stack([ii + shifts[t, 0], jj + shifts[t, 1]])
        out[t] = (ndimage.map_coordinates(stack.values[t].real, coords_t,
                                          order=1, cval=0.0)
                  + 1j * ndimage.map_coordinates(stack.values[t].imag, coords_t,
                                                 order=1, cval=0.0))
    return stack.with_values(out)

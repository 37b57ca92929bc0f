"""Synthetic data generation: bead-in-ellipsoid phantoms, rigid motion,
the linear Born forward model, a split-step beam-propagation (BPM) forward
model, and reproducible noise injection.

The Born model evaluates the 3D object spectrum on rotated Ewald
hemisphere nodes (no per-frame volume resampling); the BPM path marches
the field through the rotated volume in real space and is deliberately a
different physical model, so estimation on BPM data avoids the inverse
crime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from . import so3
from .fourier import Ndft3Evaluator, ifft2_centered, ndft3
from .grids import FieldImage, FieldStack, SpectrumImage, VolumeGrid, coords, freqs

__all__ = [
    "PhantomSpec",
    "Phantom",
    "MeasurementGeometry",
    "make_phantom",
    "n_to_f",
    "f_to_n",
    "apply_rigid_motion",
    "hemisphere_nodes",
    "born_measure",
    "born_stack",
    "bpm_measure",
    "bpm_stack",
    "add_noise",
    "sigma_for_snr",
    "constant_rotation_trajectory",
]


@dataclass
class PhantomSpec:
    """Parameters of the synthetic cell-like phantom (lengths in microns)."""

    grid_n: int = 64
    pitch: float = 0.15
    n0: float = 1.33
    wavelength: float = 0.64
    semi_axes: tuple = (3.0, 2.2, 2.0)     # ellipsoid, major axis 6 um
    n_ellipsoid: float = 1.36
    bead_count: int = 12
    bead_radius: float = 0.4
    n_bead: float = 1.41
    seed: int = 1234


@dataclass
class Phantom:
    """Refractive-index volume plus the optical constants deriving k0."""

    index: VolumeGrid
    n0: float
    wavelength: float

    @property
    def k0(self) -> float:
        return 2.0 * np.pi * self.n0 / self.wavelength


@dataclass
class MeasurementGeometry:
    """Acquisition description: image raster, laser, medium, plane offset."""

    n_pixels: int
    pitch: float
    wavelength: float
    n0: float
    plane_offset: float = 0.0
    band_fraction: float = 0.99

    def __post_init__(self):
        if self.n_pixels % 2 != 0:
            raise ValueError("n_pixels must be even")
        for name in ("pitch", "wavelength", "n0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def k0(self) -> float:
        return 2.0 * np.pi * self.n0 / self.wavelength


def make_phantom(spec: PhantomSpec = PhantomSpec()) -> Phantom:
    """Seeded ellipsoid-plus-beads refractive index volume.

    Beads are placed uniformly inside the ellipsoid (fully contained, not
    overlapping each other); placement failure after bounded retries is an
    error rather than a silent miss.
    """
    n = spec.grid_n
    x = coords(n, spec.pitch)
    X1, X2, X3 = np.meshgrid(x, x, x, indexing="ij")
    a, b, c = spec.semi_axes
    vol = np.full((n, n, n), spec.n0)
    inside = (X1 / a) ** 2 + (X2 / b) ** 2 + (X3 / c) ** 2 <= 1.0
    vol[inside] = spec.n_ellipsoid

    rng = np.random.default_rng(spec.seed)
    centers = []
    attempts = 0
    max_attempts = 200 * max(spec.bead_count, 1)
    while len(centers) < spec.bead_count:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(
                "bead placement failed; too many beads for the ellipsoid")
        cand = rng.uniform(-1.0, 1.0, size=3) * np.array([a, b, c])
        margin = (
            (cand[0] / max(a - spec.bead_radius, 1e-9)) ** 2
            + (cand[1] / max(b - spec.bead_radius, 1e-9)) ** 2
            + (cand[2] / max(c - spec.bead_radius, 1e-9)) ** 2
        )
        if margin > 1.0:
            continue
        if any(np.linalg.norm(cand - p) < 2.0 * spec.bead_radius for p in centers):
            continue
        centers.append(cand)
    for p in centers:
        ball = ((X1 - p[0]) ** 2 + (X2 - p[1]) ** 2 + (X3 - p[2]) ** 2
                <= spec.bead_radius**2)
        vol[ball] = spec.n_bead

    return Phantom(VolumeGrid(vol, spec.pitch), spec.n0, spec.wavelength)


def n_to_f(phantom: Phantom) -> VolumeGrid:
    """Scattering potential f = k0^2 (n^2/n0^2 - 1)."""
    # index volumes are real by construction; a volume loaded from the
    # complex64 file format carries a zero imaginary part
    n = np.asarray(phantom.index.values).real.astype(float)
    f = phantom.k0**2 * ((n / phantom.n0) ** 2 - 1.0)
    return VolumeGrid(f, phantom.index.pitch)


def f_to_n(f: VolumeGrid, n0: float, k0: float) -> VolumeGrid:
    """Refractive index n = n0 sqrt(f/k0^2 + 1); inverse of :func:`n_to_f`."""
    arg = np.asarray(f.values).real / k0**2 + 1.0
    if np.any(arg < 0):
        raise ValueError("nonphysical potential: f/k0^2 + 1 < 0")
    return VolumeGrid(n0 * np.sqrt(arg), f.pitch)


def apply_rigid_motion(vol: VolumeGrid, R: np.ndarray, d=(0.0, 0.0, 0.0)) -> VolumeGrid:
    """Resample f(R(x - d)) trilinearly; reads outside the grid give 0."""
    n = vol.n
    p = vol.pitch
    d = np.asarray(d, dtype=float)
    x = coords(n, p)
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=0).reshape(3, -1)
    Y = np.asarray(R) @ (X - d[:, None])
    idx = Y / p + n // 2
    vals = np.asarray(vol.values)
    if np.iscomplexobj(vals):
        out = (ndimage.map_coordinates(vals.real, idx, order=1, cval=0.0)
               + 1j * ndimage.map_coordinates(vals.imag, idx, order=1, cval=0.0))
    else:
        out = ndimage.map_coordinates(vals, idx, order=1, cval=0.0)
    return VolumeGrid(out.reshape(n, n, n), p)


def hemisphere_nodes(geom: MeasurementGeometry):
    """Ewald hemisphere lift of the in-band 2D frequency grid.

    Returns (mask, k2d, h, kappa): ``mask`` flags grid frequencies with
    ``|k| < band_fraction * k0``; ``k2d`` (m, 2) are those frequencies;
    ``h`` (m, 3) the lifted nodes (k1, k2, kappa - k0); ``kappa`` (m,).
    """
    k0 = geom.k0
    kk = freqs(geom.n_pixels, geom.pitch)
    K1, K2 = np.meshgrid(kk, kk, indexing="ij")
    mask = K1**2 + K2**2 < (geom.band_fraction * k0) ** 2
    k2d = np.stack([K1[mask], K2[mask]], axis=1)
    kappa = np.sqrt(k0**2 - np.sum(k2d**2, axis=1))
    h = np.column_stack([k2d, kappa - k0])
    return mask, k2d, h, kappa


def born_measure(f: VolumeGrid, geom: MeasurementGeometry,
                 R: Optional[np.ndarray] = None, d=(0.0, 0.0, 0.0),
                 method: str = "auto",
                 evaluator: Optional[Ndft3Evaluator] = None) -> FieldImage:
    """Scattered field at the measurement plane under the Born model.

    The 2D spectrum of the output is
    sqrt(pi/2) * i e^{i kappa r_M} / kappa * F3[f](R h(k)) * e^{-i <d, h(k)>}
    inside the band and zero outside; the field is its inverse transform.
    """
    R = np.eye(3) if R is None else np.asarray(R)
    d = np.asarray(d, dtype=float)
    mask, k2d, h, kappa = hemisphere_nodes(geom)
    nodes = h @ R.T
    if np.any(np.abs(nodes) * f.pitch >= np.pi):
        raise ValueError("band violation: rotated hemisphere nodes exceed "
                         "the volume band; decrease the pitch")
    if evaluator is not None:
        fvals = evaluator(nodes)
    else:
        fvals = ndft3(f, nodes, method=method)
    diag = (np.sqrt(np.pi / 2.0) * 1j
            * np.exp(1j * kappa * geom.plane_offset) / kappa)
    spec = np.zeros((geom.n_pixels, geom.n_pixels), dtype=complex)
    spec[mask] = diag * fvals * np.exp(-1j * (h @ d))
    return ifft2_centered(SpectrumImage(spec, geom.pitch))


def born_stack(f: VolumeGrid, geom: MeasurementGeometry,
               traj: so3.RotationTrajectory, method: str = "auto",
               total_field: bool = False) -> FieldStack:
    """Born-model frames for a whole trajectory (one spectrum reuse).

    With ``total_field`` the incident plane wave e^{i k0 r_M} is added,
    mimicking what a camera-side interferogram would give.
    """
    T = len(traj)
    evaluator = Ndft3Evaluator(f) if method in ("auto", "fast") else None
    frames = np.empty((T, geom.n_pixels, geom.n_pixels), dtype=complex)
    for t in range(T):
        img = born_measure(f, geom, traj.rotations[t], traj.translation(t),
                           method=method, evaluator=evaluator)
        frames[t] = img.values
    if total_field:
        frames += np.exp(1j * geom.k0 * geom.plane_offset)
    return FieldStack(frames, geom.pitch, geom.wavelength, geom.n0,
                      geom.plane_offset)


def _bpm_propagate(u: np.ndarray, dz: float, pitch: float, k0: float) -> np.ndarray:
    """Non-paraxial angular-spectrum step; evanescent components are zeroed."""
    n = u.shape[0]
    kk = 2.0 * np.pi * np.fft.fftfreq(n, pitch)
    K1, K2 = np.meshgrid(kk, kk, indexing="ij")
    ksq = K1**2 + K2**2
    prop = np.zeros_like(u, dtype=complex)
    ok = ksq < k0**2
    prop[ok] = np.exp(1j * dz * np.sqrt(k0**2 - ksq[ok]))
    return np.fft.ifft2(np.fft.fft2(u) * prop)


def bpm_measure(phantom: Phantom, geom: MeasurementGeometry,
                R: Optional[np.ndarray] = None, d=(0.0, 0.0, 0.0)) -> FieldImage:
    """Total field at the measurement plane via split-step beam propagation.

    Per voxel slice along x3: phase screen exp(i k0 (n/n0 - 1) dz), then an
    angular-spectrum step of one voxel; finally a homogeneous step from the
    exit plane to the measurement plane (negative distances allowed).
    """
    R = np.eye(3) if R is None else np.asarray(R)
    contrast = VolumeGrid(phantom.index.values - phantom.n0, phantom.index.pitch)
    if not np.allclose(R, np.eye(3)) or np.any(np.asarray(d) != 0.0):
        contrast = apply_rigid_motion(contrast, R, d)
    n_vol = contrast.values + phantom.n0

    p = phantom.index.pitch
    nv = phantom.index.n
    k0 = phantom.k0
    x3 = coords(nv, p)
    u = np.full((nv, nv), np.exp(1j * k0 * x3[0]), dtype=complex)
    for i3 in range(nv):
        u = u * np.exp(1j * k0 * (n_vol[:, :, i3] / phantom.n0 - 1.0) * p)
        u = _bpm_propagate(u, p, p, k0)
    exit_plane = x3[0] + nv * p
    u = _bpm_propagate(u, geom.plane_offset - exit_plane, p, k0)
    if geom.n_pixels != nv:
        raise ValueError("BPM path requires matching image and volume rasters")
    return FieldImage(u, p)


def bpm_stack(phantom: Phantom, geom: MeasurementGeometry,
              traj: so3.RotationTrajectory) -> FieldStack:
    frames = np.empty((len(traj), geom.n_pixels, geom.n_pixels), dtype=complex)
    for t in range(len(traj)):
        frames[t] = bpm_measure(phantom, geom, traj.rotations[t],
                                traj.translation(t)).values
    return FieldStack(frames, geom.pitch, geom.wavelength, geom.n0,
                      geom.plane_offset)


def add_noise(stack: FieldStack, sigma: float, seed: int = 0,
              phase_drift: float = 0.0,
              noise_clip: Optional[np.ndarray] = None) -> FieldStack:
    """Additive complex Gaussian noise (sigma per real component) plus an
    optional slowly varying global phase drift per frame.

    A recorded noise clip (same shape as the stack) can be added instead of
    or on top of the synthetic noise.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    vals = stack.values.copy()
    if phase_drift > 0.0:
        T = stack.n_frames
        phase0 = rng.uniform(0.0, 2.0 * np.pi)
        drift = phase_drift * np.sin(2.0 * np.pi * np.arange(T) / T + phase0)
        vals = vals * np.exp(1j * drift)[:, None, None]
    if sigma > 0.0:
        noise = rng.normal(scale=sigma, size=vals.shape + (2,))
        vals = vals + noise[..., 0] + 1j * noise[..., 1]
    if noise_clip is not None:
        clip = np.asarray(noise_clip)
        if clip.shape != vals.shape:
            raise ValueError("noise clip shape does not match the stack")
        vals = vals + clip
    return stack.with_values(vals)


def sigma_for_snr(stack: FieldStack, snr_db: float) -> float:
    """Per-component sigma so complex noise power hits the requested SNR
    relative to the mean power of the stack."""
    power = np.mean(np.abs(stack.values) ** 2)
    return float(np.sqrt(power / (2.0 * 10.0 ** (snr_db / 10.0))))


def constant_rotation_trajectory(n_frames: int, axis=(0.0, 1.0, 0.0),
                                 rate: Optional[float] = None,
                                 translations: Optional[np.ndarray] = None
                                 ) -> so3.RotationTrajectory:
    """R_t = exp(t * rate * skew(axis)); default rate is one full turn."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    if rate is None:
        rate = 2.0 * np.pi / n_frames
    frames = np.stack([so3.rotation_exp(t * rate * axis) for t in range(n_frames)])
    return so3.RotationTrajectory(frames, translations)

"""Array containers shared across the pipeline.

Sampling convention: an N-point axis (N even) covers physical positions
``pitch * n`` for integer ``n`` in ``{-N/2, ..., N/2 - 1}``; array index i
maps to ``n = i - N/2``.  The matching centered frequency grid has spacing
``2*pi/(N*pitch)`` over the same index set, so the representable band per
axis is ``(-pi/pitch, pi/pitch)``.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

__all__ = [
    "coords",
    "freqs",
    "FieldImage",
    "SpectrumImage",
    "FieldStack",
    "VolumeGrid",
]


def coords(n: int, pitch: float) -> np.ndarray:
    """Physical sample positions pitch * {-n/2, ..., n/2 - 1}."""
    return pitch * (np.arange(n) - n // 2)


def freqs(n: int, pitch: float) -> np.ndarray:
    """Centered frequency grid (rad/length), spacing 2*pi/(n*pitch)."""
    return (2.0 * np.pi / (n * pitch)) * (np.arange(n) - n // 2)


def _check_square(values: np.ndarray, ndim: int):
    if values.ndim != ndim or len(set(values.shape)) != 1:
        raise ValueError(f"expected a cubic/square {ndim}-d array, got {values.shape}")
    if values.shape[0] % 2 != 0:
        raise ValueError("grid size must be even")


@dataclass
class FieldImage:
    """Complex 2D field samples on the centered spatial grid.

    Axis 0 is x1, axis 1 is x2.
    """

    values: np.ndarray
    pitch: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        _check_square(self.values, 2)
        if self.pitch <= 0:
            raise ValueError("pitch must be positive")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def x_coords(self) -> np.ndarray:
        return coords(self.n, self.pitch)


@dataclass
class SpectrumImage:
    """Complex 2D spectrum on the centered frequency grid.

    Values are scaled to approximate the continuous unitary-convention
    Fourier transform of the corresponding :class:`FieldImage`.
    """

    values: np.ndarray
    pitch: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        _check_square(self.values, 2)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def freq_step(self) -> float:
        return 2.0 * np.pi / (self.n * self.pitch)

    def k_coords(self) -> np.ndarray:
        return freqs(self.n, self.pitch)


@dataclass
class FieldStack:
    """Time-indexed complex fields with the acquisition metadata needed by
    the preprocessing and estimation stages.

    ``values`` has shape (T, N, N).  ``plane_offset`` is the x3 position of
    the measurement plane relative to the sample center.
    """

    values: np.ndarray
    pitch: float
    wavelength: float
    n0: float
    plane_offset: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3 or self.values.shape[1] != self.values.shape[2]:
            raise ValueError("stack values must have shape (T, N, N)")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def k0(self) -> float:
        return 2.0 * np.pi * self.n0 / self.wavelength

    def frame(self, t: int) -> FieldImage:
        return FieldImage(self.values[t], self.pitch)

    def amplitude(self) -> np.ndarray:
        return np.abs(self.values)

    def phase(self) -> np.ndarray:
        return np.angle(self.values)

    def with_values(self, values: np.ndarray) -> "FieldStack":
        """Copy of the stack with replaced frame data, same metadata."""
        return FieldStack(values, self.pitch, self.wavelength, self.n0,
                          self.plane_offset)


@dataclass
class VolumeGrid:
    """Cubic 3D raster (scattering potential or refractive index)."""

    values: np.ndarray
    pitch: float

    def __post_init__(self):
        self.values = np.asarray(self.values)
        _check_square(self.values, 3)
        if self.pitch <= 0:
            raise ValueError("pitch must be positive")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def x_coords(self) -> np.ndarray:
        return coords(self.n, self.pitch)

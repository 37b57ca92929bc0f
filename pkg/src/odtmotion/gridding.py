"""Kaiser-Bessel gridding for fast nonuniform DFT evaluation.

Works in normalized frequency units w = pitch * nu (radians per sample),
|w| < pi.  The type-2 transform evaluates, for samples ``g`` indexed by
n in {-N/2, .., N/2-1}^d,

    S(w) = sum_n g[n] exp(-i <n, w>)

by deapodization, a zero-padded FFT on a 2x oversampled grid, and local
interpolation with a Kaiser-Bessel window.  The adjoint routine is the
exact adjoint of the approximate forward map (spread, FFT, crop,
deapodize), so adjoint-pair identities hold to machine precision while
both maps match the exact sums to roughly 1e-7 relative at width 8.

:class:`Type2Plan` precomputes the node weights for repeated application
with fixed nodes (the conjugate-gradient solver's access pattern);
:func:`fine_spectrum` + :func:`type2_from_spectrum` cover the opposite
pattern of a fixed grid evaluated at changing nodes.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Type2Plan", "nufft_type2", "nufft_type2_adjoint",
           "fine_spectrum", "type2_from_spectrum",
           "DEFAULT_WIDTH", "DEFAULT_OVERSAMPLE"]

DEFAULT_WIDTH = 8
DEFAULT_OVERSAMPLE = 2
_CHUNK = 4096


def _beta(width: int, oversample: float) -> float:
    # Beatty et al. choice for the Kaiser-Bessel shape parameter.
    return np.pi * np.sqrt(
        (width / oversample) ** 2 * (oversample - 0.5) ** 2 - 0.8
    )


def _deapod_1d(n: int, n_fine: int, width: int, beta: float) -> np.ndarray:
    """Fourier factor of the (unnormalized) KB window at modes -n/2..n/2-1."""
    half = width * np.pi / n_fine
    lam = half * (np.arange(n) - n // 2)
    root = np.sqrt(beta**2 - lam**2)    # stays positive for oversample >= 2
    return (half / np.pi) * np.sinh(root) / root


def _kernel_weights(w: np.ndarray, n_fine: int, width: int, beta: float):
    """Neighboring fine-grid indices and KB weights for one axis.

    ``w`` is (m,) normalized frequencies; returns (idx, wt) of shape
    (m, width), with idx wrapped into [0, n_fine) fft-shifted storage.
    """
    pos = w * n_fine / (2.0 * np.pi)
    k0 = np.ceil(pos - width / 2.0).astype(np.int64)
    offs = np.arange(width)
    k = k0[:, None] + offs[None, :]
    s = (pos[:, None] - k) * (2.0 / width)
    inside = np.abs(s) <= 1.0
    wt = np.zeros_like(s)
    wt[inside] = np.i0(beta * np.sqrt(1.0 - s[inside] ** 2))
    idx = (k + n_fine // 2) % n_fine
    return idx, wt


def _centered_fftn(a: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(a)))


def _centered_ifftn(a: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(a)))


def _pad_centered(a: np.ndarray, n_fine: int) -> np.ndarray:
    n = a.shape[0]
    out = np.zeros((n_fine,) * a.ndim, dtype=complex)
    lo = (n_fine - n) // 2
    out[tuple(slice(lo, lo + n) for _ in range(a.ndim))] = a
    return out


def _crop_centered(a: np.ndarray, n: int) -> np.ndarray:
    lo = (a.shape[0] - n) // 2
    return a[tuple(slice(lo, lo + n) for _ in range(a.ndim))]


def _deapodize(a: np.ndarray, dea: np.ndarray) -> np.ndarray:
    for ax in range(a.ndim):
        shape = [1] * a.ndim
        shape[ax] = dea.size
        a = a / dea.reshape(shape)
    return a


def _gather(flat: np.ndarray, idx, wt, n_fine: int, lo: int, hi: int
            ) -> np.ndarray:
    d = len(idx)
    if d == 2:
        lin = idx[0][lo:hi, :, None] * n_fine + idx[1][lo:hi, None, :]
        return np.einsum("mab,ma,mb->m", flat[lin], wt[0][lo:hi], wt[1][lo:hi])
    if d == 3:
        lin = ((idx[0][lo:hi, :, None, None] * n_fine
                + idx[1][lo:hi, None, :, None]) * n_fine
               + idx[2][lo:hi, None, None, :])
        return np.einsum("mabc,ma,mb,mc->m", flat[lin],
                         wt[0][lo:hi], wt[1][lo:hi], wt[2][lo:hi])
    raise ValueError("only 2D and 3D supported")


def _scatter_linidx(idx, n_fine: int, lo: int, hi: int) -> np.ndarray:
    d = len(idx)
    if d == 2:
        return (idx[0][lo:hi, :, None] * n_fine + idx[1][lo:hi, None, :]).ravel()
    return ((idx[0][lo:hi, :, None, None] * n_fine
             + idx[1][lo:hi, None, :, None]) * n_fine
            + idx[2][lo:hi, None, None, :]).ravel()


def _scatter_weights(v: np.ndarray, wt, lo: int, hi: int) -> np.ndarray:
    d = len(wt)
    if d == 2:
        return (wt[0][lo:hi, :, None] * wt[1][lo:hi, None, :]
                * v[lo:hi, None, None]).ravel()
    return (wt[0][lo:hi, :, None, None] * wt[1][lo:hi, None, :, None]
            * wt[2][lo:hi, None, None, :] * v[lo:hi, None, None, None]).ravel()


class Type2Plan:
    """Precomputed interpolation data for repeated transforms at fixed
    nonuniform nodes against a changing size-n^d grid."""

    def __init__(self, n: int, w_nodes: np.ndarray,
                 width: int = DEFAULT_WIDTH,
                 oversample: int = DEFAULT_OVERSAMPLE):
        w_nodes = np.atleast_2d(np.asarray(w_nodes, dtype=float))
        self.n = n
        self.d = w_nodes.shape[1]
        self.n_nodes = w_nodes.shape[0]
        self.width = width
        self.n_fine = oversample * n
        beta = _beta(width, oversample)
        self.dea = _deapod_1d(n, self.n_fine, width, beta)
        pairs = [_kernel_weights(w_nodes[:, ax], self.n_fine, width, beta)
                 for ax in range(self.d)]
        self.idx = [p[0] for p in pairs]
        self.wt = [p[1] for p in pairs]

    def forward(self, values: np.ndarray) -> np.ndarray:
        """sum_n g[n] exp(-i <n, w>) at the planned nodes."""
        g = _deapodize(np.asarray(values, dtype=complex), self.dea)
        spec = _centered_fftn(_pad_centered(g, self.n_fine)) / self.n_fine**self.d
        flat = spec.ravel()
        out = np.empty(self.n_nodes, dtype=complex)
        for lo in range(0, self.n_nodes, _CHUNK):
            hi = min(lo + _CHUNK, self.n_nodes)
            out[lo:hi] = _gather(flat, self.idx, self.wt, self.n_fine, lo, hi)
        return out

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        """Exact adjoint of :meth:`forward`."""
        v = np.asarray(v, dtype=complex)
        size = self.n_fine**self.d
        fine_re = np.zeros(size)
        fine_im = np.zeros(size)
        for lo in range(0, self.n_nodes, _CHUNK):
            hi = min(lo + _CHUNK, self.n_nodes)
            lin = _scatter_linidx(self.idx, self.n_fine, lo, hi)
            contrib = _scatter_weights(v, self.wt, lo, hi)
            fine_re += np.bincount(lin, weights=contrib.real, minlength=size)
            fine_im += np.bincount(lin, weights=contrib.imag, minlength=size)
        fine = (fine_re + 1j * fine_im).reshape((self.n_fine,) * self.d)
        grid = _crop_centered(_centered_ifftn(fine), self.n)
        return _deapodize(grid, self.dea)


def fine_spectrum(values: np.ndarray, width: int = DEFAULT_WIDTH,
                  oversample: int = DEFAULT_OVERSAMPLE) -> np.ndarray:
    """Deapodized, oversampled, centered FFT of the input grid, reusable
    across :func:`type2_from_spectrum` calls with different nodes."""
    n = values.shape[0]
    n_fine = oversample * n
    beta = _beta(width, oversample)
    dea = _deapod_1d(n, n_fine, width, beta)
    g = _deapodize(np.asarray(values, dtype=complex), dea)
    return _centered_fftn(_pad_centered(g, n_fine)) / n_fine**g.ndim


def type2_from_spectrum(spectrum: np.ndarray, w_nodes: np.ndarray,
                        width: int = DEFAULT_WIDTH,
                        oversample: int = DEFAULT_OVERSAMPLE) -> np.ndarray:
    """Interpolate a precomputed fine spectrum at normalized frequencies."""
    w_nodes = np.atleast_2d(np.asarray(w_nodes, dtype=float))
    d = w_nodes.shape[1]
    n_fine = spectrum.shape[0]
    beta = _beta(width, oversample)
    flat = spectrum.ravel()
    out = np.empty(w_nodes.shape[0], dtype=complex)
    for lo in range(0, w_nodes.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, w_nodes.shape[0])
        pairs = [_kernel_weights(w_nodes[lo:hi, ax], n_fine, width, beta)
                 for ax in range(d)]
        idx = [p[0] for p in pairs]
        wt = [p[1] for p in pairs]
        out[lo:hi] = _gather(flat, idx, wt, n_fine, 0, hi - lo)
    return out


def nufft_type2(values: np.ndarray, w_nodes: np.ndarray,
                width: int = DEFAULT_WIDTH,
                oversample: int = DEFAULT_OVERSAMPLE) -> np.ndarray:
    """Fast evaluation of sum_n g[n] exp(-i <n, w>) at arbitrary nodes."""
    return type2_from_spectrum(fine_spectrum(values, width, oversample),
                               w_nodes, width, oversample)


def nufft_type2_adjoint(v: np.ndarray, w_nodes: np.ndarray, n: int,
                        width: int = DEFAULT_WIDTH,
                        oversample: int = DEFAULT_OVERSAMPLE) -> np.ndarray:
    """Exact adjoint of :func:`nufft_type2`."""
    return Type2Plan(n, w_nodes, width, oversample).adjoint(v)

"""Pairwise ("direct") common-circle refinement of a rotation trajectory.

For a frame pair (s, t), the incremental rotation R_s^T R_t with Euler
angles (phi, theta, psi) maps the two parameterized arcs

    gamma(beta)      on frame s   <->  gamma at (pi - psi, theta) at -beta on frame t
    gamma*(beta)     on frame s   <->  gamma* at (pi - psi, theta) at beta on frame t

onto the intersections of the corresponding Ewald hemispheres (the dual
arc exists because the object is lossless).  The spectral energy nu must
agree along matched arcs, so the squared mismatch over both arcs, plus a
rotation-distance pull toward the current trajectory estimate, is
minimized per pair with a Nelder-Mead simplex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import so3
from .energy import CartesianEnergyGrid
from .grids import FieldStack
from .so3 import EulerAngles

__all__ = [
    "CirclePair",
    "PairSchedule",
    "NuInterpolator",
    "circle_curve",
    "dual_circle_curve",
    "pair_energy",
    "regularized_pair_energy",
    "nelder_mead",
    "minimize_pair",
    "estimate_period",
    "build_schedule",
    "direct_pipeline",
]


@dataclass
class CirclePair:
    """Result of one pairwise minimization."""

    s: int
    t: int
    euler: EulerAngles
    energy: float
    converged: bool


@dataclass
class PairSchedule:
    """Ordered pair list; every |t - s| lies in [min_offset, max_offset]."""

    pairs: List[Tuple[int, int]]
    passes: int
    min_offset: int
    max_offset: int


class NuInterpolator:
    """Cubic-spline evaluation of one frame's Cartesian energy grid with
    zero extension outside the band."""

    def __init__(self, grid: CartesianEnergyGrid):
        self.grid = grid
        self._coeffs = grid.interpolator()

    def __call__(self, nodes: np.ndarray) -> np.ndarray:
        return self.grid.sample(nodes, self._coeffs)


def _as_interpolator(nu) -> NuInterpolator:
    return nu if isinstance(nu, NuInterpolator) else NuInterpolator(nu)


def circle_curve(phi: float, theta: float, beta, k0: float) -> np.ndarray:
    """Common-circle arc parameterization; ``beta`` may be an array."""
    beta = np.asarray(beta, dtype=float)
    e_r = np.array([np.cos(phi), np.sin(phi)])
    e_t = np.array([-np.sin(phi), np.cos(phi)])
    rad = 0.5 * k0 * np.sin(theta) * (np.cos(beta) - 1.0)
    tan = k0 * np.cos(theta / 2.0) * np.sin(beta)
    return rad[..., None] * e_r + tan[..., None] * e_t


def dual_circle_curve(phi: float, theta: float, beta, k0: float) -> np.ndarray:
    """Dual common-circle arc (intersection with the mirrored hemisphere)."""
    beta = np.asarray(beta, dtype=float)
    e_r = np.array([np.cos(phi), np.sin(phi)])
    e_t = np.array([-np.sin(phi), np.cos(phi)])
    rad = -0.5 * k0 * np.sin(theta) * (np.cos(beta) - 1.0)
    tan = -k0 * np.sin(theta / 2.0) * np.sin(beta)
    return rad[..., None] * e_r + tan[..., None] * e_t


def _quad_betas(quad_points: int) -> np.ndarray:
    # midpoint rule on [-pi/2, pi/2]
    h = np.pi / quad_points
    return -np.pi / 2.0 + h * (np.arange(quad_points) + 0.5)


def pair_energy(nu_s, nu_t, euler, k0: float, quad_points: int = 200) -> float:
    """Squared nu mismatch along the matched circle and dual-circle arcs,
    integrated over beta with the midpoint rule.

    ``nu_s``/``nu_t`` are :class:`CartesianEnergyGrid` or prebuilt
    :class:`NuInterpolator`; points outside the band read as zero.
    """
    fs = _as_interpolator(nu_s)
    ft = _as_interpolator(nu_t)
    phi, theta, psi = euler
    betas = _quad_betas(quad_points)
    h = np.pi / quad_points
    vs = fs(circle_curve(phi, theta, betas, k0))
    vt = ft(circle_curve(np.pi - psi, theta, -betas, k0))
    vs_d = fs(dual_circle_curve(phi, theta, betas, k0))
    vt_d = ft(dual_circle_curve(np.pi - psi, theta, betas, k0))
    return float(h * (np.sum((vt - vs) ** 2) + np.sum((vt_d - vs_d) ** 2)))


def regularized_pair_energy(nu_s, nu_t, euler, prior: np.ndarray, lam: float,
                            k0: float, quad_points: int = 200) -> float:
    """pair_energy plus lam * distance(prior, rotation(euler))."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    e = pair_energy(nu_s, nu_t, euler, k0, quad_points)
    if lam > 0:
        e += lam * so3.distance(prior, so3.euler_to_rotation(euler))
    return e


def nelder_mead(func, x0: np.ndarray, initial_step: float = np.radians(5.0),
                xtol: float = 1e-4, max_evals: int = 500):
    """Plain Nelder-Mead simplex (reflection 1, expansion 2, contraction
    0.5, shrink 0.5); stops when the simplex diameter drops below ``xtol``
    or the evaluation budget is spent.

    Returns (x_best, f_best, converged, n_evals).
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    verts = [x0] + [x0 + initial_step * e for e in np.eye(n)]
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        return func(x)

    vals = [f(v) for v in verts]
    while True:
        order = np.argsort(vals)
        verts = [verts[i] for i in order]
        vals = [vals[i] for i in order]
        diam = max(np.linalg.norm(v - verts[0]) for v in verts[1:])
        if diam < xtol:
            return verts[0], vals[0], True, evals
        if evals >= max_evals:
            return verts[0], vals[0], False, evals
        centroid = np.mean(verts[:-1], axis=0)
        xr = centroid + (centroid - verts[-1])
        fr = f(xr)
        if vals[0] <= fr < vals[-2]:
            verts[-1], vals[-1] = xr, fr
        elif fr < vals[0]:
            xe = centroid + 2.0 * (centroid - verts[-1])
            fe = f(xe)
            if fe < fr:
                verts[-1], vals[-1] = xe, fe
            else:
                verts[-1], vals[-1] = xr, fr
        else:
            xc = centroid + 0.5 * (verts[-1] - centroid)
            fc = f(xc)
            if fc < vals[-1]:
                verts[-1], vals[-1] = xc, fc
            else:
                verts = [verts[0]] + [verts[0] + 0.5 * (v - verts[0])
                                      for v in verts[1:]]
                vals = [vals[0]] + [f(v) for v in verts[1:]]


def minimize_pair(nu_s, nu_t, init: EulerAngles, prior: np.ndarray,
                  lam: float, k0: float, quad_points: int = 200,
                  s: int = -1, t: int = -1,
                  axis_scan: Optional[np.ndarray] = None) -> CirclePair:
    """Nelder-Mead refinement of one pairwise increment starting at
    ``init`` (typically the Euler angles of the prior increment).

    ``axis_scan`` optionally lists scale factors; the increment angle is
    rescaled about the prior's own rotation axis and the best-scoring
    candidate seeds the simplex.  An initial trajectory whose speed is
    systematically off (the typical noisy-data failure of the per-frame
    estimator) is wrong in exactly that direction, far outside the basin
    a locally started simplex can reach.
    """
    fs = _as_interpolator(nu_s)
    ft = _as_interpolator(nu_t)

    def objective(x):
        return regularized_pair_energy(fs, ft, x, prior, lam, k0, quad_points)

    x0 = np.asarray(init, dtype=float)
    if axis_scan is not None and len(axis_scan):
        try:
            w = so3.rotation_log(prior)
        except ValueError:
            w = None
        if w is not None and np.linalg.norm(w) > 1e-9:
            norm = np.linalg.norm(w)
            cands = [np.asarray(
                so3.rotation_to_euler(so3.rotation_exp(c * w)), dtype=float)
                for c in axis_scan if c * norm < 0.95 * np.pi]
            cands.append(x0)
            scores = [objective(c) for c in cands]
            x0 = cands[int(np.argmin(scores))]
    best, fbest, converged, _ = nelder_mead(objective, x0)
    canonical = so3.rotation_to_euler(so3.euler_to_rotation(best))
    return CirclePair(s, t, canonical, float(fbest), converged)


def estimate_period(stack: FieldStack, min_lag: int = 2,
                    max_lag: Optional[int] = None) -> float:
    """Frames per full rotation, from the lag maximizing the mean Pearson
    correlation between |m_t| and |m_{t+lag}| (parabolic refinement).

    Raises if the stack shows no interior correlation maximum.
    """
    T = stack.n_frames
    if max_lag is None:
        max_lag = T - 2
    if not (0 < min_lag < max_lag < T):
        raise ValueError("invalid lag range")
    amp = np.abs(stack.values).reshape(T, -1)
    amp = amp - amp.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(amp, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("no periodicity detected: constant frames")
    amp = amp / norms[:, None]
    lags = np.arange(min_lag, max_lag + 1)
    score = np.array([np.mean(np.sum(amp[: T - lag] * amp[lag:], axis=1))
                      for lag in lags])
    i = int(np.argmax(score))
    if i == 0 or i == lags.size - 1:
        raise ValueError("no periodicity detected: correlation has no "
                         "interior maximum in the lag range")
    # parabolic sub-sample refinement around the peak
    y0, y1, y2 = score[i - 1], score[i], score[i + 1]
    denom = y0 - 2.0 * y1 + y2
    delta = 0.0 if denom == 0.0 else 0.5 * (y0 - y2) / denom
    return float(lags[i] + delta)


def build_schedule(T: int, period: float, passes: int = 3,
                   stride: Optional[int] = None,
                   offsets: Optional[Sequence[int]] = None,
                   offset_step: int = 1,
                   max_offset: Optional[int] = None) -> PairSchedule:
    """Frame pairs (s, s + offset) visited ``passes`` times.

    Offsets default to [period/10, 0.3*period], which keeps the increment
    angle away from 0 and 180 degrees where the hemispheres nearly
    coincide; the bounds are clipped to [max(2, period/10), 0.45*period].
    An infinite period disables the exclusion bounds (explicit offsets
    required).
    """
    if not np.isfinite(period):
        if offsets is None:
            raise ValueError("explicit offsets required when the period "
                             "exclusion is disabled")
        offsets = [int(o) for o in offsets if 1 <= o]
        if stride is None:
            stride = 1
    else:
        lo_bound = max(2, int(round(period / 10.0)))
        hi_bound = int(round(0.45 * period))
        if max_offset is not None:
            hi_bound = min(hi_bound, max_offset)
        if offsets is None:
            hi_default = min(int(round(0.3 * period)), hi_bound)
            offsets = range(lo_bound, hi_default + 1, offset_step)
        offsets = [int(o) for o in offsets if lo_bound <= o <= hi_bound]
        if stride is None:
            stride = max(1, int(round(period / 20.0)))
    pairs = []
    for _ in range(passes):
        for s in range(0, T, stride):
            for off in offsets:
                if s + off < T:
                    pairs.append((s, s + off))
    if not pairs:
        raise ValueError("empty pair schedule; check period and offsets")
    return PairSchedule(pairs, passes, min(offsets), max(offsets))


def _medoid(rotations: list) -> np.ndarray:
    """The member minimizing the summed distance to the others."""
    if len(rotations) == 1:
        return rotations[0]
    costs = [sum(so3.distance(Ri, Rj) for Rj in rotations)
             for Ri in rotations]
    return rotations[int(np.argmin(costs))]


def _interpolate_frame(rotations: np.ndarray, covered: np.ndarray, u: int,
                       init: np.ndarray) -> np.ndarray:
    """One frame between its nearest covered neighbors: slerp when bracketed,
    otherwise continued with the initial trajectory's increments."""
    anchors = np.nonzero(covered)[0]
    prev = anchors[anchors < u]
    nxt = anchors[anchors > u]
    if prev.size and nxt.size:
        a, b = prev[-1], nxt[0]
        try:
            return so3.slerp(rotations[a], rotations[b], (u - a) / (b - a))
        except ValueError:
            return rotations[a] @ (init[a].T @ init[u])
    if prev.size:
        a = prev[-1]
        return rotations[a] @ (init[a].T @ init[u])
    b = nxt[0]
    return rotations[b] @ (init[b].T @ init[u])


def _fill_uncovered(rotations: np.ndarray, covered: np.ndarray,
                    init: np.ndarray) -> np.ndarray:
    """Slerp frames never touched by a pair between their nearest anchored
    neighbors; a tail without a later anchor continues with the initial
    trajectory's increments."""
    out = rotations.copy()
    for u in range(rotations.shape[0]):
        if not covered[u]:
            out[u] = _interpolate_frame(rotations, covered, u, init)
    return out


# reference in-band mean for nu under the default pairwise regularization
# weight; calibrated so the rotation-distance pull stays a light touch on
# clean data yet reins the flat valley of the energy (see the repo notes)
NU_REFERENCE_MEAN = 300.0


def _normalized_grids(grids: Sequence[CartesianEnergyGrid],
                      target_mean: float) -> list:
    """Rescale all grids by one global factor so the in-band mean of nu
    equals ``target_mean``.

    The raw nu scale depends on acquisition units, while the distance
    penalty of the regularized energy is in radians; pinning the data
    scale gives the pairwise regularization weight a portable meaning.
    """
    total, count = 0.0, 0
    for g in grids:
        inband = g.values[g.values > 0.0]
        total += inband.sum()
        count += inband.size
    if count == 0 or total == 0.0:
        return list(grids)
    factor = target_mean / (total / count)
    return [CartesianEnergyGrid(g.values * factor, g.pitch, g.k0,
                                g.band_fraction) for g in grids]


def direct_pipeline(grids: Sequence, init_traj: so3.RotationTrajectory,
                    schedule: PairSchedule, lam: float = 60.0,
                    quad_points: int = 200, smoothing_window: int = 5,
                    energy_scale: Optional[float] = NU_REFERENCE_MEAN,
                    axis_scan: Optional[np.ndarray] = None,
                    return_pairs: bool = False):
    """Refine a trajectory by re-estimating pairwise increments.

    Every pass walks the scheduled pairs in ascending target order, so a
    pair's anchor frame s is already refined when its increment R_s^T R_t
    is minimized; all candidates for one target frame are fused by their
    medoid, which drops isolated wrong-basin results.  Frames no pair
    ever updates (including all frames below the smallest offset) are
    slerp-filled between anchors, and a temporal mean filter finishes the
    trajectory.

    ``energy_scale`` normalizes the grids (global in-band mean) before
    minimization so ``lam`` is comparable across data scalings; pass None
    to use the grids as given.
    """
    T = len(init_traj)
    k0 = grids[0].k0 if isinstance(grids[0], CartesianEnergyGrid) else grids[0].grid.k0
    if energy_scale is not None:
        if not all(isinstance(g, CartesianEnergyGrid) for g in grids):
            raise ValueError("energy_scale normalization needs raw grids")
        grids = _normalized_grids(grids, energy_scale)
    interps = [_as_interpolator(g) for g in grids]
    if len(interps) != T:
        raise ValueError("need one energy grid per frame")
    # work in the gauge of frame 0: the pairwise energies only see
    # increments, so a global left rotation of the input must carry over
    # to the output unchanged.  The quantization keeps runs that differ
    # only by such a rotation bitwise identical (the simplex search would
    # otherwise amplify last-bit differences along flat energy valleys).
    gauge = init_traj.rotations[0].copy()
    normalized = np.round(
        np.einsum("ji,tjk->tik", gauge, init_traj.rotations), 9)
    init_traj = so3.RotationTrajectory(normalized, init_traj.translations)
    R = init_traj.rotations.copy()
    covered = np.zeros(T, dtype=bool)
    covered[0] = True
    pairs_out = []
    # one pass worth of unique pairs, grouped by target frame and walked in
    # ascending target order: anchors are then already refined within the
    # pass, and the per-frame medoid rejects single wrong-basin results
    unique_pairs = sorted(set(schedule.pairs), key=lambda p: (p[1], p[0]))
    for _ in range(schedule.passes):
        t_current = None
        candidates = []

        def flush():
            nonlocal candidates
            if candidates:
                R[t_current] = _medoid(candidates)
                covered[t_current] = True
                candidates = []

        for (s, t) in unique_pairs:
            if t != t_current:
                flush()
                t_current = t
            if not covered[s]:
                # an anchor no pair has touched would re-inject the raw
                # initialization; interpolate it from neighbors first
                R[s] = _interpolate_frame(R, covered, s, init_traj.rotations)
                covered[s] = True
            prior = R[s].T @ R[t]
            init = so3.rotation_to_euler(prior)
            pair = minimize_pair(interps[s], interps[t], init, prior, lam, k0,
                                 quad_points, s=s, t=t, axis_scan=axis_scan)
            candidates.append(R[s] @ so3.euler_to_rotation(pair.euler))
            pairs_out.append(pair)
        flush()
    R = _fill_uncovered(R, covered, init_traj.rotations)
    R = np.einsum("ij,tjk->tik", gauge, R)
    traj = so3.mean_filter(so3.RotationTrajectory(R, init_traj.translations),
                           smoothing_window)
    if return_pairs:
        return traj, pairs_out
    return traj

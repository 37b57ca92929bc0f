"""Pipeline configuration with documented defaults.

Defaults marked "paper setup" below reproduce the published in-silico
experiment (scaled down to a desk-size grid); the rest are implementation
choices exposed for tuning.  Configs load from JSON always and from TOML
when the interpreter ships ``tomllib``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

__all__ = ["PipelineConfig", "load_config", "config_to_dict"]

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    tomllib = None


@dataclass
class PipelineConfig:
    # optics and raster; wavelength/n0/plane_offset follow the real setup
    # (red laser in water, focus at the object center)
    n_pixels: int = 64
    pitch: float = 0.15                 # um; keeps rotated nodes in band
    wavelength: float = 0.64            # um, paper setup
    n0: float = 1.33                    # water, paper setup
    plane_offset: float = 0.0           # r_M = 0, paper setup
    n_frames: int = 100
    band_fraction: float = 0.99

    # phantom: ellipsoid with 6 um major axis plus high-contrast beads
    phantom_seed: int = 1234
    semi_axes: Sequence[float] = (3.0, 2.2, 2.0)
    n_ellipsoid: float = 1.36
    bead_count: int = 12
    bead_radius: float = 0.4
    n_bead: float = 1.41

    # motion: one full turn about x2 at constant rate, paper setup
    rotation_axis: Sequence[float] = (0.0, 1.0, 0.0)
    rotation_rate: Optional[float] = None      # rad/frame; None = 2*pi/T
    translation_drift: Sequence[float] = (0.0, 0.0, 0.0)   # um/frame

    # forward model and noise
    forward_model: str = "born"          # born | bpm
    noise_sigma: float = 0.0
    noise_snr_db: Optional[float] = None  # overrides noise_sigma if set
    noise_seed: int = 7
    phase_drift: float = 0.0

    # preprocessing; "auto" pairs the transform with the forward model
    # (born subtraction for Born data, Rytov for BPM/real data)
    transform: str = "auto"              # auto | rytov | born | none
    incident_smooth_window: int = 31     # frames; temporal median of the
                                         # incident estimate (1 disables)
    apply_cutoff: bool = False           # desk-scale frames are tight;
                                         # enable for real, roomier data
    cutoff_r1: Optional[float] = None    # None: 0.7 * r2
    cutoff_r2: Optional[float] = None    # None: 0.95 * (N/2) * pitch
    smoothing_sigma: float = 0.65        # pixels, paper value
    compensate_shifts: bool = False
    inner_exclusion_cells: float = 4.0   # zero nu below this many frequency
                                         # cells; the origin carries no
                                         # rotation information

    # infinitesimal method
    n_radii: Optional[int] = None        # None: N/2
    n_angles: int = 180
    reg_lambda: float = 0.1              # paper value
    reg_alpha: float = 1e-10             # paper value
    reg_iterations: int = 50             # paper value
    derivative_method: str = "sobel"     # sobel | spectral-phi

    # direct method
    method: str = "both"                 # infinitesimal | direct | both
    period: Optional[float] = None       # frames/turn; None: estimate
    passes: int = 3                      # paper value
    stride: Optional[int] = None         # None: period/20
    offset_step: int = 1
    direct_lambda: float = 60.0          # paper value
    quad_points: int = 200               # paper value
    axis_scan: bool = True               # rescan the increment magnitude
    energy_scale: Optional[float] = 300.0
    nu_oversample: int = 2

    # reconstruction
    cg_iterations: int = 12              # paper value
    recon_grid_n: Optional[int] = None   # None: n_pixels

    seed: int = 0


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = dataclasses.asdict(cfg)
    for key, val in out.items():
        if isinstance(val, tuple):
            out[key] = list(val)
    return out


def load_config(path=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Build a config from an optional JSON/TOML file plus overrides."""
    data = {}
    if path is not None:
        path = Path(path)
        text = path.read_bytes()
        if path.suffix.lower() == ".toml":
            if tomllib is None:
                raise RuntimeError("TOML configs need Python >= 3.11; "
                                   "use JSON instead")
            data = tomllib.loads(text.decode())
        else:
            data = json.loads(text.decode())
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**data)

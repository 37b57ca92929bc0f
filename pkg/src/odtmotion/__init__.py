"""Motion estimation and 3D refractive-index reconstruction for optical
diffraction tomography (ODT) of rigidly moving samples.

The package estimates the unknown rotation of a sample from a video of
complex-valued holographic measurements by matching the data on the
intersection circles of Ewald hemispheres in Fourier space, and then
inverts the Fourier diffraction relation to recover the refractive index.

Subpackages / modules:

- :mod:`odtmotion.so3` -- rotation-group geometry and trajectories
- :mod:`odtmotion.fourier` -- centered FFTs and nonuniform DFTs
- :mod:`odtmotion.simulate` -- phantoms, Born and beam-propagation forward models
- :mod:`odtmotion.preprocess` -- Rytov transform, cutoff, shift compensation
- :mod:`odtmotion.energy` -- translation-invariant spectral energy and derivatives
- :mod:`odtmotion.infinitesimal` -- per-frame angular-velocity estimation
- :mod:`odtmotion.direct` -- pairwise common-circle refinement
- :mod:`odtmotion.recon` -- inverse-NDFT object reconstruction and metrics
- :mod:`odtmotion.cli` -- command-line pipeline
"""

__version__ = "0.1.0"

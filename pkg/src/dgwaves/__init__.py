"""dgwaves: discontinuous-Galerkin spectral-element elasto-acoustic wave solver.

Multi-block hexahedral meshes with non-conforming DG interfaces, GLL
spectral elements, explicit leap-frog time stepping with acoustic
sub-cycling, kinematic fault / plane-wave seismic sources, and a
seismogram validation toolkit (filtering, spectra, goodness-of-fit).
"""

__version__ = "0.1.0"

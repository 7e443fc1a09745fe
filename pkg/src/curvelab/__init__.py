"""Averaging operators along non-degenerate curves.

Submodules:

- ``curves``, ``cutoffs``: curve objects and smooth cutoffs
- ``oscillatory``: the Fourier transform of the arc measure and its decay
- ``cone``: cone geometry near a dual direction
- ``decomposition``: frequency decompositions with support audits
- ``plates``: cone tuples, plates and decoupling experiments
- ``grid``: periodic grids, the averaging operator and dyadic probes
- ``sharpness``: examples showing the exponents cannot be improved
- ``cli``: configuration-driven experiment runner
"""

from .curves import Curve, moment_curve
from .cutoffs import bump
from .oscillatory import default_chi, mu_hat

__all__ = ["Curve", "moment_curve", "bump", "default_chi", "mu_hat"]
__version__ = "0.1.0"

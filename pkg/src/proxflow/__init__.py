"""Multi-step (BDF-weighted) approximate proximal point methods.

Subpackages and modules:

- ``numerics``: dense linear algebra and root-finding primitives
- ``prox_ops``: closed-form proximal operators and projections
- ``multistep``: the multi-step approximate proximal point driver
- ``spectral``: quadratic stability analysis (companion systems)
- ``experiments``: problem generators, experiment runners, CSV/SVG output
- ``altproj_accel``: tuned-coefficient accelerated alternating projections
- ``cli``: command-line entry point (``proxflow``)
"""

__version__ = "0.1.0"

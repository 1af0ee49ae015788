"""varcal: desk-scale numerics for one-dimensional variational problems.

The package covers five capability areas:

* ``core`` -- Lagrangians, piecewise-linear paths, energies, excess, and the
  Jensen lower bound;
* ``direct_method`` -- coordinate-descent minimization over piecewise-linear
  paths with nested refinement, and Lavrentiev-gap experiments;
* ``convexify`` -- convex envelopes in the slope variable and relaxation
  checks;
* ``calibration`` -- calibrated-Lagrangian assembly from a potential, with
  hypothesis verification and minimizer field integration;
* ``constructions`` -- explicit Lagrangians whose minimizers develop large
  singular sets, built level-by-level with exact rational bookkeeping;
* ``regularity`` -- Tonelli-style regularity constants, partial-regularity
  checks, and probes for singular behaviour.

A command line front end (``varcal``) exposes each capability as a seeded,
reproducible experiment.
"""

__version__ = "0.1.0"

from . import core  # noqa: F401  (registers the built-in Lagrangians)
from . import constructions  # noqa: F401  (registers the mania Lagrangian)
from . import regularity  # noqa: F401

__all__ = ["core", "constructions", "regularity", "__version__"]

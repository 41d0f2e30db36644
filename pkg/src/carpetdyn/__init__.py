"""A finite-depth model of a mixing homeomorphism of the Sierpinski carpet.

The cat map on the torus descends to the pillowcase sphere; blowing up
periodic orbits one at a time gives a tower of stages whose homeomorphisms
are semiconjugate to the sphere map.  Modules:

- ``toral``: exact integer matrices, periodic points, eigen-data
- ``sphere``: the branched double cover and its metric
- ``tower``: orbit plans, carpet stages, blow-up maps, invariant checks
- ``measure``: finite measures, Levy-Prokhorov distance, ergodic statistics
- ``speclab``: specification-property experiments
- ``render`` and ``cli``: pictures and the command-line front end
"""

from .toral import CAT_MAP, RationalTorusPoint, ToralAutomorphism
from .tower import CarpetStage, build_stage, plan_orbits

__all__ = ["CAT_MAP", "RationalTorusPoint", "ToralAutomorphism", "CarpetStage", "build_stage", "plan_orbits"]
__version__ = "0.1.0"

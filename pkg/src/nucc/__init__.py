"""Numerical laboratory for nonuniform complete controllability (NUCC).

Modules
-------
systems    LTV systems, catalog, transition matrices
gramians   controllability gramians, minimum-energy inputs, energy bounds
classify   growth fits, NUCC/UCC certification, cross-consistency checks
riccati    shifted Riccati equation, feedback gain, sandwich bounds
stability  closed-loop decay certificates, Lyapunov check, spectrum estimates
cli        scenario runner (``nucc`` command)
"""

from .systems import (Propagator, SystemDef, barreira, custom, from_catalog,
                      kalman_cc, lti_scalar, nucc_bounded_b, shifted)

__version__ = "0.1.0"

__all__ = ["Propagator", "SystemDef", "barreira", "custom", "from_catalog",
           "kalman_cc", "lti_scalar", "nucc_bounded_b", "shifted"]

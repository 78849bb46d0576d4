"""Global numerical tolerance policy.

All rank and positivity decisions in the package are *relative*: a raw
threshold is obtained by multiplying the relevant tolerance with the
spectral norm (or largest singular value) of the operand.  The module-level
``tolerances`` instance holds the defaults; the CLI and individual callers
may override it globally or per call.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

logger = logging.getLogger("gpovm")


@dataclass
class Tolerances:
    """Package-wide tolerance knobs.

    rank_rtol:  relative eigenvalue threshold for rank / support / positivity
                decisions (threshold = rank_rtol * spectral norm).
    num_rtol:   relative Frobenius threshold for operator equality.
    sdp_tol:    absolute accuracy contract of the convex optimizer
                (certified duality gap of ``max_linear``).
    """

    rank_rtol: float = 1e-9
    num_rtol: float = 1e-9
    sdp_tol: float = 1e-7

    @property
    def support_decision_tol(self) -> float:
        """Coarser threshold for support decisions made *after* an optimization
        step, absorbing solver error (10x the solver accuracy)."""
        return 10.0 * self.sdp_tol

    def scaled(self, **kwargs) -> "Tolerances":
        return replace(self, **kwargs)


tolerances = Tolerances()


def set_tolerances(**kwargs) -> Tolerances:
    """Override the global defaults in place; returns the live instance."""
    global tolerances
    for key, value in kwargs.items():
        if not hasattr(tolerances, key):
            raise AttributeError(f"unknown tolerance {key!r}")
        setattr(tolerances, key, float(value))
    return tolerances

"""Reduced inverse sigma_k flows under Calabi symmetry.

Modules:
    classes      class data, constants and case labels
    potential    radial potentials and flux functions
    gpoly        exact G-polynomial algebra on X_{m,n}
    stationary   closed-form limit profiles and contact points
    flow         time evolution of the reduced equations
    obstacle     projected SOR oracle for the blow-up limit
    diagnostics  radial reconstruction, cone fits, potentials, traces
    cli          command-line interface
"""

__version__ = "0.1.0"

from .classes import (CaseLabel, ClassVector, PnProblem, XmnProblem, classify_pn,  # noqa: F401
                      classify_xmn, cone_membership_pn, limit_class, ratio_pn)
from .flow import FlowProblem, Grid, SchemeConfig, evolve  # noqa: F401
from .stationary import (solve_lambda_pn, solve_xmn_system, stationary_pn,  # noqa: F401
                         stationary_xmn)

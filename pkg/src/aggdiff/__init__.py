"""Numerical laboratory for nonlinear aggregation-diffusion equations on the torus.

Evolves the gradient-flow PDE, solves for stationary states through the
self-consistency fixed point, computes closed-form bifurcation data,
locates and classifies free-energy phase transitions, and probes the
large-m (mesa) limit.
"""

__version__ = "0.1.0"

from .spectral import (  # noqa: F401
    Field,
    Grid,
    SpectralCoeffs,
    analyze,
    basis_eval,
    bilinear_form,
    convolve,
    double_quadrature,
    flat_state,
    mode_field,
    synthesize,
    theta,
)
from .potential import (  # noqa: F401
    Potential,
    check_m4_conditions,
    dominant_mode,
    find_delta_star,
    h_stability,
    k_delta_set,
    p2_p3,
)
from .energy import (  # noqa: F401
    EnergyBreakdown,
    free_energy,
    linf_bound,
    self_consistency_constant,
    stationarity_residual,
)
from .bifurcation import (  # noqa: F401
    BifurcationPoint,
    beta_sharp,
    beta_star,
    curvature,
    enumerate_bifurcations,
)
from .stationary import (  # noqa: F401
    FixedPointConfig,
    FixedPointResult,
    continue_branch,
    mass_bisect,
    sc_map,
    solve,
)
from .dynamics import (  # noqa: F401
    EvolutionConfig,
    Evolver,
    Trajectory,
    entropy_variable,
    evolve,
)
from .transition import (  # noqa: F401
    Prediction,
    SweepRecord,
    TransitionKind,
    TransitionReport,
    analyze_transition,
    classify_transition,
    locate_beta_c,
    m2_family,
    predict,
    sweep,
)
from .mesa import (  # noqa: F401
    MesaCase,
    MesaResult,
    mesa_classify,
    mesa_energy,
    mesa_sweep,
)

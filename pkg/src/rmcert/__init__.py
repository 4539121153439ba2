"""Schmidt-number certification of bipartite qudits from randomized measurements."""

from .boundary import BoundaryCurve, boundary_curve, boundary_curves, certify_point, region_check, s4_min
from .correlation import (
    CrossCorrelationMatrix,
    MomentPair,
    certify_from_tracenorm,
    cross_correlation,
    direct_moments,
    trace_norm,
)
from .qudit import (
    DensityMatrix,
    apply_local,
    gellmann_basis,
    max_entangled_state,
    maximally_mixed,
    product_state,
    validate_density,
)
from .randmeas import (
    MomentEstimate,
    Observable,
    batch_distribution,
    calibrate_observable,
    correlator_exact,
    correlators,
    estimate_moments,
    moment_t,
    simulate_correlators,
    simulate_counts,
    x_from_counts,
)
from .sampling import SeededStream, dephased_state, fit_phimax, random_phase_unitary, sample_haar
from .tomography import TomoData, mub_bases, predict_probs, reconstruct, rho_from_gauge
from .witness import dft_certify, dft_correlator, scrambling_comparison

__version__ = "0.1.0"

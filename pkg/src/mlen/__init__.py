"""Markov length and conditional mutual information of classical spin chains.

Uniform matrix-product states represent the spin distribution; discrete-time
heat-bath and depolarizing channels evolve it; perfect sampling estimates
I(A:C|B); closed-form oracles and fitting utilities extract the conditional
correlation length.
"""

from .mps import (
    UniformMps,
    Tripartition,
    thermal_mps,
    depolarized_cat_mps,
    polarized_mps,
    symmetrize,
    transfer_spectrum,
)
from .glauber import (
    GlauberChannel,
    QuenchConfig,
    glauber_weight,
    build_glauber_mpo,
    apply_depolarizing,
    apply_channel_exact,
    canonicalize,
    tebd_step,
    tebd_evolve,
)
from .sampler import (
    SampleRecord,
    CmiEstimate,
    sample_b_configuration,
    conditional_ac_marginal,
    mi_2x2,
    estimate_cmi,
)
from .oracles import (
    DepolCatParams,
    ThermalParams,
    thermal_correlation_length,
    conditional_cat_matrix,
    exact_cmi_depolarized_cat,
    brute_force_cmi,
    asymptotic_cmi,
    magnetization_recursion,
    magnetization_series,
    correlator_recursion,
    thermal_mi,
    markov_length_prediction,
)
from .analysis import (
    MarkovFit,
    LyapunovResult,
    fit_markov_length,
    cmi_peak_trajectory,
    lyapunov_spectrum,
    collapse_export,
    collapse_master,
    two_slope_rate,
)

__version__ = "0.1.0"

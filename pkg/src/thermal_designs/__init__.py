"""Thermal-state ensembles of random Hamiltonians and their distance from
state t-designs.

Sample random global (GUE) or random k-local Hamiltonians, build Gibbs
states from their spectra, and measure how far the resulting state
ensemble sits from the unitarily invariant moment operator as a function
of inverse temperature.
"""

from .analysis import (
    CurveTable,
    DosReport,
    KinkEstimate,
    SweepResult,
    dos_diagnostics,
    ensemble_spectra,
    estimate_beta_c,
    feasible_estimators,
    numeric_derivative,
    run_sweep,
    threshold_temperature,
)
from .design import (
    DEFAULT_MEMORY_CAP,
    CycleType,
    MomentAccumulator,
    SymProjector,
    accumulate_moment,
    build_sym_projector,
    cycle_types,
    distance_cycle_expansion,
    distance_sym_overlap,
    distance_trace_norm,
    ground_state_bound,
    load_checkpoint,
    save_checkpoint,
    symmetric_block_weight,
    tensor_power,
    tensor_power_block_sum,
)
from .ensembles import (
    EnsembleSpec,
    embed_local_term,
    interaction_sets,
    sample_gue,
    sample_hamiltonian,
    substream,
)
from .errors import (
    CapacityError,
    ConfigError,
    InvalidDimensionError,
    InvalidLocalityError,
    InvalidTemperatureError,
    InvalidTermError,
    NumericFailureError,
    ThermalDesignsError,
    UnsupportedEnsembleError,
)
from .spectral import (
    GibbsWeights,
    Spectrum,
    boltzmann_probs,
    eig_hermitian,
    gibbs_weights,
    internal_energy,
    log_partition,
    purity_beta_derivative,
    purity_m,
    thermal_state,
)

__version__ = "0.1.0"

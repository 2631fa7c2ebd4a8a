"""fieldgas: grand-canonical simulation of charged gases interacting through
nonlinear functionals of their superposed static fields.

The package provides Green's-function kernels and their pair potentials
(:mod:`fieldgas.kernels`), marked Poisson ensembles and exactly computable
free-noise functionals (:mod:`fieldgas.ensembles`), field rasterization and
level-set geometry (:mod:`fieldgas.fields`), energy densities and stability
bounds (:mod:`fieldgas.potentials`), grand-canonical Monte Carlo samplers and
estimators (:mod:`fieldgas.gcmc`), high-temperature series and convergence
constants (:mod:`fieldgas.series`), continuum-scaling and duality experiments
(:mod:`fieldgas.limits`), and a reproducible experiment CLI
(:mod:`fieldgas.cli`).
"""

from .kernels import (
    KernelSpec,
    Kernel,
    PairPotential,
    get_kernel,
    eval_kernel,
    l1_norm,
    pair_potential,
    pair_potential_object,
    decay_bound_check,
    power_bound_constant,
)
from .streams import stream, stream_key
from .profiles import BumpProfile
from .fields import (
    FieldGrid,
    superpose,
    eval_field_at,
    threshold_volume,
    contour_length,
)
from .potentials import (
    EnergyDensity,
    PotentialResult,
    potential_U,
    quadratic_renormalized_U,
    mutual_energy_W,
    stability_bound,
    trig_density_value,
)
from .ensembles import (
    ChargeDistribution,
    InteractionMeasure,
    MarkedConfiguration,
    Region,
    levy_psi,
    sample_free,
    char_functional_free,
    laplace_functional_free,
)
from .gcmc import (
    GcmcParams,
    ChainState,
    EstimatorResult,
    init_chain,
    step,
    run,
    sample_stream,
    configuration_energy,
    estimate_rho,
    estimate_char_functional,
    estimate_moments,
    batch_stats,
)
from .series import (
    ConvergenceDomain,
    TruncatedSeries,
    compute_C1,
    compute_C2,
    convergence_domain,
    ht_series_rho,
    potts_projection_check,
    moments_from_rho,
    set_partitions,
)

__version__ = "0.1.0"

__all__ = [
    "KernelSpec",
    "Kernel",
    "PairPotential",
    "get_kernel",
    "eval_kernel",
    "l1_norm",
    "pair_potential",
    "pair_potential_object",
    "decay_bound_check",
    "power_bound_constant",
    "stream",
    "stream_key",
    "BumpProfile",
    "FieldGrid",
    "superpose",
    "eval_field_at",
    "threshold_volume",
    "contour_length",
    "EnergyDensity",
    "PotentialResult",
    "potential_U",
    "quadratic_renormalized_U",
    "mutual_energy_W",
    "stability_bound",
    "trig_density_value",
    "ChargeDistribution",
    "InteractionMeasure",
    "MarkedConfiguration",
    "Region",
    "levy_psi",
    "sample_free",
    "char_functional_free",
    "laplace_functional_free",
    "GcmcParams",
    "ChainState",
    "EstimatorResult",
    "init_chain",
    "step",
    "run",
    "sample_stream",
    "configuration_energy",
    "estimate_rho",
    "estimate_char_functional",
    "estimate_moments",
    "batch_stats",
    "ConvergenceDomain",
    "TruncatedSeries",
    "compute_C1",
    "compute_C2",
    "convergence_domain",
    "ht_series_rho",
    "potts_projection_check",
    "moments_from_rho",
    "set_partitions",
    "__version__",
]

"""Bayesian stochastic weather generator.

Daily precipitation occurrence is a clipped Gaussian process; positive
intensities are a finite mixture of Student-t processes; temporal dependence
enters through an analogue prior built from synoptic-scale atmospheric
states.  The package ships the full Metropolis-within-Gibbs samplers,
posterior-predictive machinery, tail-aware verification scores, and a
simulation harness for sampler validation.
"""

__version__ = "0.1.0"

from .analogue import (AnalogueGraph, AnalogueInputs, EofBasis, Embedding,
                       FieldStack, analogue_weights, build_analogue_inputs,
                       calibrate_tau, compute_eof_basis, cross_distances,
                       embedding_distances, lag_embed, load_eof_basis,
                       load_field_stacks, project_loadings, save_eof_basis,
                       save_field_stacks, stack_loadings)
from .intensity import (IntensityChain, IntensityConfig, IntensityData,
                        IntensityState, relabel_by_range, run_intensity_chain)
from .io import (GaugeTable, RunManifest, build_tensors, load_gauge_csv,
                 parse_config, save_gauge_csv, split_holdout)
from .mcmc import PosteriorDraws
from .occurrence import (OccurrenceChain, OccurrenceConfig, OccurrenceData,
                         OccurrenceState, run_occurrence_chain)
from .predict import (ForecastSet, PredictionGrid, basin_aggregate,
                      forecast_outsample, krige_insample, kriging_conditionals)
from .sampling import (BoundsVec, RngStream, sample_inverse_gamma, sample_mvn,
                       sample_t_process, sample_truncated_mvn_gibbs,
                       truncated_normal)
from .scoring import (ChiEstimate, EnsembleForecast, IndicatorWeight, SmoothWeight,
                      chi_u_empirical, f_madogram, posterior_summaries,
                      score_table, twcrps, twcrps_single)
from .simulate import SimDesign, SimulatedData, load_truth, save_truth, \
    simulate_dataset
from .spatial import (MaternParams, SingularCorrelationError, SpatialDomain,
                      basis_matrix, basis_vector, cholesky_jitter,
                      correlation_matrix, matern_correlation, pairwise_distances,
                      project_latlon, unproject_xy)
from .transforms import (MixtureLogit, mixture_probabilities, softmax_rows,
                         softplus_fwd, softplus_inv)
from .validation import (analogue_benefit_study, formula_deviations,
                         getting_it_right, recovery_study)

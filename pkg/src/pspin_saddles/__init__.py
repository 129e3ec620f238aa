"""Complexity, pair large deviations and Kac-Rice moments for spherical p-spin saddles."""

__version__ = "0.1.0"

from .complexity import (ModelParams, sigma_derivative, sigma_ell, sigma_total,
                         threshold_E_ell)
from .covariance import (CovarianceBundle, coeff_bundle, covariance_bundle, geometry_factors,
                         quad_forms)
from .dyson import (DiscretizedPath, Segment, barrier_segment, classify_segment,
                    contracted_rate, linear_segment, optimal_drift, path_rate)
from .ensemble import (EmpiricalMeasure, GOEPairSample, HessianPairSample, SeedSpec,
                       det_correlation_check, dyson_simulate, empirical_measure_distance,
                       index_diagnostics, kacrice_moment_estimate, sample_goe,
                       sample_hessian_pair, tail_rate_estimate)
from .errors import INFINITE, DomainError, NumericalError
from .pair_rate import PairRateValue, Regime, classify_regime, diag_gap, pair_rate, rect_min
from .scalar import (TruncationWindow, rate_I1, rate_Iell, semicircle_log_potential,
                     stieltjes_m, threshold_E_inf, v_map)
from .variational import (Branch, PsiEvaluation, bounding_psi, identity_suite, optimize_psi,
                          psi_diagonal_extended)

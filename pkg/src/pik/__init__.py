"""Detection and weak recovery in sparse planted factor-graph models."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import (ObservationModel, FactorType, validate_model, load_model, save_model,
                    average_factor_density, factor_marginal, conditional_matrix,
                    centered_transition, detailed_balance_check, BalanceReport)
from .builtins import BUILTINS, builtin_model, resolve_builtin, family
from .sampler import (FactorGraphInstance, sample_planted, sample_null, sample_types,
                      sample_colors, bicycle_free, degree_profile, read_instance,
                      write_instance)
from .stability import (build_L, lambda_L, spectral_radius, choose_kappa, threshold_scan,
                        amplification_mc, amplification_exact, sample_tree)
from .bp import MessageSet, init_trivial, bp_step, run_bp, beliefs, jacobian_check
from .spectral import (CenteredNBOperator, HInnerProduct, build_centered_operator,
                       apply_nb_power, enumerate_nb_power, h_inner, top_eigenpair,
                       distinguish, nb_block_product, default_s)
from .recovery import (build_g, centered_indicators, correlation, best_overlap,
                       random_overlap_quantile, weak_recover,
                       easy_distinguish, easy_recover, h_overlap, RecoveryOutput)
from .stats import StatRecord, local_statistic, spectral_growth_curve

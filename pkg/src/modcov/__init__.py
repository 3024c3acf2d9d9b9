"""Treatment-interaction scoring from randomized trial data."""

__version__ = "0.1.0"

from .augment import (AugmentationPlan, MainEffectModel, MartingaleResiduals,
                      augmentation_binary, augmentation_continuous,
                      augmentation_survival, estimate_main_effect,
                      martingale_residuals)
from .data import (BINOMIAL, COX, GAUSSIAN, BasisSpec, Dataset, ModifiedDesign,
                   apply_basis, build_basis, build_modified_design, load_dataset,
                   modified_outcome, modify_covariates, validate_dataset,
                   write_dataset)
from .errors import (ConvergenceError, ModcovError, ModelMismatchError,
                     ValidationError)
from .kernels import backend_name
from .pipeline import fit_full_regression, fit_interaction_model
from .scoring import (InteractionModel, StratifiedGroups, interaction_score,
                      relative_risk, risk_difference, stratify,
                      survival_score_interpretation)
from .simulate import (MethodResult, SimulationSetting, calibrate_censoring,
                       gen_binary, gen_continuous, gen_covariates, gen_survival,
                       make_setting, run_experiment, spearman, true_delta)
from .solvers import (FitResult, LambdaPath, PenaltySpec, adaptive_weights,
                      cross_validate, fit_cox_lasso, fit_gaussian_lasso,
                      fit_logistic_lasso, fit_relative_risk, kkt_violation,
                      lambda_grid, smooth_parts)
from .survival import (LogRankResult, SurvivalCurve, TwoGroupCox, cox_newton,
                       cox_two_group, kaplan_meier, logrank, split_train_test)

__all__ = [name for name in dir() if not name.startswith("_")]

"""End-to-end fitting pipelines.

Three estimators share this module:

  new              interaction-only fit on the modified covariates W(Z)*T/2
  new_augmented    the same fit with the efficiency-augmentation term
  full_regression  comparator with explicit main effects: [W, W*T] for
                   continuous/binary outcomes, [Z, T, Z*T] for survival,
                   scored by the interaction block alone

All cross-validation is 20-fold by default and seeded; the interaction fit
and the nuisance main-effect fit draw their fold assignments from separate
derived seeds so the two selections do not couple.
"""

import numpy as np

from . import solvers
from .augment import (augmentation_binary, augmentation_continuous,
                      augmentation_survival, estimate_main_effect,
                      martingale_residuals)
from .data import BINOMIAL, COX, GAUSSIAN, build_basis, build_modified_design
from .errors import ValidationError
from .rng import derive_seed
from .scoring import REL_RISK, RISK_DIFF, InteractionModel

METHODS = ("new", "new_augmented", "full_regression")


def _loss_key(family, link):
    if family == GAUSSIAN:
        return "gaussian"
    if family == COX:
        return "cox"
    if link == RISK_DIFF:
        return "logistic"
    if link == REL_RISK:
        return "relrisk"
    raise ValidationError(f"binomial fits need link {RISK_DIFF!r} or {REL_RISK!r}, got {link!r}")


def _adaptive_multipliers(W, dataset, adaptive, direction):
    """Multipliers for the columns of W; constant columns (intercept) get 1."""
    return solvers.adaptive_weights(
        W, dataset.family, y=dataset.y, time=dataset.time, status=dataset.status,
        treatment=dataset.treatment, mode=adaptive, direction=direction)


def _select(loss, X, dataset, lam, folds, seed, multipliers, exempt_first, rule,
            offset=None, aug_offset=None, aug_vectors=None):
    """Fit at a fixed lambda or run CV; returns (FitResult, penalty metadata, path)."""
    kw = dict(y=dataset.y, time=dataset.time, status=dataset.status,
              offset=offset, aug_offset=aug_offset, aug_vectors=aug_vectors)
    meta = {"multipliers": None if multipliers is None else [float(m) for m in multipliers],
            "exempt_first": bool(exempt_first)}
    if lam == "cv":
        if seed is None:
            raise ValidationError("lambda selection by CV requires a seed")
        path = solvers.cross_validate(loss, X, treatment=dataset.treatment,
                                      multipliers=multipliers, exempt_first=exempt_first,
                                      folds=folds, seed=seed, rule=rule, **kw)
        fr = path.selected_fit
        meta.update({"selection": "cv", "lambda": fr.lam, "folds": folds,
                     "seed": int(seed), "rule": rule,
                     "lambda_min": path.lambda_min, "lambda_1se": path.lambda_1se})
        return fr, meta, path
    lam = float(lam)
    spec = solvers.PenaltySpec(lam, multipliers, exempt_first)
    fit_kw = {k: v for k, v in kw.items() if v is not None}
    fr = _direct_fit(loss, X, spec, fit_kw)
    meta.update({"selection": "fixed", "lambda": lam})
    return fr, meta, None


def _direct_fit(loss, X, spec, kw):
    if loss == "gaussian":
        return solvers.fit_gaussian_lasso(X, kw["y"], spec, offset=kw.get("offset"),
                                          aug_linear=kw.get("aug_linear"))
    if loss == "logistic":
        return solvers.fit_logistic_lasso(X, kw["y"], spec, aug_offset=kw.get("aug_offset"))
    if loss == "relrisk":
        return solvers.fit_relative_risk(X, kw["y"], spec, aug_offset=kw.get("aug_offset"))
    return solvers.fit_cox_lasso(X, kw["time"], kw["status"], spec,
                                 aug_vectors=kw.get("aug_vectors"))


def fit_interaction_model(dataset, method="new", link=RISK_DIFF, basis=None,
                          lam="cv", folds=20, seed=None, adaptive=None,
                          adaptive_direction="reciprocal", exempt_first=False,
                          rule="min", tau=None):
    """Fit one of the three estimators and wrap it as an InteractionModel.

    lam: "cv" or a number. adaptive: None, "pooled", or "armwise". seed is
    required whenever any CV runs (interaction fit with lam="cv", and always
    for the augmented method's nuisance fit).
    """
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "full_regression":
        return fit_full_regression(dataset, link=link, basis=basis, lam=lam,
                                   folds=folds, seed=seed, rule=rule)
    design = build_modified_design(dataset, basis)
    W, Xstar, spec = design.W, design.modified, design.basis
    loss = _loss_key(dataset.family, link)

    multipliers = None
    if adaptive is not None:
        multipliers = _adaptive_multipliers(W, dataset, adaptive, adaptive_direction)

    offset = aug_offset = aug_vectors = None
    aug_meta = None
    if method == "new_augmented":
        if seed is None:
            raise ValidationError("the augmented method requires a seed for its nuisance CV")
        mart = None
        if dataset.family == COX:
            mart = martingale_residuals(dataset.time, dataset.status, tau)
        main = estimate_main_effect(dataset, folds=folds, seed=derive_seed(seed, 1),
                                    mart=mart)
        if dataset.family == GAUSSIAN:
            plan = augmentation_continuous(W, main)
            offset = plan.modified_offset()      # = fitted E(Y|Z); exact residual route
        elif dataset.family == BINOMIAL:
            plan = augmentation_binary(W, main)
            aug_offset = plan.modified_offset()  # = fitted prob - 1/2
        else:
            plan = augmentation_survival(W, mart, main)
            aug_vectors = plan.signed_vectors(dataset.treatment)
        aug_meta = {"main_coef": [float(c) for c in main.coef],
                    "main_family": main.family, "main_lambda": main.lam,
                    "main_basis": main.basis, "meta": main.meta}

    cv_seed = seed if lam != "cv" or seed is None else derive_seed(seed, 0)
    fr, pen_meta, path = _select(loss, Xstar, dataset, lam, folds, cv_seed,
                                 multipliers, exempt_first, rule,
                                 offset=offset, aug_offset=aug_offset,
                                 aug_vectors=aug_vectors)
    if adaptive is not None:
        pen_meta["adaptive"] = {"mode": adaptive, "direction": adaptive_direction}
    model = InteractionModel(
        family=dataset.family, coef=fr.coef, basis=spec,
        method="new_augmented" if method == "new_augmented" else "new",
        link=link if dataset.family == BINOMIAL else None,
        penalty=pen_meta, augmentation=aug_meta,
        training={"n": dataset.n, "n_nonzero": fr.n_nonzero,
                  "converged": bool(fr.converged), "iterations": fr.iterations,
                  "objective": fr.objective})
    model._cv_path = path
    return model


def full_regression_design(dataset, basis=None):
    """(design matrix, W, basis, n_score_cols) for the comparator fit.

    Continuous/binary: [W, W*T] with the interaction block last; survival:
    [Z_centered, T, T*Z_centered] (no intercept inside a cox partial
    likelihood). In both layouts the final (q+1) columns multiply W(z) when
    scoring, so the interaction block maps onto the same basis as the
    modified-covariate fits.
    """
    W, spec = build_basis(dataset.covariates, basis, names=dataset.covariate_names)
    T = dataset.treatment
    if dataset.family == COX:
        X = np.hstack([W[:, 1:], T[:, None] * W])
    else:
        X = np.hstack([W, T[:, None] * W])
    return X, W, spec


def fit_full_regression(dataset, link=RISK_DIFF, basis=None, lam="cv", folds=20,
                        seed=None, rule="min"):
    """Comparator with explicit main effects; scores use the interaction block.

    The intercept (continuous/binary) is exempt from the penalty; every other
    column, including the treatment main effect, is penalized.
    """
    X, W, spec = full_regression_design(dataset, basis)
    loss = _loss_key(dataset.family, link)
    p_score = W.shape[1]
    exempt = dataset.family != COX
    fr, pen_meta, path = _select(loss, X, dataset, lam, folds,
                                 None if lam != "cv" else _require_seed(seed),
                                 None, exempt, rule)
    coef = fr.coef[-p_score:]
    model = InteractionModel(
        family=dataset.family, coef=coef, basis=spec, method="full_regression",
        link=link if dataset.family == BINOMIAL else None,
        penalty=pen_meta, augmentation=None,
        training={"n": dataset.n, "n_nonzero": fr.n_nonzero,
                  "converged": bool(fr.converged), "iterations": fr.iterations,
                  "objective": fr.objective,
                  "main_block_nonzero": int(np.count_nonzero(fr.coef[:-p_score]))})
    model._cv_path = path
    return model


def _require_seed(seed):
    if seed is None:
        raise ValidationError("lambda selection by CV requires a seed")
    return derive_seed(seed, 0)

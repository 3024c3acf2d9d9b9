"""Efficiency augmentation: nuisance main-effect fits and per-subject terms.

The two-step procedure estimates how the outcome depends on the covariates
alone (pooling arms), converts the fitted values into per-subject scalars
r_hat with a(Z_i) = W(Z_i) * r_hat_i, and hands family-appropriate
augmentation arguments to the solvers. Between-arm balance makes the added
term mean-zero, so it changes the variance of the interaction estimate, not
its limit.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import BINOMIAL, COX, GAUSSIAN, BasisSpec, apply_basis, build_basis
from .errors import ModelMismatchError, ValidationError
from .solvers import (PenaltySpec, cross_validate, fit_gaussian_lasso,
                      fit_logistic_lasso)


@dataclass
class MainEffectModel:
    """Pooled outcome-on-covariates regression used as the augmentation nuisance.

    fitted holds the training-row predictions: E(Y|Z) for continuous,
    Prob(Y=1|Z) for binary, and the predicted martingale residual for
    survival.
    """

    family: str
    basis: BasisSpec
    coef: np.ndarray
    fitted: np.ndarray
    lam: float
    meta: dict = field(default_factory=dict)

    def predict(self, Z):
        B = apply_basis(self.basis, Z)
        eta = B @ self.coef
        return expit(eta) if self.family == BINOMIAL else eta


@dataclass(frozen=True)
class MartingaleResiduals:
    tau: float
    residuals: np.ndarray


def martingale_residuals(time, status, tau=None):
    """Observed events minus Nelson-Aalen cumulative-hazard exposure up to tau.

    The risk set at u is {X_j >= u} (a subject is at risk at its own event
    time), so the residuals sum to zero identically for any tau.
    """
    time = np.ascontiguousarray(time, dtype=float)
    status = np.ascontiguousarray(status, dtype=float)
    if time.ndim != 1 or time.shape != status.shape or time.size < 1:
        raise ValidationError("time and status must be equal-length nonempty vectors")
    if not np.all(np.isfinite(time)) or np.any(time < 0):
        raise ValidationError("times must be finite and nonnegative")
    if not np.any(status == 1.0):
        raise ValidationError("martingale residuals require at least one event")
    if tau is None:
        tau = float(time.max())
    tau = float(tau)

    ev_times = np.unique(time[status == 1.0])
    d = np.array([np.count_nonzero((time == u) & (status == 1.0)) for u in ev_times])
    at_risk = np.array([np.count_nonzero(time >= u) for u in ev_times])
    cumhaz_steps = np.concatenate(([0.0], np.cumsum(d / at_risk)))

    capped = np.minimum(time, tau)
    lam = cumhaz_steps[np.searchsorted(ev_times, capped, side="right")]
    resid = status * (time <= tau) - lam
    return MartingaleResiduals(tau=tau, residuals=resid)


def estimate_main_effect(dataset, basis=None, penalty=None, folds=20, seed=None,
                         tau=None, mart=None):
    """Fit the nuisance regression of outcome on B(Z), pooling treatment arms.

    Continuous: least-squares Lasso on Y. Binary: logistic Lasso on Y.
    Survival: least-squares Lasso on the martingale residuals M(tau). The
    intercept column is never penalized. penalty=None selects lambda by
    cross-validation (seed required); a PenaltySpec fits at that penalty
    directly.
    """
    B, spec = build_basis(dataset.covariates, basis, names=dataset.covariate_names)
    if dataset.family == GAUSSIAN:
        resp, loss = dataset.y, "gaussian"
    elif dataset.family == BINOMIAL:
        resp, loss = dataset.y, "logistic"
    else:
        if mart is None:
            mart = martingale_residuals(dataset.time, dataset.status, tau)
        resp, loss = mart.residuals, "gaussian"

    if penalty is not None:
        if not isinstance(penalty, PenaltySpec):
            raise ValidationError("penalty must be a PenaltySpec or None for CV")
        fit_fn = fit_logistic_lasso if loss == "logistic" else fit_gaussian_lasso
        fr = fit_fn(B, resp, penalty)
        meta = {"selection": "fixed"}
    else:
        if seed is None:
            raise ValidationError("main-effect CV requires a seed")
        path = cross_validate(loss, B, y=resp, treatment=dataset.treatment,
                              exempt_first=True, folds=folds, seed=seed)
        fr = path.selected_fit
        meta = {"selection": "cv", "folds": folds, "seed": int(seed), "rule": path.rule}
    if mart is not None:
        meta["tau"] = mart.tau

    eta = B @ fr.coef
    fitted = expit(eta) if dataset.family == BINOMIAL else eta
    return MainEffectModel(family=dataset.family, basis=spec, coef=fr.coef,
                           fitted=fitted, lam=fr.lam, meta=meta)


@dataclass(frozen=True)
class AugmentationPlan:
    """Per-subject augmentation a(Z_i) = W(Z_i) * r_hat_i and its conversions."""

    r_hat: np.ndarray
    a_rows: np.ndarray
    source: MainEffectModel

    def modified_offset(self):
        """-2*r_hat: the gaussian outcome offset m(Z); the logistic/relative-risk
        working-response shift m(Z) - 1/2 (or the survival analogue)."""
        return -2.0 * self.r_hat

    def linear_term(self):
        """2*r_hat: the a-vector of the generic gaussian linear-augmentation route."""
        return 2.0 * self.r_hat

    def signed_vectors(self, treatment):
        """Rows a(Z_i)*T_i for the cox fit's augmentation argument."""
        treatment = np.ascontiguousarray(treatment, dtype=float)
        if treatment.shape[0] != self.a_rows.shape[0]:
            raise ValidationError("treatment length does not match augmentation rows")
        return self.a_rows * treatment[:, None]


def _plan(W, main, expected_family, r_hat):
    W = np.ascontiguousarray(W, dtype=float)
    if main.family != expected_family:
        raise ModelMismatchError(
            f"augmentation for {expected_family} got a {main.family} main-effect model")
    if W.ndim != 2 or W.shape[0] != r_hat.shape[0]:
        raise ValidationError("W row count does not match main-effect fitted values")
    return AugmentationPlan(r_hat=r_hat, a_rows=W * r_hat[:, None], source=main)


def augmentation_continuous(W, main):
    """r_hat = -E(Y|Z)/2."""
    return _plan(W, main, GAUSSIAN, -0.5 * np.asarray(main.fitted, dtype=float))


def augmentation_binary(W, main):
    """r_hat = -(Prob(Y=1|Z) - 1/2)/2; shared by both binary links."""
    return _plan(W, main, BINOMIAL, -0.5 * (np.asarray(main.fitted, dtype=float) - 0.5))


def augmentation_survival(W, mart, main):
    """r_hat = -E(M(tau)|Z)/2, the predicted-martingale-residual form."""
    fitted = np.asarray(main.fitted, dtype=float)
    if mart.residuals.shape[0] != fitted.shape[0]:
        raise ValidationError("martingale residuals do not match main-effect rows")
    return _plan(W, main, COX, -0.5 * fitted)

"""Martingale residuals, nuisance main-effect fits, and augmentation plans."""

import numpy as np
import pytest
from conftest import binary_dataset, gaussian_dataset, survival_dataset

from modcov.augment import (
    MainEffectModel,
    augmentation_binary,
    augmentation_continuous,
    augmentation_survival,
    estimate_main_effect,
    martingale_residuals,
)
from modcov.data import build_basis, build_modified_design
from modcov.errors import ModelMismatchError, ValidationError
from modcov.solvers import PenaltySpec, fit_gaussian_lasso

# ------------------------------------------------------ martingale residuals


def test_martingale_two_event_hand_case():
    mr = martingale_residuals(np.array([1.0, 2.0]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(mr.residuals, [0.5, -0.5], atol=0.0)
    assert mr.tau == 2.0


def test_martingale_single_subject_is_zero():
    mr = martingale_residuals(np.array([3.0]), np.array([1.0]))
    assert mr.residuals[0] == 0.0


def test_martingale_residuals_sum_to_zero():
    rng = np.random.default_rng(40)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        time = rng.uniform(0.1, 10.0, size=n)
        if rng.uniform() < 0.3:
            time = np.round(time)  # force ties some of the time
            time = np.maximum(time, 0.0)
        status = (rng.uniform(size=n) < 0.6).astype(float)
        if status.sum() == 0:
            status[int(rng.integers(n))] = 1.0
        tau = float(rng.uniform(0.0, 12.0)) if rng.uniform() < 0.5 else None
        mr = martingale_residuals(time, status, tau)
        assert abs(mr.residuals.sum()) <= 1e-10
        assert np.all(mr.residuals <= 1.0)


def test_martingale_default_tau_is_last_time():
    mr = martingale_residuals(np.array([4.0, 1.0, 7.0]), np.array([0.0, 1.0, 1.0]))
    assert mr.tau == 7.0


def test_martingale_requires_an_event():
    with pytest.raises(ValidationError, match="at least one event"):
        martingale_residuals(np.array([1.0, 2.0]), np.zeros(2))


def test_martingale_input_validation():
    with pytest.raises(ValidationError):
        martingale_residuals(np.array([1.0, -2.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValidationError):
        martingale_residuals(np.array([1.0, 2.0]), np.array([1.0]))


# --------------------------------------------------------- plan construction


def _main_model(family, fitted, q=1):
    # minimal fitted nuisance model around given training predictions; the
    # basis is a placeholder fitted on throwaway rows
    _, spec = build_basis(np.arange(2.0 * q).reshape(2, q))
    coef = np.zeros(q + 1)
    return MainEffectModel(family=family, basis=spec, coef=coef,
                           fitted=np.asarray(fitted, dtype=float), lam=0.0)


def test_continuous_plan_hand_case():
    main = _main_model("gaussian", [4.0])
    plan = augmentation_continuous(np.array([[1.0, 2.0]]), main)
    assert plan.r_hat[0] == -2.0
    np.testing.assert_allclose(plan.a_rows, [[-2.0, -4.0]], atol=0.0)
    np.testing.assert_allclose(plan.modified_offset(), [4.0], atol=0.0)
    np.testing.assert_allclose(plan.linear_term(), [-4.0], atol=0.0)


def test_binary_plan_hand_case():
    main = _main_model("binomial", [0.9])
    plan = augmentation_binary(np.array([[1.0, -1.0]]), main)
    assert plan.r_hat[0] == pytest.approx(-0.2)
    np.testing.assert_allclose(plan.a_rows, [[-0.2, 0.2]], atol=1e-15)
    # the working-response shift is m_hat - 1/2
    assert plan.modified_offset()[0] == pytest.approx(0.4)


def test_binary_plan_sure_event_limit():
    rng = np.random.default_rng(41)
    W = rng.standard_normal((5, 3))
    main = _main_model("binomial", np.ones(5))
    plan = augmentation_binary(W, main)
    np.testing.assert_allclose(plan.a_rows, -W / 4.0, atol=1e-15)


def test_survival_plan_hand_case():
    main = _main_model("cox", [-0.4])
    mart = martingale_residuals(np.array([1.0]), np.array([1.0]))
    plan = augmentation_survival(np.array([[1.0, 3.0]]), mart, main)
    np.testing.assert_allclose(plan.a_rows, [[0.2, 0.6]], atol=1e-15)


def test_signed_vectors_multiply_rows_by_arm():
    main = _main_model("gaussian", [2.0, -1.0])
    W = np.array([[1.0, 0.5], [2.0, -0.5]])
    plan = augmentation_continuous(W, main)
    signed = plan.signed_vectors(np.array([1.0, -1.0]))
    # r_hat = (-1.0, 0.5), a_rows = W * r_hat, then each row times its arm
    np.testing.assert_allclose(signed, [[-1.0, -0.5], [-1.0, 0.25]], atol=1e-15)
    with pytest.raises(ValidationError, match="treatment length"):
        plan.signed_vectors(np.ones(3))


def test_plan_rejects_family_mismatch():
    main = _main_model("gaussian", [1.0])
    with pytest.raises(ModelMismatchError, match="augmentation for binomial got a gaussian"):
        augmentation_binary(np.ones((1, 1)), main)


def test_plan_rejects_row_mismatch():
    main = _main_model("gaussian", [1.0, 2.0])
    with pytest.raises(ValidationError, match="row count"):
        augmentation_continuous(np.ones((3, 2)), main)


def test_balanced_arms_make_constant_augmentation_mean_zero():
    # with m_hat constant and arms balanced, sum_i T_i * a(Z_i) = 0 per column
    rng = np.random.default_rng(42)
    W = rng.standard_normal((10, 3))
    main = _main_model("gaussian", np.full(10, 1.7))
    plan = augmentation_continuous(W, main)
    T = np.repeat([1.0, -1.0], 5)
    # constant r_hat factors out; balance kills the T average but not W@T
    signed = plan.signed_vectors(T)
    colmeans = signed.mean(axis=0)
    expect = -0.85 * (W * T[:, None]).mean(axis=0)
    np.testing.assert_allclose(colmeans, expect, atol=1e-12)
    assert T.sum() == 0.0


def test_offset_and_linear_routes_agree_through_a_plan():
    for seed in (1, 2):
        ds = gaussian_dataset(np.random.default_rng(seed), n=40)
        design = build_modified_design(ds)
        main = estimate_main_effect(ds, seed=seed)
        plan = augmentation_continuous(design.W, main)
        for lam in (0.01, 0.1):
            a = fit_gaussian_lasso(design.modified, ds.y, PenaltySpec(lam),
                                   offset=plan.modified_offset())
            b = fit_gaussian_lasso(design.modified, ds.y, PenaltySpec(lam),
                                   aug_linear=plan.linear_term())
            np.testing.assert_allclose(b.coef, a.coef, atol=1e-6)


# ------------------------------------------------------- main-effect fitting


def test_main_effect_constant_outcome_is_intercept_only():
    rng = np.random.default_rng(44)
    ds = gaussian_dataset(rng, n=24)
    ds = type(ds)(family="gaussian", treatment=ds.treatment,
                  covariates=ds.covariates, y=np.full(24, 2.5))
    main = estimate_main_effect(ds, penalty=PenaltySpec(0.5, exempt_first=True))
    assert main.coef[0] == pytest.approx(2.5, abs=1e-9)
    np.testing.assert_allclose(main.coef[1:], 0.0, atol=1e-9)
    np.testing.assert_allclose(main.fitted, 2.5, atol=1e-9)


def test_main_effect_binary_heavy_penalty_gives_base_rate():
    rng = np.random.default_rng(45)
    ds = binary_dataset(rng, n=40)
    main = estimate_main_effect(ds, penalty=PenaltySpec(10.0, exempt_first=True))
    np.testing.assert_allclose(main.fitted, ds.y.mean(), atol=1e-6)
    assert main.meta["selection"] == "fixed"


def test_main_effect_survival_heavy_penalty_centers_at_zero():
    rng = np.random.default_rng(46)
    ds = survival_dataset(rng, n=40)
    main = estimate_main_effect(ds, penalty=PenaltySpec(10.0, exempt_first=True))
    # martingale residuals sum to zero, so the intercept-only fit is ~0
    np.testing.assert_allclose(main.fitted, 0.0, atol=1e-8)
    assert "tau" in main.meta


def test_main_effect_cv_route():
    rng = np.random.default_rng(47)
    ds = gaussian_dataset(rng, n=40)
    main = estimate_main_effect(ds, seed=13, folds=5)
    assert main.family == "gaussian"
    assert main.meta["selection"] == "cv"
    assert main.meta["folds"] == 5
    np.testing.assert_allclose(main.predict(ds.covariates), main.fitted, atol=1e-12)


def test_main_effect_argument_errors():
    rng = np.random.default_rng(48)
    ds = gaussian_dataset(rng, n=20)
    with pytest.raises(ValidationError, match="requires a seed"):
        estimate_main_effect(ds)
    with pytest.raises(ValidationError, match="PenaltySpec"):
        estimate_main_effect(ds, penalty=0.3)


def test_main_effect_survival_reuses_precomputed_residuals():
    rng = np.random.default_rng(49)
    ds = survival_dataset(rng, n=36)
    mart = martingale_residuals(ds.time, ds.status, tau=4.0)
    main = estimate_main_effect(ds, penalty=PenaltySpec(0.05, exempt_first=True), mart=mart)
    assert main.meta["tau"] == 4.0
    # same fit when the residuals are computed inside
    again = estimate_main_effect(ds, penalty=PenaltySpec(0.05, exempt_first=True), tau=4.0)
    np.testing.assert_allclose(again.coef, main.coef, atol=1e-12)

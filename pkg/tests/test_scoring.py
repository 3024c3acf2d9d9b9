"""Interaction scores, treatment-effect transforms, and stratification."""

import numpy as np
import pytest
from conftest import balanced_treatment, survival_dataset
from scipy.stats import spearmanr

from modcov.data import BasisSpec, Dataset, build_basis, build_modified_design
from modcov.errors import ModelMismatchError, ValidationError
from modcov.pipeline import fit_interaction_model
from modcov.scoring import (
    REL_RISK,
    RISK_DIFF,
    InteractionModel,
    interaction_score,
    relative_risk,
    risk_difference,
    stratify,
    survival_score_interpretation,
)


def _raw_model(coef, family="binomial", link=RISK_DIFF, center=False):
    """Model over an uncentered identity basis with len(coef)-1 covariates."""
    coef = np.asarray(coef, dtype=float)
    q = coef.size - 1
    probe = np.vstack([np.zeros(q), np.ones(q)])
    _, spec = build_basis(probe, BasisSpec(center=center))
    return InteractionModel(family=family, coef=coef, basis=spec, link=link)


# --------------------------------------------------------------- raw scores


def test_zero_coef_scores_zero():
    model = _raw_model(np.zeros(5), family="gaussian", link=None)
    Z = np.random.default_rng(0).normal(size=(12, 4))
    assert np.all(interaction_score(model, Z) == 0.0)


def test_unit_coef_extracts_first_covariate():
    model = _raw_model([0.0, 1.0, 0.0, 0.0], family="gaussian", link=None)
    Z = np.random.default_rng(1).normal(size=(9, 3))
    np.testing.assert_array_equal(interaction_score(model, Z), Z[:, 0])


def test_training_rows_reproduce_linear_predictor():
    # gamma' W*_i = T_i * score_i / 2, the defining identity of the design
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(25, 4))
    T = balanced_treatment(rng, 25)
    ds = Dataset(family="gaussian", treatment=T, covariates=Z,
                 y=rng.normal(size=25))
    design = build_modified_design(ds)
    gamma = rng.normal(size=design.W.shape[1])
    model = InteractionModel(family="gaussian", coef=gamma, basis=design.basis)
    scores = interaction_score(model, Z)
    np.testing.assert_array_equal(design.modified @ gamma, T * scores / 2.0)


def test_scoring_is_row_order_independent():
    model = _raw_model([0.3, -1.2, 0.5], family="gaussian", link=None)
    rng = np.random.default_rng(3)
    Z = rng.normal(size=(30, 2))
    perm = rng.permutation(30)
    np.testing.assert_array_equal(
        interaction_score(model, Z)[perm], interaction_score(model, Z[perm]))


def test_model_score_method_matches_function():
    model = _raw_model([0.5, 2.0], family="gaussian", link=None)
    Z = np.array([[1.0], [-0.5], [3.0]])
    np.testing.assert_array_equal(model.score(Z), interaction_score(model, Z))


def test_orientation_strings_keyed_by_family():
    assert "hazard" in _raw_model([0.0], family="cox", link=None).orientation
    assert "Prob" in _raw_model([0.0]).orientation


def test_coef_length_must_match_basis():
    probe = np.vstack([np.zeros(3), np.ones(3)])
    _, spec = build_basis(probe)
    with pytest.raises(ValidationError):
        InteractionModel(family="gaussian", coef=np.zeros(3), basis=spec)


def test_scoring_wrong_covariate_width_rejected():
    model = _raw_model([0.0, 1.0, 0.0], family="gaussian", link=None)
    with pytest.raises(ValidationError, match="expected 2 covariate column"):
        interaction_score(model, np.zeros((4, 3)))


def test_scoring_column_count_mismatch_message():
    # a hand-built spec whose column names disagree with its statistics slips
    # past construction; scoring must still refuse it with a count diagnostic
    spec = BasisSpec(center=False, centers=np.zeros(2), scales=np.ones(2),
                     columns=("intercept", "z1", "z2", "z3"), q=2)
    model = InteractionModel(family="gaussian", coef=np.zeros(4), basis=spec)
    with pytest.raises(ModelMismatchError,
                       match="basis produces 3 columns, model has 4 coefficients"):
        interaction_score(model, np.zeros((5, 2)))


# ------------------------------------------------------ risk difference


def test_risk_difference_zero_score_is_zero():
    model = _raw_model([0.0, 0.0])
    assert np.all(risk_difference(model, np.ones((5, 1))) == 0.0)


def test_risk_difference_saturates():
    model = _raw_model([40.0, 0.0])
    assert risk_difference(model, np.zeros((1, 1)))[0] > 0.999


def test_risk_difference_odd_in_score():
    rng = np.random.default_rng(4)
    Z = rng.normal(size=(20, 2))
    plus = _raw_model([0.7, -1.1, 0.4])
    minus = _raw_model([-0.7, 1.1, -0.4])
    np.testing.assert_array_equal(risk_difference(plus, Z),
                                  -risk_difference(minus, Z))


def test_risk_difference_is_monotone_in_score():
    model = _raw_model([0.2, 1.5, -0.8])
    Z = np.random.default_rng(5).normal(size=(50, 2))
    s = interaction_score(model, Z)
    d = risk_difference(model, Z)
    order = np.argsort(s)
    assert np.all(np.diff(d[order]) >= 0.0)
    assert np.all(np.abs(d) < 1.0)


def test_risk_difference_closed_form():
    model = _raw_model([0.3, 0.9])
    Z = np.linspace(-4.0, 4.0, 17)[:, None]
    np.testing.assert_array_equal(
        risk_difference(model, Z), np.tanh(interaction_score(model, Z) / 4.0))


def test_risk_difference_rejects_wrong_family_and_link():
    with pytest.raises(ModelMismatchError):
        risk_difference(_raw_model([0.0], family="gaussian", link=None), np.zeros((1, 0)))
    with pytest.raises(ModelMismatchError):
        risk_difference(_raw_model([0.0, 0.0], link=REL_RISK), np.zeros((1, 1)))


# -------------------------------------------------------- relative risk


def test_relative_risk_zero_score_is_one():
    model = _raw_model([0.0, 0.0], link=REL_RISK)
    assert np.all(relative_risk(model, np.ones((4, 1))) == 1.0)


def test_relative_risk_pinned_value():
    model = _raw_model([2.0 * np.log(4.0), 0.0], link=REL_RISK)
    np.testing.assert_allclose(relative_risk(model, np.zeros((1, 1))), [4.0],
                               rtol=1e-12)


def test_relative_risk_closed_form():
    model = _raw_model([-0.4, 1.3], link=REL_RISK)
    Z = np.linspace(-3.0, 3.0, 13)[:, None]
    np.testing.assert_array_equal(
        relative_risk(model, Z), np.exp(interaction_score(model, Z) / 2.0))


def test_relative_risk_rejects_wrong_link():
    with pytest.raises(ModelMismatchError):
        relative_risk(_raw_model([0.0, 0.0], link=RISK_DIFF), np.zeros((1, 1)))


def _cell_ratio_root(y, T, mask):
    """Exact minimizer of the relative-risk working loss within one z cell.

    With u = exp(score/2), the cell's stationarity condition is the quadratic
    s0*u^2 + ((n1-s1) - (n0-s0))*u - s1 = 0 where s/n count events/subjects
    per arm, so the fitted ratio has a closed form to compare against.
    """
    s1 = float(y[mask & (T == 1)].sum())
    n1 = float(np.sum(mask & (T == 1)))
    s0 = float(y[mask & (T == -1)].sum())
    n0 = float(np.sum(mask & (T == -1)))
    b = (n1 - s1) - (n0 - s0)
    return (-b + np.sqrt(b * b + 4.0 * s0 * s1)) / (2.0 * s0)


def test_relative_risk_two_point_population_oracle():
    # two-point covariate, true event rates 0.4 vs 0.1 at z=1 (ratio 4) and
    # 0.2 vs 0.2 at z=0 (ratio 1); the unpenalized fit is saturated, so the
    # fitted ratio must match the per-cell closed form and, at this N, sit
    # within 10% of the population value
    rng = np.random.default_rng(6)
    n = 100_000
    z = rng.integers(0, 2, size=n).astype(float)
    T = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    m = np.where(z == 1.0, np.where(T == 1.0, 0.4, 0.1), 0.2)
    y = (rng.random(n) < m).astype(float)
    ds = Dataset(family="binomial", treatment=T, covariates=z[:, None], y=y)
    model = fit_interaction_model(ds, method="new", link=REL_RISK, lam=0.0)

    fitted = relative_risk(model, np.array([[1.0], [0.0]]))
    for value, mask in zip(fitted, (z == 1.0, z == 0.0)):
        np.testing.assert_allclose(value, _cell_ratio_root(y, T, mask), rtol=1e-4)
    assert abs(fitted[0] - 4.0) < 0.4
    assert abs(fitted[1] - 1.0) < 0.1


# ------------------------------------------------------ survival scores


def test_survival_score_zero_coef_no_signal():
    model = _raw_model(np.zeros(4), family="cox", link=None)
    assert np.all(survival_score_interpretation(model, np.ones((6, 3))) == 0.0)


def test_survival_score_rejects_other_families():
    with pytest.raises(ModelMismatchError):
        survival_score_interpretation(_raw_model([0.0, 0.0]), np.zeros((1, 1)))


def test_survival_score_orientation():
    # hazard exp(z*T/2): the true log hazard contrast between arms is z, and
    # the documented orientation says the fitted score must track it upward
    rng = np.random.default_rng(7)
    n = 300
    Z = rng.normal(size=(n, 1))
    T = balanced_treatment(rng, n)
    time = rng.exponential(1.0 / np.exp(Z[:, 0] * T / 2.0))
    ds = Dataset(family="cox", treatment=T, covariates=Z,
                 time=time, status=np.ones(n))
    model = fit_interaction_model(ds, method="new", lam=0.0)
    grid = np.linspace(-2.0, 2.0, 41)[:, None]
    rho, _ = spearmanr(survival_score_interpretation(model, grid), grid[:, 0])
    assert rho > 0.9


def test_negating_treatment_negates_survival_scores():
    rng = np.random.default_rng(8)
    ds = survival_dataset(rng, n=60)
    flipped = Dataset(family="cox", treatment=-ds.treatment, covariates=ds.covariates,
                      time=ds.time, status=ds.status)
    grid = rng.normal(size=(20, 4))
    a = fit_interaction_model(ds, method="new", lam=0.05)
    b = fit_interaction_model(flipped, method="new", lam=0.05)
    np.testing.assert_allclose(interaction_score(a, grid),
                               -interaction_score(b, grid), atol=1e-4)


# --------------------------------------------------------- stratification


def test_stratify_median_hand_case():
    groups = stratify(np.array([1.0, 2.0, 3.0, 4.0]))
    np.testing.assert_array_equal(groups.labels, [0, 0, 1, 1])
    assert groups.sizes == (2, 2)
    assert groups.names == ("low", "high")
    assert groups.cutpoints == (2.5,)


def test_stratify_ties_go_to_lower_group():
    groups = stratify(np.array([1.0, 2.0, 2.0, 3.0]))
    np.testing.assert_array_equal(groups.labels, [0, 0, 0, 1])
    assert groups.sizes == (3, 1)


def test_stratify_tertiles():
    groups = stratify(np.arange(1.0, 10.0), rule="tertile")
    assert groups.sizes == (3, 3, 3)
    assert groups.names == ("low", "medium", "high")


def test_stratify_generic_quantile_names():
    groups = stratify(np.arange(8.0), rule=4)
    assert groups.sizes == (2, 2, 2, 2)
    assert groups.names == ("g1", "g2", "g3", "g4")


def test_stratify_refuses_too_few_distinct_scores():
    with pytest.raises(ValidationError,
                       match="2 quantile groups need 2 distinct scores; only 1 present"):
        stratify(np.ones(5))
    with pytest.raises(ValidationError, match="only 2 present"):
        stratify(np.array([1.0, 2.0, 1.0, 2.0]), rule="tertile")


def test_stratify_fixed_cutpoints():
    groups = stratify(np.array([-1.0, 0.0, 0.5, 2.0]), rule="fixed",
                      cutpoints=[0.0, 1.0])
    np.testing.assert_array_equal(groups.labels, [0, 0, 1, 2])
    assert groups.sizes == (2, 1, 1)


def test_stratify_fixed_rule_validation():
    with pytest.raises(ValidationError, match="requires cutpoints"):
        stratify(np.array([1.0, 2.0]), rule="fixed")
    with pytest.raises(ValidationError, match="nondecreasing"):
        stratify(np.array([1.0, 2.0]), rule="fixed", cutpoints=[1.0, 0.0])


def test_stratify_needs_two_groups_and_data():
    with pytest.raises(ValidationError, match="at least 2 groups"):
        stratify(np.array([1.0, 2.0, 3.0]), rule=1)
    with pytest.raises(ValidationError, match="empty"):
        stratify(np.array([]))


def test_stratify_affine_invariance():
    rng = np.random.default_rng(9)
    for k in (2, 3, 5):
        scores = rng.normal(size=40)
        base = stratify(scores, rule=k)
        shifted = stratify(2.5 * scores + 7.0, rule=k)
        np.testing.assert_array_equal(base.labels, shifted.labels)
        assert base.sizes == shifted.sizes


def test_stratify_labels_partition_subjects():
    rng = np.random.default_rng(10)
    scores = rng.normal(size=73)
    groups = stratify(scores, rule=5)
    assert sum(groups.sizes) == 73
    counts = np.bincount(groups.labels, minlength=5)
    assert tuple(int(c) for c in counts) == groups.sizes

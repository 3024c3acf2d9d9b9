"""Per-subject interaction scores, treatment-effect transforms, stratification.

The score of a subject with covariates z is coef' W(z), computed with the
training basis frozen (same centers and scales). Orientation conventions,
which differ by family, live in the transform docstrings and in the model's
orientation field.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import BINOMIAL, COX, BasisSpec, apply_basis
from .errors import ModelMismatchError, ValidationError

RISK_DIFF = "riskdiff"
REL_RISK = "relrisk"

_ORIENTATION = {
    "gaussian": "higher score = larger E(Y | T=+1) - E(Y | T=-1)",
    "binomial": "higher score = treatment +1 raises Prob(Y=1) more",
    "cox": "higher score = larger hazard under T=+1 relative to T=-1",
}


@dataclass
class InteractionModel:
    """A fitted treatment-interaction scoring rule."""

    family: str
    coef: np.ndarray
    basis: BasisSpec
    method: str = "new"                  # new | new_augmented | full_regression
    link: str = None                     # riskdiff | relrisk (binomial only)
    penalty: dict = field(default_factory=dict)
    augmentation: dict = None
    training: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coef = np.ascontiguousarray(self.coef, dtype=float)
        if self.basis.columns is not None and self.coef.shape[0] != len(self.basis.columns):
            raise ValidationError("coefficient length does not match basis output")

    @property
    def orientation(self):
        return _ORIENTATION[self.family]

    def score(self, Z):
        return interaction_score(self, Z)


def interaction_score(model, Z):
    """coef' W(z) per row, using the model's frozen training basis."""
    W = apply_basis(model.basis, Z)
    if W.shape[1] != model.coef.shape[0]:
        raise ModelMismatchError(
            f"basis produces {W.shape[1]} columns, model has {model.coef.shape[0]} coefficients")
    return W @ model.coef


def risk_difference(model, Z):
    """Estimated Prob(Y=1|T=+1,z) - Prob(Y=1|T=-1,z) from a risk-difference fit.

    (e^{s/2}-1)/(e^{s/2}+1) = tanh(s/4), strictly increasing in the score s,
    with values in (-1, 1).
    """
    if model.family != BINOMIAL or model.link != RISK_DIFF:
        raise ModelMismatchError("risk_difference needs a binomial risk-difference model")
    return np.tanh(interaction_score(model, Z) / 4.0)


def relative_risk(model, Z):
    """Estimated Prob(Y=1|T=+1,z) / Prob(Y=1|T=-1,z) from a relative-risk fit.

    exp(s/2): positive, equal to 1 at score 0.
    """
    if model.family != BINOMIAL or model.link != REL_RISK:
        raise ModelMismatchError("relative_risk needs a binomial relative-risk model")
    return np.exp(interaction_score(model, Z) / 2.0)


def survival_score_interpretation(model, Z):
    """The raw score on the hazard scale: higher score means a larger hazard
    under T=+1 relative to T=-1 (so lower scores mark subjects expected to
    benefit from treatment +1)."""
    if model.family != COX:
        raise ModelMismatchError("survival score interpretation needs a cox-family model")
    return interaction_score(model, Z)


@dataclass(frozen=True)
class StratifiedGroups:
    cutpoints: tuple
    labels: np.ndarray      # group index per subject, 0 = lowest scores
    sizes: tuple
    names: tuple


_RULE_NAMES = {2: ("low", "high"), 3: ("low", "medium", "high")}


def stratify(scores, rule="median", cutpoints=None):
    """Partition subjects by score.

    rule: "median" (2 groups), an integer k >= 2 (k quantile groups;
    "tertile" = 3), or "fixed" with explicit nondecreasing cutpoints.
    Ties at a cutpoint go to the lower group. Quantile rules refuse inputs
    with fewer distinct scores than groups.
    """
    scores = np.ascontiguousarray(scores, dtype=float)
    if scores.size == 0:
        raise ValidationError("cannot stratify an empty score vector")
    if rule == "fixed":
        if cutpoints is None:
            raise ValidationError("fixed rule requires cutpoints")
        cuts = np.asarray(cutpoints, dtype=float)
        if np.any(np.diff(cuts) < 0):
            raise ValidationError("cutpoints must be nondecreasing")
    else:
        if rule == "median":
            k = 2
        elif rule == "tertile":
            k = 3
        else:
            k = int(rule)
            if k < 2:
                raise ValidationError("need at least 2 groups")
        distinct = np.unique(scores).size
        if distinct < k:
            raise ValidationError(
                f"{k} quantile groups need {k} distinct scores; only {distinct} present")
        qs = np.arange(1, k) / k
        cuts = np.quantile(scores, qs)
    labels = np.searchsorted(cuts, scores, side="left")
    n_groups = cuts.size + 1
    names = _RULE_NAMES.get(n_groups, tuple(f"g{i + 1}" for i in range(n_groups)))
    sizes = tuple(int(c) for c in np.bincount(labels, minlength=n_groups))
    return StratifiedGroups(cutpoints=tuple(float(c) for c in cuts),
                            labels=labels, sizes=sizes, names=names)

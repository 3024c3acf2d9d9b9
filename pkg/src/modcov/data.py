"""Datasets, basis expansion, and the modified-covariate transforms.

The working design is built in two steps: W = basis(Z) with an intercept
column of exact 1s, then the per-subject modification W*_i = W_i * T_i / 2
with treatment coded -1/+1. Everything downstream (solvers, scoring, the
CLI) consumes W or W* plus the treatment column, so this module owns the
exact arithmetic of those transforms and all input validation.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"
COX = "cox"
FAMILIES = (GAUSSIAN, BINOMIAL, COX)

_FAMILY_ALIASES = {
    "gaussian": GAUSSIAN,
    "continuous": GAUSSIAN,
    "binomial": BINOMIAL,
    "binary": BINOMIAL,
    "cox": COX,
    "survival": COX,
}


def canonical_family(name):
    try:
        return _FAMILY_ALIASES[str(name).strip().lower()]
    except KeyError:
        raise ValidationError(
            f"unknown family {name!r}; expected one of gaussian/binomial/cox"
        ) from None


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """One analysis dataset; immutable after construction.

    Outcome storage depends on family: y for gaussian/binomial, time and
    status for cox. treatment is -1/+1 throughout; remapping from 0/1
    happens (only when explicitly requested) in validate_dataset.
    """

    family: str
    treatment: np.ndarray
    covariates: np.ndarray
    y: np.ndarray = None
    time: np.ndarray = None
    status: np.ndarray = None
    ids: tuple = None
    covariate_names: tuple = None

    def __post_init__(self):
        family = canonical_family(self.family)
        object.__setattr__(self, "family", family)
        trt = np.asarray(self.treatment, dtype=float)
        if trt.ndim != 1:
            raise ValidationError("treatment must be a vector")
        bad = np.nonzero(~np.isin(trt, (-1.0, 1.0)))[0]
        if bad.size:
            raise ValidationError(
                f"treatment must be -1 or +1; row {bad[0] + 1} has {trt[bad[0]]}"
            )
        object.__setattr__(self, "treatment", _frozen(trt))
        Z = np.asarray(self.covariates, dtype=float)
        if Z.ndim != 2 or Z.shape[1] < 1:
            raise ValidationError("covariates must be an N x q matrix with q >= 1")
        n = Z.shape[0]
        if n < 2:
            raise ValidationError("N >= 2 required")
        if trt.shape[0] != n:
            raise ValidationError("treatment length does not match covariate rows")
        if not np.all(np.isfinite(Z)):
            i, j = np.argwhere(~np.isfinite(Z))[0]
            raise ValidationError(f"non-finite covariate at row {i + 1}, column {j + 1}")
        object.__setattr__(self, "covariates", _frozen(Z))
        if family == COX:
            if self.time is None or self.status is None:
                raise ValidationError("cox family requires time and status")
            time = np.asarray(self.time, dtype=float)
            status = np.asarray(self.status, dtype=float)
            if time.shape != (n,) or status.shape != (n,):
                raise ValidationError("time/status length does not match covariate rows")
            if not np.all(np.isfinite(time)) or np.any(time <= 0):
                bad = np.nonzero(~(np.isfinite(time) & (time > 0)))[0][0]
                raise ValidationError(f"survival times must be finite and > 0; row {bad + 1}")
            if not np.all(np.isin(status, (0.0, 1.0))):
                bad = np.nonzero(~np.isin(status, (0.0, 1.0)))[0][0]
                raise ValidationError(f"status must be 0 or 1; row {bad + 1}")
            object.__setattr__(self, "time", _frozen(time))
            object.__setattr__(self, "status", _frozen(status))
            object.__setattr__(self, "y", None)
        else:
            if self.y is None:
                raise ValidationError(f"{family} family requires y")
            y = np.asarray(self.y, dtype=float)
            if y.shape != (n,):
                raise ValidationError("y length does not match covariate rows")
            if not np.all(np.isfinite(y)):
                bad = np.nonzero(~np.isfinite(y))[0][0]
                raise ValidationError(f"non-finite outcome at row {bad + 1}")
            if family == BINOMIAL and not np.all(np.isin(y, (0.0, 1.0))):
                bad = np.nonzero(~np.isin(y, (0.0, 1.0)))[0][0]
                raise ValidationError(f"binomial outcome must be 0 or 1; row {bad + 1}")
            object.__setattr__(self, "y", _frozen(y))
            object.__setattr__(self, "time", None)
            object.__setattr__(self, "status", None)
        if self.ids is not None:
            ids = tuple(str(v) for v in self.ids)
            if len(ids) != n:
                raise ValidationError("ids length does not match covariate rows")
            object.__setattr__(self, "ids", ids)
        if self.covariate_names is not None:
            names = tuple(str(v) for v in self.covariate_names)
            if len(names) != Z.shape[1]:
                raise ValidationError("covariate_names length does not match q")
            object.__setattr__(self, "covariate_names", names)

    @property
    def n(self):
        return self.covariates.shape[0]

    @property
    def q(self):
        return self.covariates.shape[1]

    def take(self, indices):
        """Row subset as a new Dataset (original order of `indices` kept)."""
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            family=self.family,
            treatment=self.treatment[idx],
            covariates=self.covariates[idx],
            y=None if self.y is None else self.y[idx],
            time=None if self.time is None else self.time[idx],
            status=None if self.status is None else self.status[idx],
            ids=None if self.ids is None else tuple(self.ids[i] for i in idx),
            covariate_names=self.covariate_names,
        )

    def summary(self):
        out = {
            "n": int(self.n),
            "q": int(self.q),
            "family": self.family,
            "n_treated": int(np.sum(self.treatment == 1)),
            "n_control": int(np.sum(self.treatment == -1)),
        }
        if self.family == COX:
            out["events"] = int(np.sum(self.status))
        return out

    def require_both_arms(self):
        if not (np.any(self.treatment == 1) and np.any(self.treatment == -1)):
            raise ValidationError("single-arm data: both treatment values -1 and +1 required")


@dataclass(frozen=True)
class BasisSpec:
    """How covariates map to the regression basis W(z).

    kind 'identity' is the default (1, z1, ..., zq). A callable `transform`
    may replace the identity columns; it must be a pure function of Z and is
    not serializable, so models built on it cannot be written to disk.
    Centering/scaling statistics are computed once by build_basis and frozen;
    apply_basis reuses them verbatim.
    """

    center: bool = True
    scale: bool = False
    transform: object = None
    centers: np.ndarray = None
    scales: np.ndarray = None
    columns: tuple = None
    q: int = field(default=None)

    @property
    def fitted(self):
        return self.centers is not None

    @property
    def kind(self):
        return "identity" if self.transform is None else "custom"


def _transform_columns(spec, Z):
    if spec.transform is None:
        return np.asarray(Z, dtype=float)
    raw = np.asarray(spec.transform(Z), dtype=float)
    if raw.ndim != 2 or raw.shape[0] != np.shape(Z)[0]:
        raise ValidationError("basis transform must return one row per subject")
    return raw


def build_basis(Z, spec=None, names=None):
    """Fit the basis on training covariates.

    Returns (W, fitted BasisSpec). W has an intercept column of exact 1s at
    position 0; the remaining columns are the (optionally centered/scaled)
    transform columns. Scaling of a zero-variance column is skipped with a
    warning rather than dividing by zero.
    """
    if spec is None:
        spec = BasisSpec()
    if spec.fitted:
        raise ValidationError("basis already fitted; use apply_basis for new data")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] < 2:
        raise ValidationError("N >= 2 required to build a basis")
    if not np.all(np.isfinite(Z)):
        i, j = np.argwhere(~np.isfinite(Z))[0]
        raise ValidationError(f"non-finite covariate at row {i + 1}, column {j + 1}")
    raw = _transform_columns(spec, Z)
    if not np.all(np.isfinite(raw)):
        i, j = np.argwhere(~np.isfinite(raw))[0]
        raise ValidationError(f"non-finite basis column at row {i + 1}, column {j + 1}")
    k = raw.shape[1]
    centers = raw.mean(axis=0) if spec.center else np.zeros(k)
    scales = np.ones(k)
    if spec.scale:
        sd = raw.std(axis=0)
        flat = sd == 0
        if np.any(flat):
            cols = ", ".join(str(j + 1) for j in np.nonzero(flat)[0])
            warnings.warn(f"zero-variance basis column(s) {cols}: scaling skipped there")
        scales = np.where(flat, 1.0, sd)
    if names is None:
        names = tuple(f"z{j + 1}" for j in range(k))
    columns = ("intercept",) + tuple(names)
    fitted = BasisSpec(
        center=spec.center,
        scale=spec.scale,
        transform=spec.transform,
        centers=_frozen(centers),
        scales=_frozen(scales),
        columns=columns,
        q=Z.shape[1],
    )
    return apply_basis(fitted, Z), fitted


def apply_basis(spec, Z):
    """Apply a fitted basis to covariates; frozen statistics are reused."""
    if not spec.fitted:
        raise ValidationError("basis not fitted; call build_basis first")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if spec.q is not None and Z.shape[1] != spec.q:
        raise ValidationError(f"expected {spec.q} covariate column(s), got {Z.shape[1]}")
    raw = _transform_columns(spec, Z)
    if raw.shape[1] != spec.centers.shape[0]:
        raise ValidationError("basis transform returned an unexpected column count")
    body = (raw - spec.centers) / spec.scales
    W = np.empty((Z.shape[0], body.shape[1] + 1))
    W[:, 0] = 1.0
    W[:, 1:] = body
    return W


@dataclass(frozen=True)
class ModifiedDesign:
    """Basis matrix W alongside its treatment-modified twin W*.

    modified[i] = W[i] * treatment[i] / 2, exactly: the /2 and the sign flip
    are both exact in binary floating point.
    """

    W: np.ndarray
    modified: np.ndarray
    basis: BasisSpec


def modify_covariates(W, treatment):
    """Per-subject modification W*_i = W_i * T_i / 2."""
    W = np.asarray(W, dtype=float)
    trt = np.asarray(treatment, dtype=float)
    bad = np.nonzero(~np.isin(trt, (-1.0, 1.0)))[0]
    if bad.size:
        raise ValidationError(f"treatment must be -1 or +1; row {bad[0] + 1} has {trt[bad[0]]}")
    return W * (trt / 2.0)[:, None]


def build_modified_design(dataset, spec=None):
    """Basis + modification in one step for a dataset."""
    W, fitted = build_basis(dataset.covariates, spec, names=dataset.covariate_names)
    return ModifiedDesign(W=W, modified=modify_covariates(W, dataset.treatment), basis=fitted)


def modified_outcome(y, treatment, family):
    """The equivalent modified-outcome response 2*Y*T (continuous only)."""
    if canonical_family(family) != GAUSSIAN:
        raise ValidationError("modified outcome is defined for the gaussian family only")
    y = np.asarray(y, dtype=float)
    trt = np.asarray(treatment, dtype=float)
    bad = np.nonzero(~np.isin(trt, (-1.0, 1.0)))[0]
    if bad.size:
        raise ValidationError(f"treatment must be -1 or +1; row {bad[0] + 1} has {trt[bad[0]]}")
    return 2.0 * y * trt


_LEAD_COLUMNS = {GAUSSIAN: ("id", "y", "trt"), BINOMIAL: ("id", "y", "trt"), COX: ("id", "time", "status", "trt")}


def validate_dataset(header, rows, family, treatment_zero_one=False, source="data"):
    """Turn a raw string table into a typed Dataset.

    Treatment must be coded -1/+1 unless treatment_zero_one is set, in which
    case 0/1 is remapped to -1/+1. 0/1-looking data without the flag is an
    error rather than a silent recode.
    """
    family = canonical_family(family)
    lead = _LEAD_COLUMNS[family]
    header = [str(h).strip() for h in header]
    if len(header) < len(lead) + 1 or tuple(header[: len(lead)]) != lead:
        raise ValidationError(
            f"{source}: expected columns {','.join(lead)},z1,... got {','.join(header) or '(empty)'}"
        )
    cov_names = header[len(lead):]
    ids, numeric = [], []
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ValidationError(f"{source}: row {r} has {len(row)} fields, expected {len(header)}")
        ids.append(row[0])
        vals = []
        for c, cell in enumerate(row[1:], start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ValidationError(
                    f"{source}: non-numeric value {cell!r} at row {r}, column {header[c]}"
                ) from None
        numeric.append(vals)
    if not numeric:
        raise ValidationError(f"{source}: no data rows")
    table = np.asarray(numeric, dtype=float)
    tcol = len(lead) - 2  # treatment position within numeric block
    trt = table[:, tcol]
    values = set(np.unique(trt).tolist())
    if treatment_zero_one:
        if not values <= {0.0, 1.0}:
            raise ValidationError(f"{source}: treatment remap expects 0/1 codes, saw {sorted(values)}")
        trt = np.where(trt == 0.0, -1.0, 1.0)
    elif values <= {0.0, 1.0} and 0.0 in values:
        raise ValidationError(
            f"{source}: treatment looks 0/1-coded; pass the 0/1 remap option to confirm recoding"
        )
    kwargs = {}
    if family == COX:
        kwargs["time"] = table[:, 0]
        kwargs["status"] = table[:, 1]
    else:
        kwargs["y"] = table[:, 0]
    ds = Dataset(
        family=family,
        treatment=trt,
        covariates=table[:, len(lead) - 1:],
        ids=tuple(ids),
        covariate_names=tuple(cov_names),
        **kwargs,
    )
    ds.require_both_arms()
    if family == COX and not np.any(ds.status == 1.0):
        raise ValidationError(f"{source}: all-censored survival data (no events)")
    return ds


def load_dataset(path, family, treatment_zero_one=False):
    """Read a dataset CSV (schema: id,y,trt,z1.. or id,time,status,trt,z1..)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = list(reader)
    return validate_dataset(header, rows, family, treatment_zero_one=treatment_zero_one, source=str(path))


def write_dataset(dataset, path):
    """Write a dataset back to the CSV schema (full float precision)."""
    lead = _LEAD_COLUMNS[dataset.family]
    names = dataset.covariate_names or tuple(f"z{j + 1}" for j in range(dataset.q))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(lead) + list(names))
        for i in range(dataset.n):
            row = [dataset.ids[i] if dataset.ids else str(i + 1)]
            if dataset.family == COX:
                row += [repr(float(dataset.time[i])), repr(int(dataset.status[i]))]
            else:
                row.append(repr(float(dataset.y[i])))
            row.append(repr(int(dataset.treatment[i])))
            row += [repr(float(v)) for v in dataset.covariates[i]]
            writer.writerow(row)

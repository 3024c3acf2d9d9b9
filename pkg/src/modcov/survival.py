"""Two-group survival utilities for evaluating stratified treatment effects.

Kaplan-Meier curves, the two-group log-rank test, an unpenalized dense Cox
fit (Breslow ties, matching the penalized solver), and train/test splitting.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm

from .errors import ConvergenceError, ValidationError


def _check_surv(time, status):
    time = np.ascontiguousarray(time, dtype=float)
    status = np.ascontiguousarray(status, dtype=float)
    if time.ndim != 1 or time.shape != status.shape or time.size < 1:
        raise ValidationError("time and status must be equal-length nonempty vectors")
    if not np.all(np.isfinite(time)) or np.any(time < 0):
        raise ValidationError("times must be finite and nonnegative")
    if not np.all(np.isin(status, (0.0, 1.0))):
        raise ValidationError("status must be 0 or 1")
    return time, status


@dataclass(frozen=True)
class SurvivalCurve:
    times: np.ndarray      # distinct event times, ascending
    survival: np.ndarray   # S(t) just after each event time
    at_risk: np.ndarray
    events: np.ndarray     # event count at each time
    censor_times: np.ndarray

    def survival_at(self, t):
        """Step-function value(s) of S at t (right-continuous)."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        steps = np.concatenate(([1.0], self.survival))
        return steps[idx]


def kaplan_meier(time, status):
    """Product-limit estimator; tied events drop S by their joint factor."""
    time, status = _check_surv(time, status)
    order = np.argsort(time, kind="stable")
    t, d = time[order], status[order]
    n = t.size
    utimes, starts = np.unique(t, return_index=True)
    at_risk_all = n - starts
    d_counts = np.array([d[t == u].sum() for u in utimes])
    ev = d_counts > 0
    times = utimes[ev]
    at_risk = at_risk_all[ev]
    events = d_counts[ev]
    survival = np.cumprod(1.0 - events / at_risk)
    censor_times = np.sort(time[status == 0.0])
    return SurvivalCurve(times=times, survival=survival, at_risk=at_risk,
                         events=events, censor_times=censor_times)


@dataclass(frozen=True)
class LogRankResult:
    statistic: float
    pvalue: float
    observed: tuple
    expected: tuple
    groups: tuple


def logrank(time, status, group):
    """Two-group log-rank test (1 df, hypergeometric variance)."""
    time, status = _check_surv(time, status)
    group = np.asarray(group)
    if group.shape != time.shape:
        raise ValidationError("group must match time length")
    labels = np.unique(group)
    if labels.size != 2:
        raise ValidationError(f"log-rank needs exactly 2 groups, got {labels.size}")
    if not np.any(status == 1.0):
        raise ValidationError("log-rank needs at least one event")
    in0 = group == labels[0]
    o0 = e0 = var = 0.0
    for u in np.unique(time[status == 1.0]):
        at = time >= u
        n_at = at.sum()
        n0 = np.count_nonzero(at & in0)
        ev = (time == u) & (status == 1.0)
        d = ev.sum()
        d0 = np.count_nonzero(ev & in0)
        o0 += d0
        e0 += d * n0 / n_at
        if n_at > 1:
            var += d * (n0 / n_at) * (1.0 - n0 / n_at) * (n_at - d) / (n_at - 1)
    d_total = float(status.sum())
    if var <= 0.0:
        stat = 0.0
    else:
        stat = (o0 - e0) ** 2 / var
    return LogRankResult(statistic=float(stat), pvalue=float(chi2.sf(stat, 1)),
                         observed=(float(o0), d_total - float(o0)),
                         expected=(float(e0), d_total - float(e0)),
                         groups=tuple(labels.tolist()))


def _risk_suffix(values, firsts):
    # suffix sums evaluated at each subject's tie-group start, so the risk
    # set at time t_i is every subject with t_j >= t_i
    rev = np.cumsum(values[::-1], axis=0)[::-1]
    return rev[firsts]


def cox_newton(X, time, status, max_iter=100, tol=1e-10):
    """Unpenalized Cox fit (Breslow ties) by full Newton iteration.

    Returns (coefficients, observed information at the optimum, log partial
    likelihood). Intended for low-dimensional designs (group indicators,
    score-by-treatment interaction checks); raises ConvergenceError on
    monotone likelihoods or singular information.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("design must be 2-D")
    time, status = _check_surv(time, status)
    n, p = X.shape
    if time.size != n:
        raise ValidationError("time length does not match design")
    if not np.any(status == 1.0):
        raise ValidationError("cox fit requires at least one event")
    order = np.lexsort((np.arange(n), time))
    t, d, Xs = time[order], status[order], X[order]
    firsts = np.searchsorted(t, t, side="left")
    ev = d == 1.0
    beta = np.zeros(p)
    for _ in range(max_iter):
        eta = Xs @ beta
        shift = eta.max()
        e = np.exp(eta - shift)
        r0 = _risk_suffix(e, firsts)
        r1 = _risk_suffix(e[:, None] * Xs, firsts)
        xbar = r1 / r0[:, None]
        U = (Xs[ev] - xbar[ev]).sum(axis=0)
        outer = Xs[:, :, None] * Xs[:, None, :]
        r2 = _risk_suffix(e[:, None, None] * outer, firsts)
        I = (r2[ev] / r0[ev, None, None]
             - xbar[ev, :, None] * xbar[ev, None, :]).sum(axis=0)
        try:
            step = np.linalg.solve(I, U)
        except np.linalg.LinAlgError:
            raise ConvergenceError("cox information matrix is singular") from None
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > 500.0:
            raise ConvergenceError("cox likelihood is monotone (estimate diverges)")
        if np.max(np.abs(step)) < tol:
            eta = Xs @ beta
            shift = eta.max()
            e = np.exp(eta - shift)
            r0 = _risk_suffix(e, firsts)
            loglik = float(((eta - shift) - np.log(r0))[ev].sum())
            r1 = _risk_suffix(e[:, None] * Xs, firsts)
            xbar = r1 / r0[:, None]
            r2 = _risk_suffix(e[:, None, None] * outer, firsts)
            I = (r2[ev] / r0[ev, None, None]
                 - xbar[ev, :, None] * xbar[ev, None, :]).sum(axis=0)
            return beta, I, loglik
    raise ConvergenceError(f"cox Newton did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class TwoGroupCox:
    hazard_ratio: float
    log_hr: float
    se: float
    pvalue: float
    groups: tuple          # (reference, comparison); HR is comparison vs reference
    estimable: bool
    reason: str = ""


def cox_two_group(time, status, group):
    """Hazard ratio of the second group label versus the first (Wald test).

    No events in one group gives a monotone partial likelihood; the result is
    flagged non-estimable instead of raising.
    """
    time, status = _check_surv(time, status)
    group = np.asarray(group)
    labels = np.unique(group)
    if labels.size != 2:
        raise ValidationError(f"two-group cox needs exactly 2 groups, got {labels.size}")
    glabels = tuple(labels.tolist())
    x = (group == labels[1]).astype(float)
    for lab in labels:
        if status[group == lab].sum() == 0:
            return TwoGroupCox(np.nan, np.nan, np.nan, np.nan, glabels, False,
                               reason=f"no events in group {lab!r}")
    try:
        beta, info, _ = cox_newton(x.reshape(-1, 1), time, status)
    except ConvergenceError as exc:
        return TwoGroupCox(np.nan, np.nan, np.nan, np.nan, glabels, False, reason=str(exc))
    log_hr = float(beta[0])
    se = float(1.0 / np.sqrt(info[0, 0]))
    z = log_hr / se
    return TwoGroupCox(hazard_ratio=float(np.exp(log_hr)), log_hr=log_hr, se=se,
                       pvalue=float(2.0 * norm.sf(abs(z))), groups=glabels, estimable=True)


def split_train_test(dataset, k_per_arm=None, fraction=None, seed=None):
    """Split a Dataset into (train, test), preserving original row order.

    Either the first k_per_arm rows of each arm in file order, or a seeded
    random fraction drawn within each arm.
    """
    if (k_per_arm is None) == (fraction is None):
        raise ValidationError("give exactly one of k_per_arm or fraction")
    tr = np.asarray(dataset.treatment)
    chosen = []
    for arm in (1.0, -1.0):
        idx = np.nonzero(tr == arm)[0]
        if k_per_arm is not None:
            k = int(k_per_arm)
            if k < 0 or k > idx.size:
                raise ValidationError(f"arm {arm:+.0f} has {idx.size} subjects, cannot take {k}")
            chosen.append(idx[:k])
        else:
            f = float(fraction)
            if not 0.0 < f < 1.0:
                raise ValidationError("fraction must be in (0, 1)")
            if seed is None:
                raise ValidationError("random split requires a seed")
            rng = np.random.default_rng(int(seed) + int(arm == -1.0))
            k = int(round(f * idx.size))
            chosen.append(np.sort(rng.permutation(idx)[:k]))
    train_idx = np.sort(np.concatenate(chosen))
    mask = np.zeros(tr.size, dtype=bool)
    mask[train_idx] = True
    test_idx = np.nonzero(~mask)[0]
    return dataset.take(train_idx), dataset.take(test_idx)

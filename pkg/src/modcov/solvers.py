"""Penalized working-model fits by coordinate descent.

Four losses share one engine: each outer step expands the smooth part to a
weighted quadratic around the current coefficients and hands it to the
coordinate-descent kernel. The gaussian loss is its own expansion (one outer
step); the others iterate. All objectives are per-subject averages:

    gaussian   (1/N) sum 0.5*(y_i - offset_i - eta_i)^2 - (1/N) sum a_i*eta_i
    logistic   (1/N) sum [-y_i*eta_i + log(1+e^{eta_i}) + c_i*eta_i]
    relrisk    (1/N) sum [(1-y_i)*eta_i + y_i*e^{-eta_i} + c_i*eta_i]
    cox        (1/N) * Breslow negative log partial likelihood - mean_i(v_i)'gamma

plus lambda * sum_j mu_j*|gamma_j|, with eta = X @ gamma. The a_i / c_i / v_i
terms carry the efficiency augmentation and default to zero; each fit
function documents the convention its augmentation argument uses.

Convergence: inner coordinate descent stops when a full pass moves every
coefficient by less than tol (default 1e-7, cycle cap 1e5 per fit); outer
iteration additionally polishes until the exact-gradient KKT residual is
below 5e-7 on the standardized scale, so the KKT certificate holds for every
fit reported as converged.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import kernels
from .data import BINOMIAL, COX, GAUSSIAN, canonical_family
from .errors import ConvergenceError, ValidationError
from .rng import derive_seed

DEFAULT_TOL = 1e-7
DEFAULT_MAX_CYCLES = 100_000
_KKT_TARGET = 5e-7
_MAX_OUTER = 100
# Linear predictors beyond this are numerically saturated (probabilities are
# exactly 0/1 in double precision long before 500), so no KKT certificate is
# reachable and iteration is pointless; such fits stop unconverged. Happens
# at the unpenalized end of a path when the augmented objective loses
# coercivity on a fold.
_ETA_CAP = 500.0


@dataclass(frozen=True)
class PenaltySpec:
    """lambda, optional per-coefficient multipliers, optional first-column exemption."""

    lam: float
    multipliers: np.ndarray = None
    exempt_first: bool = False

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValidationError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.multipliers is not None:
            m = np.asarray(self.multipliers, dtype=float)
            if m.ndim != 1 or not np.all(np.isfinite(m)) or np.any(m < 0):
                raise ValidationError("penalty multipliers must be finite and >= 0")
            object.__setattr__(self, "multipliers", m)

    def resolve(self, p):
        """Per-coefficient penalty vector lambda*mu_j (0 for exempt columns)."""
        if self.multipliers is None:
            pen = np.full(p, float(self.lam))
        else:
            if self.multipliers.shape[0] != p:
                raise ValidationError(
                    f"penalty multipliers have length {self.multipliers.shape[0]}, design has {p} columns"
                )
            pen = self.lam * self.multipliers
        if self.exempt_first:
            pen = pen.copy()
            pen[0] = 0.0
        return np.ascontiguousarray(pen, dtype=float)


@dataclass
class FitResult:
    coef: np.ndarray
    lam: float
    family: str
    objective: float
    iterations: int
    converged: bool

    @property
    def n_nonzero(self):
        return int(np.count_nonzero(self.coef))


@dataclass
class LambdaPath:
    """A cross-validated regularization path."""

    lambdas: np.ndarray
    fits: list
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lambda_min: float
    lambda_1se: float
    selected: float
    rule: str
    folds: int
    seed: int

    @property
    def selected_fit(self):
        i = int(np.nonzero(self.lambdas == self.selected)[0][0])
        return self.fits[i]


def _as_design(X):
    X = np.asfortranarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValidationError("design must be a 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise ValidationError("design contains non-finite values")
    return X


def _as_vector(v, n, name):
    v = np.ascontiguousarray(v, dtype=float)
    if v.shape != (n,):
        raise ValidationError(f"{name} must have length {n}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite values")
    return v


def _check_binary(y):
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValidationError("outcome must be coded 0/1")


class _GaussianProblem:
    family = GAUSSIAN
    quadratic = True

    def __init__(self, X, y, offset=None, aug_linear=None):
        self.X = _as_design(X)
        self.n, self.p = self.X.shape
        y = _as_vector(y, self.n, "y")
        if offset is not None:
            y = y - _as_vector(offset, self.n, "offset")
        self.target = y
        if aug_linear is None:
            self.lin = np.zeros(self.p)
        else:
            a = _as_vector(aug_linear, self.n, "aug_linear")
            self.lin = self.X.T @ a / self.n

    def eta(self, gamma):
        return self.X @ gamma

    def loss_grad(self, gamma, eta):
        r = self.target - eta
        loss = 0.5 * np.mean(r * r) - float(self.lin @ gamma)
        grad = self.X.T @ (eta - self.target) / self.n - self.lin
        return loss, grad

    def expand(self, eta):
        w = np.full(self.n, 1.0 / self.n)
        rho = (self.target - eta) / self.n
        return w, rho


class _LogisticProblem:
    family = BINOMIAL
    quadratic = False

    def __init__(self, X, y, aug_offset=None):
        self.X = _as_design(X)
        self.n, self.p = self.X.shape
        self.y = _as_vector(y, self.n, "y")
        _check_binary(self.y)
        self.c = np.zeros(self.n) if aug_offset is None else _as_vector(aug_offset, self.n, "aug_offset")
        self.lin = np.zeros(self.p)

    def eta(self, gamma):
        return self.X @ gamma

    def loss_grad(self, gamma, eta):
        loss = float(np.mean(-self.y * eta + np.logaddexp(0.0, eta) + self.c * eta))
        dl = (expit(eta) - self.y + self.c) / self.n
        return loss, self.X.T @ dl

    def expand(self, eta):
        phat = expit(eta)
        wraw = np.maximum(phat * (1.0 - phat), 1e-8)
        # clamp the working residual, not the working response: floor-weight
        # observations encode their (exact) gradient through rho, and a
        # response-space clamp would silently shrink it
        resid = np.clip(self.y - phat - self.c, -1e8, 1e8)
        return wraw / self.n, resid / self.n


class _RelRiskProblem:
    family = BINOMIAL
    quadratic = False

    def __init__(self, X, y, aug_offset=None):
        self.X = _as_design(X)
        self.n, self.p = self.X.shape
        self.y = _as_vector(y, self.n, "y")
        _check_binary(self.y)
        self.c = np.zeros(self.n) if aug_offset is None else _as_vector(aug_offset, self.n, "aug_offset")
        self.lin = np.zeros(self.p)

    def eta(self, gamma):
        return self.X @ gamma

    @staticmethod
    def _expneg(eta):
        return np.exp(np.clip(-eta, None, 700.0))

    def loss_grad(self, gamma, eta):
        e = self._expneg(eta)
        loss = float(np.mean((1.0 - self.y) * eta + self.y * e + self.c * eta))
        dl = ((1.0 - self.y) - self.y * e + self.c) / self.n
        return loss, self.X.T @ dl

    def expand(self, eta):
        e = self._expneg(eta)
        wraw = np.maximum(self.y * e, 1e-8)
        # same residual-space clamp as the logistic expand; exposure-only
        # rows (y=0) have zero curvature but a fixed gradient share
        resid = np.clip(self.y * e - (1.0 - self.y) - self.c, -1e8, 1e8)
        return wraw / self.n, resid / self.n


class _CoxProblem:
    family = COX
    quadratic = False

    def __init__(self, X, time, status, aug_vectors=None):
        X = _as_design(X)
        n, p = X.shape
        time = _as_vector(time, n, "time")
        status = _as_vector(status, n, "status")
        if not np.all(np.isin(status, (0.0, 1.0))):
            raise ValidationError("status must be 0 or 1")
        if not np.any(status == 1.0):
            raise ValidationError("cox fit requires at least one event")
        # Sort by time, ties by original index; tied times are grouped inside
        # the kernel, so fits do not depend on input row order.
        order = np.lexsort((np.arange(n), time))
        self.X = np.asfortranarray(X[order])
        self.times = np.ascontiguousarray(time[order])
        self.status = np.ascontiguousarray(status[order])
        self.n, self.p = n, p
        if aug_vectors is None:
            self.lin = np.zeros(p)
        else:
            V = np.asarray(aug_vectors, dtype=float)
            if V.shape != (n, p):
                raise ValidationError("aug_vectors must be an N x p matrix")
            if not np.all(np.isfinite(V)):
                raise ValidationError("aug_vectors contains non-finite values")
            self.lin = V.mean(axis=0)
        self._g = np.empty(n)
        self._h = np.empty(n)

    def eta(self, gamma):
        return self.X @ gamma

    def loss_grad(self, gamma, eta):
        nll = kernels.cox_curvature(self.times, self.status, eta, self._g, self._h)
        loss = nll / self.n - float(self.lin @ gamma)
        grad = self.X.T @ self._g / self.n - self.lin
        return loss, grad

    def expand(self, eta):
        kernels.cox_curvature(self.times, self.status, eta, self._g, self._h)
        return self._h / self.n, -self._g / self.n

    def full_quadratic(self, eta):
        """Exact Hessian of the mean loss at eta (the linear term has none).

        The diagonal working weights ignore the risk-set coupling between
        subjects, which makes plain IRLS converge slowly here; outer steps
        use this full Hessian instead (see _newton_round).
        """
        e = np.exp(eta - np.max(eta))
        starts = np.r_[0, 1 + np.flatnonzero(np.diff(self.times))]
        d = np.add.reduceat(self.status, starts)
        ev = d > 0.0
        g0 = starts[ev]
        dk = d[ev]
        s0 = np.cumsum(e[::-1])[::-1][g0]
        s1 = np.cumsum((e[:, None] * self.X)[::-1], axis=0)[::-1][g0]
        # per-row multiplier sum_{event groups at or before the row} d_k/S_k,
        # constant within a tie group
        ratio = np.zeros(starts.size)
        ratio[ev] = dk / s0
        sizes = np.diff(np.append(starts, self.n))
        cum1 = np.repeat(np.cumsum(ratio), sizes)
        term1 = (self.X * (e * cum1)[:, None]).T @ self.X
        U = s1 * (np.sqrt(dk) / s0)[:, None]
        return (term1 - U.T @ U) / self.n


def kkt_violation(grad, gamma, pen):
    """Max violation of the subgradient conditions at gamma.

    Penalized zero coefficient: |g_j| may exceed pen_j by the returned
    amount; active or unpenalized coefficient: |g_j + pen_j*sign(gamma_j)|.
    """
    grad = np.asarray(grad, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    pen = np.asarray(pen, dtype=float)
    at_zero = gamma == 0.0
    slack = np.where(at_zero, np.maximum(np.abs(grad) - pen, 0.0),
                     np.abs(grad + pen * np.sign(gamma)))
    return float(slack.max()) if slack.size else 0.0


def _kkt_scale(problem):
    scale = getattr(problem, "_kkt_scale", None)
    if scale is None:
        zero = np.zeros(problem.p)
        _, g0 = problem.loss_grad(zero, np.zeros(problem.n))
        scale = max(1.0, float(np.max(np.abs(g0))) if g0.size else 1.0)
        problem._kkt_scale = scale
    return scale


_CD_CHUNK = 64


def _quad_objective(w, wz, rho, gamma, pen, lin):
    # 0.5*sum w*(z - X@gamma)^2 rewritten through rho = w*(z - X@gamma).
    return 0.5 * float(rho @ (rho / w)) - float(lin @ gamma) + float(pen @ np.abs(gamma))


def _direct_step(X, w, wz, rho, gamma, pen, lin, rounds=25):
    """Primal active-set iteration on the working quadratic.

    Each round solves the sign-restricted normal equations on the current
    support (plus at most one entering KKT violator) and steps to the first
    sign crossing, dropping the crossed coordinate. Every accepted step
    strictly decreases the penalized objective, so unlike a full jump to the
    candidate this cannot zigzag on rank-deficient designs; any numerical
    objective increase bails out to coordinate descent. Mutates gamma and
    rho in place.
    """
    def linsolve(G, rhs):
        try:
            sol = np.linalg.solve(G, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(G, rhs, rcond=None)[0]
        return sol if np.all(np.isfinite(sol)) else None

    def reduced_solve(idx, s):
        XA = X[:, idx]
        G = XA.T @ (w[:, None] * XA)
        return linsolve(G, XA.T @ wz + lin[idx] - pen[idx] * s)

    obj = _quad_objective(w, wz, rho, gamma, pen, lin)
    for _ in range(rounds):
        grad = -(X.T @ rho + lin)
        idx = np.flatnonzero(gamma)
        sol = reduced_solve(idx, np.sign(gamma[idx])) if idx.size else None
        full_step_required = False
        if sol is None or np.max(np.abs(sol - gamma[idx]), initial=0.0) <= 1e-14:
            # support already optimal; bring in the worst KKT violator
            slack = np.abs(grad) - pen
            slack[gamma != 0.0] = -np.inf
            j = int(np.argmax(slack))
            if slack[j] <= 1e-12:
                return
            idx2 = np.sort(np.append(idx, j))
            s = np.sign(gamma[idx2])
            pos = int(np.searchsorted(idx2, j))
            s[pos] = np.sign(-grad[j])
            sol = reduced_solve(idx2, s)
            if sol is None:
                return
            if pen[j] > 0.0 and float(sol[pos]) * s[pos] < 0.0:
                # Entering j needs a support coordinate dropped first: walk
                # the optimal-response ray for j until the first crossing.
                XA = X[:, idx]
                G = XA.T @ (w[:, None] * XA)
                resp = linsolve(G, XA.T @ (w * X[:, j]))
                if resp is None:
                    return
                d_sup = -resp * s[pos]
                shrink = d_sup * np.sign(gamma[idx]) < 0.0
                if not np.any(shrink):
                    return
                taus = -gamma[idx][shrink] / d_sup[shrink]
                tau = float(np.min(taus))
                if not np.isfinite(tau) or tau <= 0.0:
                    return
                cand = gamma.copy()
                cand[idx] += tau * d_sup
                kill = np.zeros(idx.size, dtype=bool)
                kill[shrink] = np.abs(taus - tau) < 1e-12
                cand[idx[kill]] = 0.0
                cand[j] = tau * s[pos]
                d = cand - gamma
                full_step_required = True
            else:
                idx = idx2
        if not full_step_required:
            cand = np.zeros_like(gamma)
            cand[idx] = sol
            # step to the first sign crossing among penalized support coords
            d = cand - gamma
            cross = (gamma != 0.0) & (pen > 0.0) & (np.sign(cand) != np.sign(gamma))
            if np.any(cross):
                ts = gamma[cross] / (gamma[cross] - cand[cross])
                t = min(1.0, float(np.min(ts)))
                if t < 1.0:
                    hit = np.zeros_like(cross)
                    hit[cross] = np.abs(ts - t) < 1e-12
                    cand = gamma + t * d
                    cand[hit] = 0.0
                    d = cand - gamma
        # accept the move, backtracking if numerics push the objective up
        accepted = False
        scale = 1.0
        for _bt in range(4):
            new = gamma + scale * d if scale < 1.0 else cand
            rho_new = wz - w * (X @ new)
            obj_new = _quad_objective(w, wz, rho_new, new, pen, lin)
            if obj_new <= obj + 1e-14 * (1.0 + abs(obj)):
                accepted = True
                break
            scale *= 0.25
        if not accepted:
            return
        tiny = obj - obj_new <= 1e-15 * (1.0 + abs(obj)) and scale >= 1.0
        gamma[:] = new
        rho[:] = rho_new
        obj = obj_new
        if tiny:
            return


def _solve_quadratic(X, w, rho, gamma, pen, lin, tol, budget):
    """Drive one working quadratic to the move<tol stopping rule.

    Plain cyclic coordinate descent crawls on near-singular designs at small
    lambda, so CD chunks alternate with _direct_step; a warm start gets the
    direct attempt up front because its support usually matches the optimum.
    The closing cd_solve call still certifies the coefficient-change rule,
    so accepted shortcuts change arithmetic, not the solution contract.
    Mutates gamma and rho in place; returns CD cycles used.
    """
    total = 0
    wz = rho + w * (X @ gamma)
    if np.any(gamma != 0.0):
        _direct_step(X, w, wz, rho, gamma, pen, lin)
    chunk = 8
    for _ in range(40):
        if total >= budget:
            return total
        cycles, conv = kernels.cd_solve(X, w, rho, gamma, pen, lin, tol,
                                        min(chunk, budget - total))
        total += cycles
        if conv:
            return total
        chunk = min(chunk * 2, _CD_CHUNK)
        _direct_step(X, w, wz, rho, gamma, pen, lin)
    if total < budget:
        cycles, _ = kernels.cd_solve(X, w, rho, gamma, pen, lin, tol, budget - total)
        total += cycles
    return total


def _newton_round(problem, gamma, grad, eta, pen, tol, budget):
    """Proximal Newton step for losses exposing a full Hessian.

    Factors H + ridge*I and solves the local model as a p-row penalized
    least-squares problem through the same machinery as the IRLS inner
    solves. Returns (candidate, cycles); candidate is None when the
    factorization fails. Acceptance is the caller's job.
    """
    H = problem.full_quadratic(eta)
    p = H.shape[0]
    ridge = 1e-8 * max(1.0, float(np.max(np.diag(H))))
    for _ in range(3):
        try:
            L = np.linalg.cholesky(H + ridge * np.eye(p))
            break
        except np.linalg.LinAlgError:
            ridge *= 100.0
    else:
        return None, 0
    Xs = np.asfortranarray(L.T)
    cand = gamma.copy()
    # rho = w*(z - X@cand) with w = 1 and z = L'gamma, so the model gradient
    # at the warm start equals the exact gradient there
    rho = np.zeros(p)
    cycles = _solve_quadratic(Xs, np.ones(p), rho, cand, pen,
                              -np.ascontiguousarray(grad), tol, budget)
    return cand, cycles


def _run_fit(problem, penalty, warm=None, tol=DEFAULT_TOL, max_cycles=DEFAULT_MAX_CYCLES):
    pen = penalty.resolve(problem.p)
    if warm is None:
        gamma = np.zeros(problem.p)
    else:
        gamma = np.array(warm, dtype=float)
        if gamma.shape != (problem.p,):
            raise ValidationError("warm start has wrong length")
    eta = problem.eta(gamma)
    loss, grad = problem.loss_grad(gamma, eta)
    obj = loss + float(pen @ np.abs(gamma))
    kkt_target = _KKT_TARGET * _kkt_scale(problem)
    use_newton = hasattr(problem, "full_quadratic")
    total = 0
    inner_tol = tol
    worse = 0
    converged = False
    for _ in range(_MAX_OUTER):
        if kkt_violation(grad, gamma, pen) <= kkt_target:
            converged = True
            break
        if total >= max_cycles:
            break
        if np.max(np.abs(eta), initial=0.0) > _ETA_CAP:
            break
        before = gamma.copy()
        new_obj = None
        if use_newton:
            cand, cycles = _newton_round(problem, gamma, grad, eta, pen,
                                         inner_tol, max_cycles - total)
            total += cycles
            if cand is not None:
                step = cand - gamma
                for t in (1.0, 0.5, 0.25, 0.125):
                    trial = cand if t == 1.0 else gamma + t * step
                    eta_t = problem.eta(trial)
                    loss_t, grad_t = problem.loss_grad(trial, eta_t)
                    obj_t = loss_t + float(pen @ np.abs(trial))
                    if obj_t <= obj + 1e-10 * (1.0 + abs(obj)):
                        gamma, eta, grad, new_obj = trial, eta_t, grad_t, obj_t
                        break
        if new_obj is None:
            w, rho = problem.expand(eta)
            total += _solve_quadratic(problem.X, w, rho, gamma, pen, problem.lin,
                                      inner_tol, max_cycles - total)
            eta = problem.eta(gamma)
            loss, grad = problem.loss_grad(gamma, eta)
            new_obj = loss + float(pen @ np.abs(gamma))
            if not problem.quadratic and new_obj > obj + 1e-10 * (1.0 + abs(obj)):
                # A full IRLS step can overshoot on shifted working responses;
                # the inner solution is still a descent direction, so halve
                # back toward the previous iterate until the exact objective
                # stops rising. A rise that survives this is real divergence.
                step = gamma - before
                t = 0.5
                for _ in range(8):
                    trial = before + t * step
                    eta_t = problem.eta(trial)
                    loss_t, grad_t = problem.loss_grad(trial, eta_t)
                    obj_t = loss_t + float(pen @ np.abs(trial))
                    if obj_t <= obj + 1e-10 * (1.0 + abs(obj)):
                        gamma, eta, grad, new_obj = trial, eta_t, grad_t, obj_t
                        break
                    t *= 0.5
        if not problem.quadratic:
            if new_obj > obj + 1e-10 * (1.0 + abs(obj)):
                worse += 1
                if worse >= 3:
                    raise ConvergenceError(
                        f"{problem.family} fit diverged: objective rose 3 outer iterations in a row"
                    )
            else:
                worse = 0
        if np.max(np.abs(gamma - before), initial=0.0) < inner_tol:
            # Stalled at this working tolerance; tighten so the KKT
            # certificate can still be reached.
            inner_tol = max(inner_tol / 10.0, 1e-13)
        obj = new_obj
    return FitResult(coef=gamma, lam=float(penalty.lam), family=problem.family,
                     objective=float(obj), iterations=total, converged=converged)


def fit_gaussian_lasso(X, y, penalty, offset=None, aug_linear=None, warm=None,
                       tol=DEFAULT_TOL, max_cycles=DEFAULT_MAX_CYCLES):
    """Least-squares Lasso.

    offset is subtracted from y before fitting (the residualized-outcome
    route of the augmented fit). aug_linear adds -(1/N) sum_i a_i*eta_i to
    the objective (the generic linear-augmentation route); the two routes
    coincide when aug_linear = -offset.
    """
    problem = _GaussianProblem(X, y, offset=offset, aug_linear=aug_linear)
    return _run_fit(problem, penalty, warm, tol, max_cycles)


def fit_logistic_lasso(X, y, penalty, aug_offset=None, warm=None,
                       tol=DEFAULT_TOL, max_cycles=DEFAULT_MAX_CYCLES):
    """Logistic Lasso without an implicit intercept.

    aug_offset is the per-subject scalar subtracted inside the working
    response (y_i - p_i - aug_offset_i); equivalently it adds
    (1/N) sum_i aug_offset_i*eta_i to the minimized objective.
    """
    problem = _LogisticProblem(X, y, aug_offset=aug_offset)
    return _run_fit(problem, penalty, warm, tol, max_cycles)


def fit_relative_risk(X, y, penalty, aug_offset=None, warm=None,
                      tol=DEFAULT_TOL, max_cycles=DEFAULT_MAX_CYCLES):
    """Relative-risk working-model Lasso.

    Minimizes (1/N) sum {(1-y_i)*eta_i + y_i*e^{-eta_i}} plus penalty; the
    score equation is sum x_i{(1-y_i) - y_i e^{-eta_i}} = 0. aug_offset has
    the same convention as the logistic fit.
    """
    problem = _RelRiskProblem(X, y, aug_offset=aug_offset)
    return _run_fit(problem, penalty, warm, tol, max_cycles)


def fit_cox_lasso(X, time, status, penalty, aug_vectors=None, warm=None,
                  tol=DEFAULT_TOL, max_cycles=DEFAULT_MAX_CYCLES):
    """Cox partial-likelihood Lasso (Breslow ties).

    aug_vectors rows are the per-subject augmentation vectors already signed
    by treatment; the objective subtracts gamma' * rowmean(aug_vectors).
    """
    problem = _CoxProblem(X, time, status, aug_vectors=aug_vectors)
    return _run_fit(problem, penalty, warm, tol, max_cycles)


_PROBLEMS = {
    "gaussian": _GaussianProblem,
    "logistic": _LogisticProblem,
    "relrisk": _RelRiskProblem,
    "cox": _CoxProblem,
}


def _make_problem(loss, X, y=None, time=None, status=None, offset=None,
                  aug_linear=None, aug_offset=None, aug_vectors=None):
    if loss == "gaussian":
        return _GaussianProblem(X, y, offset=offset, aug_linear=aug_linear)
    if loss == "logistic":
        return _LogisticProblem(X, y, aug_offset=aug_offset)
    if loss == "relrisk":
        return _RelRiskProblem(X, y, aug_offset=aug_offset)
    if loss == "cox":
        return _CoxProblem(X, time, status, aug_vectors=aug_vectors)
    raise ValidationError(f"unknown loss {loss!r}; expected one of {sorted(_PROBLEMS)}")


def smooth_parts(loss, X, y=None, time=None, status=None, offset=None,
                 aug_linear=None, aug_offset=None, aug_vectors=None):
    """Return f(gamma) -> (smooth loss, exact gradient) for one problem.

    Used by tests to check gradients against finite differences and to
    evaluate KKT certificates on fitted coefficients.
    """
    problem = _make_problem(loss, X, y=y, time=time, status=status, offset=offset,
                            aug_linear=aug_linear, aug_offset=aug_offset, aug_vectors=aug_vectors)

    def f(gamma):
        gamma = np.asarray(gamma, dtype=float)
        return problem.loss_grad(gamma, problem.eta(gamma))

    return f


def lambda_grid(loss, X, y=None, time=None, status=None, offset=None,
                aug_linear=None, aug_offset=None, aug_vectors=None,
                multipliers=None, exempt_first=False, n=100, ratio=1e-3):
    """Decreasing log-spaced penalty grid from lambda_max down to ratio*lambda_max.

    lambda_max is the largest |null-gradient| / multiplier over penalized
    columns, inflated by 1+1e-9 so the fit at grid[0] is all-zero exactly
    despite floating-point rounding. A constant outcome (all-zero gradient)
    degenerates to the single-point grid {0} with a warning.
    """
    problem = _make_problem(loss, X, y=y, time=time, status=status, offset=offset,
                            aug_linear=aug_linear, aug_offset=aug_offset, aug_vectors=aug_vectors)
    p = problem.p
    _, g0 = problem.loss_grad(np.zeros(p), np.zeros(problem.n))
    mult = np.ones(p) if multipliers is None else np.asarray(multipliers, dtype=float)
    if mult.shape != (p,):
        raise ValidationError("multipliers length does not match design")
    mask = mult > 0
    if exempt_first and p > 0:
        mask = mask.copy()
        mask[0] = False
    if not np.any(mask):
        warnings.warn("no penalized columns: degenerate single-point grid {0}")
        return np.array([0.0])
    lam_max = float(np.max(np.abs(g0[mask]) / mult[mask]))
    if lam_max <= 0.0:
        warnings.warn("all-zero null gradient (constant outcome?): degenerate grid {0}")
        return np.array([0.0])
    lam_max *= 1.0 + 1e-9
    if n < 1:
        raise ValidationError("grid size must be >= 1")
    if n == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * ratio, n)


def _path_fits(problem, grid, multipliers, exempt_first, tol, max_cycles):
    fits = []
    warm = None
    for lam in grid:
        fr = _run_fit(problem, PenaltySpec(float(lam), multipliers, exempt_first),
                      warm, tol, max_cycles)
        warm = fr.coef
        fits.append(fr)
    return fits


def _cox_nll(time, status, eta):
    """Breslow negative log partial likelihood at given linear predictors."""
    n = time.shape[0]
    order = np.lexsort((np.arange(n), time))
    g = np.empty(n)
    h = np.empty(n)
    return kernels.cox_curvature(np.ascontiguousarray(time[order]),
                                 np.ascontiguousarray(status[order]),
                                 np.ascontiguousarray(eta[order]), g, h)


def _heldout_losses(loss, grid_fits, X_hold, y=None, time_all=None, status_all=None,
                    X_all=None, hold_idx=None, offset_hold=None, c_hold=None):
    """Per-lambda held-out loss for one fold. See cross_validate for the metrics."""
    out = np.empty(len(grid_fits))
    for li, fr in enumerate(grid_fits):
        if loss == "gaussian":
            eta = X_hold @ fr.coef
            r = (y if offset_hold is None else y - offset_hold) - eta
            out[li] = float(np.mean(r * r))
        elif loss == "logistic":
            eta = X_hold @ fr.coef
            ph = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
            out[li] = float(-2.0 * np.mean(y * np.log(ph) + (1.0 - y) * np.log1p(-ph)))
        elif loss == "relrisk":
            eta = X_hold @ fr.coef
            e = np.exp(np.clip(-eta, None, 700.0))
            out[li] = float(np.mean((1.0 - y) * eta + y * e))
        else:  # cox: Verweij-van Houwelingen full-minus-train partial deviance
            keep = np.ones(time_all.shape[0], dtype=bool)
            keep[hold_idx] = False
            eta_all = X_all @ fr.coef
            full = _cox_nll(time_all, status_all, eta_all)
            train = _cox_nll(time_all[keep], status_all[keep], eta_all[keep])
            out[li] = 2.0 * (full - train) / hold_idx.size
    return out


def _fold_assignment(n, folds, strata, rng):
    assign = np.empty(n, dtype=int)
    if strata is None:
        strata = np.zeros(n)
    labels = np.unique(strata)
    for si, lab in enumerate(labels):
        idx = np.nonzero(strata == lab)[0]
        perm = rng.permutation(idx)
        assign[perm] = (np.arange(perm.size) + si) % folds
    return assign


def _folds_valid(assign, folds, loss, y, status):
    for k in range(folds):
        train = assign != k
        if np.count_nonzero(train) < 2 or np.count_nonzero(~train) < 1:
            return False
        if loss in ("logistic", "relrisk"):
            yt = y[train]
            if not (np.any(yt == 0.0) and np.any(yt == 1.0)):
                return False
        if loss == "cox" and not np.any(status[train] == 1.0):
            return False
    return True


def cross_validate(loss, X, y=None, time=None, status=None, treatment=None,
                   multipliers=None, exempt_first=False, offset=None,
                   aug_linear=None, aug_offset=None, aug_vectors=None,
                   folds=20, seed=None, grid=None, n_lambdas=100, lambda_ratio=1e-3,
                   rule="min", tol=DEFAULT_TOL, max_cycles=DEFAULT_MAX_CYCLES):
    """Cross-validated penalty path.

    Fold assignment is one seeded shuffle, stratified by treatment arm when
    `treatment` is given (and additionally by event status for the cox loss),
    so parallel and serial execution see identical folds. Held-out losses:
    squared error (gaussian), deviance (logistic), the relative-risk loss
    itself (relrisk), and full-minus-train partial-likelihood deviance (cox).
    A fold leaving its training side with a single class / no events is
    redrawn once from a derived seed, then rejected. Selection rule: "min"
    (default) or "1se".
    """
    if seed is None:
        raise ValidationError("cross-validation requires an explicit seed")
    if folds < 2:
        raise ValidationError("folds must be >= 2")
    if rule not in ("min", "1se"):
        raise ValidationError(f"unknown selection rule {rule!r}")
    X = _as_design(X)
    n = X.shape[0]
    if folds > n:
        raise ValidationError("more folds than subjects")

    strata_parts = []
    if treatment is not None:
        strata_parts.append(_as_vector(treatment, n, "treatment"))
    if loss == "cox":
        strata_parts.append(_as_vector(status, n, "status"))
    if strata_parts:
        combined = np.zeros(n)
        for part in strata_parts:
            _, codes = np.unique(part, return_inverse=True)
            combined = combined * (codes.max() + 1) + codes
        strata = combined
    else:
        strata = None

    assign = _fold_assignment(n, folds, strata, np.random.default_rng(int(seed)))
    if not _folds_valid(assign, folds, loss, y, status):
        assign = _fold_assignment(n, folds, strata, np.random.default_rng(derive_seed(seed, 1)))
        if not _folds_valid(assign, folds, loss, y, status):
            raise ValidationError("cross-validation folds degenerate (single class or no events) after redraw")

    def _subset(arr, idx):
        return None if arr is None else arr[idx]

    kw_all = dict(y=y, time=time, status=status, offset=offset, aug_linear=aug_linear,
                  aug_offset=aug_offset, aug_vectors=aug_vectors)
    if grid is None:
        grid = lambda_grid(loss, X, multipliers=multipliers, exempt_first=exempt_first,
                           n=n_lambdas, ratio=lambda_ratio, **kw_all)
    grid = np.asarray(grid, dtype=float)

    full_problem = _make_problem(loss, X, **kw_all)
    full_fits = _path_fits(full_problem, grid, multipliers, exempt_first, tol, max_cycles)

    losses = np.empty((folds, grid.size))
    for k in range(folds):
        tr = np.nonzero(assign != k)[0]
        ho = np.nonzero(assign == k)[0]
        kw_tr = {key: (_subset(np.asarray(val) if val is not None else None, tr))
                 for key, val in kw_all.items()}
        problem_k = _make_problem(loss, X[tr], **kw_tr)
        fits_k = _path_fits(problem_k, grid, multipliers, exempt_first, tol, max_cycles)
        y_arr = None if y is None else np.asarray(y, dtype=float)
        losses[k] = _heldout_losses(
            loss, fits_k, np.ascontiguousarray(X[ho]),
            y=None if y_arr is None else y_arr[ho],
            time_all=None if time is None else np.asarray(time, dtype=float),
            status_all=None if status is None else np.asarray(status, dtype=float),
            X_all=X, hold_idx=ho,
            offset_hold=None if offset is None else np.asarray(offset, dtype=float)[ho],
        )

    cv_mean = losses.mean(axis=0)
    cv_se = losses.std(axis=0, ddof=1) / np.sqrt(folds)
    i_min = int(np.argmin(cv_mean))
    lambda_min = float(grid[i_min])
    within = np.nonzero(cv_mean <= cv_mean[i_min] + cv_se[i_min])[0]
    lambda_1se = float(grid[within[0]])  # grid decreasing: first index = largest lambda
    selected = lambda_min if rule == "min" else lambda_1se
    return LambdaPath(lambdas=grid, fits=full_fits, cv_mean=cv_mean, cv_se=cv_se,
                      lambda_min=lambda_min, lambda_1se=lambda_1se, selected=selected,
                      rule=rule, folds=folds, seed=int(seed))


def _uni_gaussian(x, y):
    vx = np.var(x)
    if vx <= 0.0:
        return None
    return float(np.cov(x, y, ddof=0)[0, 1] / vx)


def _uni_logistic(x, y, max_iter=50):
    # Two-parameter (intercept, slope) Newton iteration.
    a = b = 0.0
    for _ in range(max_iter):
        eta = a + b * x
        ph = expit(eta)
        w = ph * (1.0 - ph)
        r = y - ph
        g0, g1 = r.sum(), (r * x).sum()
        h00 = w.sum()
        h01 = (w * x).sum()
        h11 = (w * x * x).sum()
        det = h00 * h11 - h01 * h01
        if not np.isfinite(det) or det <= 1e-300:
            return None
        da = (h11 * g0 - h01 * g1) / det
        db = (h00 * g1 - h01 * g0) / det
        a += da
        b += db
        if not (np.isfinite(a) and np.isfinite(b)) or abs(b) > 50.0:
            # separation: association is effectively infinite
            return np.sign(b) * np.inf if np.isfinite(b) else None
        if max(abs(da), abs(db)) < 1e-10:
            return float(b)
    return None


def _uni_cox(x, time, status):
    from .survival import cox_newton  # local import avoids a module cycle

    try:
        beta, _, _ = cox_newton(x.reshape(-1, 1), time, status)
    except (ConvergenceError, ValidationError):
        return None
    return float(beta[0])


def adaptive_weights(W, family, y=None, time=None, status=None, treatment=None,
                     mode="pooled", direction="reciprocal", clip_bounds=(1e-3, 1e3)):
    """Adaptive-Lasso penalty multipliers from univariate association strengths.

    One family-matched univariate regression of the outcome on each column of
    W (pooled over arms, or per arm with strengths |theta_+1| + |theta_-1|).
    Default direction "reciprocal" returns mu_j = 1/strength_j (stronger
    association, lighter penalty); "as-written" returns mu_j = strength_j.
    Multipliers are clipped to clip_bounds. Exactly constant columns (the
    intercept) get mu_j = 1 silently; a degenerate fit on a non-constant
    column gets mu_j = 1 with a warning.
    """
    W = _as_design(W)
    n, p = W.shape
    family = canonical_family(family)
    if direction not in ("reciprocal", "as-written"):
        raise ValidationError(f"unknown direction {direction!r}")
    if mode not in ("pooled", "armwise"):
        raise ValidationError(f"unknown mode {mode!r}")
    if mode == "armwise":
        if treatment is None:
            raise ValidationError("armwise weights require a treatment vector")
        treatment = _as_vector(treatment, n, "treatment")
        subsets = [np.nonzero(treatment == 1.0)[0], np.nonzero(treatment == -1.0)[0]]
    else:
        subsets = [np.arange(n)]

    def _one(col, rows):
        x = col[rows]
        if family == GAUSSIAN:
            return _uni_gaussian(x, y[rows])
        if family == BINOMIAL:
            if np.var(x) <= 0.0:
                return None
            return _uni_logistic(x, y[rows])
        return _uni_cox(x, time[rows], status[rows])

    if family in (GAUSSIAN, BINOMIAL):
        y = _as_vector(y, n, "y")
    else:
        time = _as_vector(time, n, "time")
        status = _as_vector(status, n, "status")

    mu = np.empty(p)
    degenerate = []
    for j in range(p):
        col = W[:, j]
        if np.all(col == col[0]):
            mu[j] = 1.0
            continue
        coefs = [_one(col, rows) for rows in subsets]
        if any(c is None or np.isnan(c) for c in coefs):
            degenerate.append(j)
            mu[j] = 1.0
            continue
        strength = sum(abs(c) for c in coefs)
        raw = (1.0 / strength if strength > 0 else np.inf) if direction == "reciprocal" else strength
        mu[j] = float(np.clip(raw, clip_bounds[0], clip_bounds[1]))
    if degenerate:
        warnings.warn(f"degenerate univariate fits for columns {degenerate}; multiplier 1 used")
    return mu

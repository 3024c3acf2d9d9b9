"""Single-source inner loops.

This module is loaded twice by ``kernels``: once as plain numpy, and once
with every function named in JIT_NAMES compiled by ``numba.njit``. Keep the
code inside the numba nopython subset: flat loops, np.dot on contiguous
slices, no dicts, no python objects. Design matrices arrive Fortran-ordered
so column slices are contiguous.
"""

import numpy as np

# Compiled by the numba build; order is irrelevant (lazy dispatch) but kept
# in call-dependency order for readability.
JIT_NAMES = ("soft_threshold", "cd_pass", "cd_solve", "cox_curvature")


def soft_threshold(value, threshold):
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def cd_pass(X, w, rho, gamma, pen, lin, colsq, mask):
    """One coordinate-descent pass over the columns where mask is set.

    State contract: rho == w * (z - X @ gamma) elementwise for the implicit
    working response z, so the smooth-part gradient for coordinate j is
    -(X[:, j] @ rho + lin[j]). rho and gamma are updated in place. Returns
    the largest absolute coefficient move of the pass.
    """
    p = X.shape[1]
    max_move = 0.0
    for j in range(p):
        if not mask[j]:
            continue
        d = colsq[j]
        if d <= 0.0:
            # Zero-curvature column: nothing to estimate, leave it be.
            continue
        col = X[:, j]
        c = lin[j] + d * gamma[j] + np.dot(col, rho)
        new = soft_threshold(c, pen[j]) / d
        move = new - gamma[j]
        if move != 0.0:
            rho -= (w * col) * move
            gamma[j] = new
            if abs(move) > max_move:
                max_move = abs(move)
    return max_move


def cd_solve(X, w, rho, gamma, pen, lin, tol, max_cycles):
    """Penalized weighted least squares by cyclic coordinate descent.

    Minimizes 0.5*sum_i w_i*(z_i - x_i'gamma)^2 - lin'gamma + sum_j pen_j*|gamma_j|
    with z encoded in rho (see cd_pass). Full passes alternate with
    active-set passes over the currently nonzero coefficients; convergence
    means a full pass moved no coefficient by tol or more. Returns
    (cycles_used, converged).
    """
    p = X.shape[1]
    colsq = np.empty(p)
    for j in range(p):
        col = X[:, j]
        colsq[j] = np.dot(w * col, col)
    full = np.ones(p, dtype=np.bool_)
    active = np.zeros(p, dtype=np.bool_)
    cycles = 0
    while cycles < max_cycles:
        move = cd_pass(X, w, rho, gamma, pen, lin, colsq, full)
        cycles += 1
        if move < tol:
            return cycles, True
        nnz = 0
        for j in range(p):
            active[j] = gamma[j] != 0.0
            if active[j]:
                nnz += 1
        if nnz == 0:
            continue
        while cycles < max_cycles:
            move = cd_pass(X, w, rho, gamma, pen, lin, colsq, active)
            cycles += 1
            if move < tol:
                break
    return cycles, False


def cox_curvature(times, status, eta, grad, hess):
    """Breslow negative log partial likelihood with per-subject curvature.

    Inputs must be sorted by time ascending; tied times are grouped so the
    result does not depend on order within ties. The risk set at an event
    time t is everyone with observed time >= t. Fills grad and hess with
    the first and second derivatives in eta of

        sum_i -status_i * (eta_i - log sum_{j: t_j >= t_i} exp(eta_j))

    and returns its value. hess is the diagonal Hessian approximation
    (exact diagonal of the full Hessian).
    """
    n = times.shape[0]
    shift = eta[0]
    for i in range(1, n):
        if eta[i] > shift:
            shift = eta[i]
    expz = np.empty(n)
    for i in range(n):
        expz[i] = np.exp(eta[i] - shift)
    suffix = np.empty(n + 1)
    suffix[n] = 0.0
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + expz[i]
    nll = 0.0
    cum1 = 0.0  # running sum of d_k / S_k over event times so far
    cum2 = 0.0  # running sum of d_k / S_k^2
    i = 0
    while i < n:
        j = i
        d = 0.0
        while j < n and times[j] == times[i]:
            if status[j] != 0.0:
                d += 1.0
                nll -= eta[j] - shift
            j += 1
        if d > 0.0:
            s = suffix[i]
            nll += d * np.log(s)
            cum1 += d / s
            cum2 += d / (s * s)
        for k in range(i, j):
            e = expz[k]
            grad[k] = e * cum1 - status[k]
            hess[k] = e * cum1 - e * e * cum2
        i = j
    return nll

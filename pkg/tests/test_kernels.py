"""Inner-loop kernels against brute-force oracles, plus backend selection."""

import os
import subprocess
import sys

import numpy as np
import pytest

from modcov import _kernels_impl as impl
from modcov import kernels


def test_soft_threshold_values():
    assert impl.soft_threshold(1.0, 0.4) == pytest.approx(0.6)
    assert impl.soft_threshold(-1.0, 0.4) == pytest.approx(-0.6)
    assert impl.soft_threshold(0.3, 0.5) == 0.0
    assert impl.soft_threshold(2.0, 0.0) == 2.0


def _cd_inputs(rng, n, p, lam):
    X = np.asfortranarray(rng.standard_normal((n, p)))
    w = rng.uniform(0.5, 2.0, size=n) / n
    z = rng.standard_normal(n)
    gamma = np.zeros(p)
    rho = w * z  # state contract: rho = w*(z - X@gamma) with gamma = 0
    pen = np.full(p, lam)
    lin = np.zeros(p)
    return X, w, z, gamma, rho, pen, lin


def test_cd_solve_unpenalized_matches_weighted_lstsq():
    rng = np.random.default_rng(1)
    for _ in range(5):
        X, w, z, gamma, rho, pen, lin = _cd_inputs(rng, 40, 6, 0.0)
        # oracle first: weighted least squares via a scaled dense solve
        sw = np.sqrt(w)
        expect, *_ = np.linalg.lstsq(sw[:, None] * X, sw * z, rcond=None)
        cycles, converged = impl.cd_solve(X, w, rho, gamma, pen, lin, 1e-12, 10_000)
        assert converged
        assert cycles >= 1
        np.testing.assert_allclose(gamma, expect, atol=1e-9)


def _slow_reference_cd(X, w, z, pen, lin, sweeps=60_000, tol=1e-13):
    """Deliberately naive coordinate descent, recomputing residuals each step."""
    p = X.shape[1]
    gamma = np.zeros(p)
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(p):
            r = z - X @ gamma + X[:, j] * gamma[j]
            d = float(np.dot(w * X[:, j], X[:, j]))
            c = float(np.dot(w * X[:, j], r)) + lin[j]
            new = impl.soft_threshold(c, pen[j]) / d
            biggest = max(biggest, abs(new - gamma[j]))
            gamma[j] = new
        if biggest < tol:
            break
    return gamma


def test_cd_solve_penalized_matches_reference():
    rng = np.random.default_rng(2)
    for lam in (0.02, 0.2):
        X, w, z, gamma, rho, pen, lin = _cd_inputs(rng, 30, 5, lam)
        lin = rng.standard_normal(5) * 0.01
        expect = _slow_reference_cd(X, w, z, pen, lin)
        impl.cd_solve(X, w, rho, gamma, pen, lin, 1e-13, 200_000)
        np.testing.assert_allclose(gamma, expect, atol=1e-8)


def test_cd_solve_maintains_rho_contract():
    rng = np.random.default_rng(3)
    X, w, z, gamma, rho, pen, lin = _cd_inputs(rng, 25, 4, 0.05)
    impl.cd_solve(X, w, rho, gamma, pen, lin, 1e-12, 10_000)
    np.testing.assert_allclose(rho, w * (z - X @ gamma), atol=1e-12)


def test_cd_solve_reports_budget_exhaustion():
    rng = np.random.default_rng(4)
    X, w, z, gamma, rho, pen, lin = _cd_inputs(rng, 50, 8, 0.0)
    cycles, converged = impl.cd_solve(X, w, rho, gamma, pen, lin, 1e-15, 1)
    assert cycles == 1
    assert not converged


def _brute_cox(times, status, eta):
    """Direct Breslow quantities with explicit risk-set loops (the oracle)."""
    n = times.size
    nll = 0.0
    grad = -status.astype(float).copy()
    hess = np.zeros(n)
    for u in np.unique(times[status == 1.0]):
        at = times >= u
        s = float(np.exp(eta[at]).sum())
        d = float(((times == u) & (status == 1.0)).sum())
        nll += d * np.log(s) - eta[(times == u) & (status == 1.0)].sum()
        grad[at] += d * np.exp(eta[at]) / s
        hess[at] += d * np.exp(eta[at]) / s - d * np.exp(2.0 * eta[at]) / s**2
    return nll, grad, hess


def test_cox_curvature_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = 20
        times = np.sort(rng.choice(np.arange(1.0, 9.0), size=n))  # forces ties
        status = (rng.uniform(size=n) < 0.7).astype(float)
        if status.sum() == 0:
            status[0] = 1.0
        eta = rng.standard_normal(n)
        g = np.empty(n)
        h = np.empty(n)
        nll = impl.cox_curvature(times, status, eta, g, h)
        nll0, g0, h0 = _brute_cox(times, status, eta)
        assert nll == pytest.approx(nll0, rel=1e-12)
        np.testing.assert_allclose(g, g0, atol=1e-12)
        np.testing.assert_allclose(h, h0, atol=1e-12)


def test_cox_curvature_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    n = 12
    times = np.sort(rng.uniform(0.5, 5.0, size=n))
    status = np.ones(n)
    status[::4] = 0.0
    eta = 0.3 * rng.standard_normal(n)
    g = np.empty(n)
    h = np.empty(n)
    impl.cox_curvature(times, status, eta, g, h)
    eps = 1e-6
    for k in range(n):
        ep = eta.copy()
        em = eta.copy()
        ep[k] += eps
        em[k] -= eps
        tmp = np.empty(n)
        fp = impl.cox_curvature(times, status, ep, tmp, tmp.copy())
        fm = impl.cox_curvature(times, status, em, tmp, tmp.copy())
        assert g[k] == pytest.approx((fp - fm) / (2.0 * eps), abs=1e-6)


def test_cox_curvature_tie_order_invariance():
    # grouped ties mean within-tie subject order cannot matter
    times = np.array([1.0, 2.0, 2.0, 2.0, 3.0])
    status = np.array([1.0, 1.0, 0.0, 1.0, 1.0])
    eta = np.array([0.1, -0.4, 0.9, 0.2, -0.3])
    perm = np.array([0, 3, 2, 1, 4])  # permutes only the tied block
    g1, h1, g2, h2 = (np.empty(5) for _ in range(4))
    nll1 = impl.cox_curvature(times, status, eta, g1, h1)
    nll2 = impl.cox_curvature(times[perm], status[perm], eta[perm], g2, h2)
    assert nll1 == pytest.approx(nll2, rel=1e-15)
    np.testing.assert_allclose(g2, g1[perm], atol=1e-15)
    np.testing.assert_allclose(h2, h1[perm], atol=1e-15)


def test_backend_name_is_known():
    assert kernels.backend_name() in ("numba", "numpy")


@pytest.mark.skipif(not kernels.numba_enabled(), reason="numba backend unavailable")
def test_numba_build_agrees_with_numpy_build():
    jit = kernels.compile_numba_build()
    rng = np.random.default_rng(7)
    X, w, z, g1, rho1, pen, lin = _cd_inputs(rng, 30, 5, 0.03)
    g2, rho2 = g1.copy(), rho1.copy()
    _, conv1 = impl.cd_solve(X, w, rho1, g1, pen, lin, 1e-11, 10_000)
    _, conv2 = jit.cd_solve(X, w, rho2, g2, pen, lin, 1e-11, 10_000)
    assert conv1 and conv2
    np.testing.assert_allclose(g2, g1, atol=1e-12)

    times = np.sort(rng.uniform(0.5, 5.0, size=20))
    status = (rng.uniform(size=20) < 0.7).astype(float)
    status[0] = 1.0
    eta = rng.standard_normal(20)
    ga, ha, gb, hb = (np.empty(20) for _ in range(4))
    na = impl.cox_curvature(times, status, eta, ga, ha)
    nb = jit.cox_curvature(times, status, eta, gb, hb)
    assert na == pytest.approx(nb, rel=1e-14)
    np.testing.assert_allclose(gb, ga, atol=1e-13)


def test_env_flag_disables_numba():
    env = dict(os.environ, MODCOV_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "from modcov.kernels import backend_name; print(backend_name())"],
        env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"

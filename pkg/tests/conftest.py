"""Shared dataset builders for the test suite.

Every builder takes an explicit numpy Generator so each test owns its seeds;
nothing here draws from global state.
"""

import numpy as np

from modcov.data import Dataset


def balanced_treatment(rng, n):
    # exactly n/2 per arm, shuffled; fitting code requires both arms present
    half = n // 2
    t = np.r_[np.ones(half), -np.ones(n - half)]
    return rng.permutation(t)


def gaussian_dataset(rng, n=30, q=4):
    Z = rng.standard_normal((n, q))
    T = balanced_treatment(rng, n)
    y = Z[:, 0] - 0.5 * Z[:, 1] + T * (0.8 * Z[:, 0]) + rng.standard_normal(n)
    return Dataset(family="gaussian", treatment=T, covariates=Z, y=y)


def binary_dataset(rng, n=40, q=4):
    Z = rng.standard_normal((n, q))
    T = balanced_treatment(rng, n)
    latent = 0.7 * Z[:, 0] + T * Z[:, 1] + rng.standard_normal(n)
    y = (latent >= 0.0).astype(float)
    if y.min() == y.max():  # both classes are required by the logistic losses
        y[0] = 1.0 - y[0]
    return Dataset(family="binomial", treatment=T, covariates=Z, y=y)


def survival_dataset(rng, n=40, q=4, censor_scale=3.0):
    Z = rng.standard_normal((n, q))
    T = balanced_treatment(rng, n)
    x_true = np.exp(0.5 * Z[:, 0] + 0.5 * T * Z[:, 1] + rng.standard_normal(n))
    c = rng.uniform(0.0, censor_scale, size=n)
    time = np.minimum(x_true, c)
    status = (x_true < c).astype(float)
    if status.sum() == 0:
        status[int(np.argmin(time))] = 1.0
    return Dataset(family="cox", treatment=T, covariates=Z, time=time, status=status)

"""Seeded data generators for every model family.

All generators draw from the exact covariance structures the estimators
assume, so simulated datasets double as recovery benchmarks.  Each takes an
explicit ``numpy.random.Generator`` to keep runs reproducible.
"""

from __future__ import annotations

import numpy as np

from . import kernels, mgpr, nsgpr
from .errors import ValidationError
from .gpr import mean_eval
from .linalg import chol_with_jitter


def gp_draws(rng, cov, n_draws):
    """Draws from ``N(0, cov)``, columns are realizations."""
    L, _ = chol_with_jitter(np.asarray(cov, dtype=float))
    return L @ rng.normal(size=(cov.shape[0], n_draws))


def simulate_gpr(rng, spec, hp, grid, n_realizations=1, mean=None):
    """Latent curves and noisy responses from a stationary GP.

    Returns ``(latent, responses)`` of shape (n, M); ``mean`` is an optional
    fitted :class:`MeanModel` evaluated on the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    K = kernels.cov_matrix(spec, hp, grid, grid)
    latent = gp_draws(rng, K, n_realizations)
    if mean is not None:
        latent = latent + mean_eval(mean, grid)[:, None]
    noise_sd = np.sqrt(hp.noise_variance)
    responses = latent + noise_sd * rng.normal(size=latent.shape)
    return latent, responses


def simulate_nsgpr(rng, coeffs, grid, n_realizations=1, corr_model="pow.ex",
                   gamma=2.0, nu=1.5):
    """Latent and noisy draws from a nonstationary covariance."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    K = nsgpr.ns_cov_matrix(coeffs, grid, grid, corr_model=corr_model,
                            gamma=gamma, nu=nu)
    latent = gp_draws(rng, K, n_realizations)
    noise_sd = np.sqrt(coeffs.noise_variance)
    return latent, latent + noise_sd * rng.normal(size=latent.shape)


def simulate_mgpr(rng, hyper, inputs, n_realizations=1, means=None):
    """Joint draws from the convolution model, split per output.

    Returns ``(latent_list, response_list)``; ``means`` is an optional list
    of fitted :class:`MeanModel` per output.
    """
    ins = []
    for T in inputs:
        T = np.asarray(T, dtype=float)
        ins.append(T[:, None] if T.ndim == 1 else T)
    K = mgpr.build_joint_cov(hyper, ins, add_noise=False)
    joint = gp_draws(rng, K, n_realizations)
    sizes = [T.shape[0] for T in ins]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    latent, responses = [], []
    for j, T in enumerate(ins):
        block = joint[offsets[j]:offsets[j + 1]]
        if means is not None and means[j] is not None:
            block = block + mean_eval(means[j], T)[:, None]
        noise = np.sqrt(hyper.noise_var[j]) * rng.normal(size=block.shape)
        latent.append(block)
        responses.append(block + noise)
    return latent, responses


def simulate_gpfr(rng, t_grid, u, beta_curves, spec, hp, *, x_curves=None,
                  gp_reg="time", alpha_curves=None):
    """Curves from a functional-regression mean plus GP residuals.

    Parameters
    ----------
    t_grid : (n,) array
        Shared observation grid.
    u : (M, p) array
        Scalar covariates; the mean of curve m is ``u_m' beta(t)``.
    beta_curves : (p, n) array
        Coefficient curves evaluated on the grid.
    spec, hp : kernel configuration of the residual GP
        The GP input is built from ``gp_reg`` ("time", a covariate index
        into ``x_curves``, or a list of those).
    x_curves : list, optional
        Functional covariates, each an (M, n) array.
    alpha_curves : (C, n) array, optional
        Concurrent functional-covariate coefficients added to the mean.

    Returns a dict with ``mean``, ``tau``, ``responses`` (all (M, n)).
    """
    t = np.asarray(t_grid, dtype=float).ravel()
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    beta = np.atleast_2d(np.asarray(beta_curves, dtype=float))
    if beta.shape[1] != t.size or beta.shape[0] != u.shape[1]:
        raise ValidationError("beta curves must be (p, n) on the grid")
    M = u.shape[0]
    mean = u @ beta
    if alpha_curves is not None:
        alpha = np.atleast_2d(np.asarray(alpha_curves, dtype=float))
        for c in range(alpha.shape[0]):
            mean = mean + alpha[c][None, :] * np.asarray(x_curves[c], dtype=float)
    reg_items = gp_reg if isinstance(gp_reg, (list, tuple)) else [gp_reg]
    tau = np.empty((M, t.size))
    for m in range(M):
        cols = []
        for item in reg_items:
            if item == "time":
                cols.append(t)
            else:
                cols.append(np.asarray(x_curves[int(item)], dtype=float)[m])
        X = np.column_stack(cols)
        K = kernels.cov_matrix(spec, hp, X, X)
        tau[m] = gp_draws(rng, K, 1)[:, 0]
    noise = np.sqrt(hp.noise_variance) * rng.normal(size=(M, t.size))
    return {"mean": mean, "tau": tau, "responses": mean + tau + noise}

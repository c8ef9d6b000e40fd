"""Gaussian process functional regression.

Estimation is two-step: a functional-regression mean is fitted across
curves, then one GP with shared hyperparameters is fitted to the stacked
per-curve residuals, using time and/or functional covariates as its inputs.
Prediction for a partially observed new curve conditions the residual GP on
that curve's observed residuals (type I); for a wholly unobserved curve, the
type II prediction mixes the type I predictions obtained by conditioning on
each training curve with equal weights 1/M:

    mean = sum_m w_m mean_m
    var  = sum_m w_m var_m + (sum_m w_m mean_m^2 - mean^2),  w_m = 1/M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from . import fr, gpr, kernels
from .errors import ValidationError
from .kernels import KernelSpec
from .linalg import chol_with_jitter, conditional_parts


@dataclass
class GPFRPrediction:
    """Prediction for a new curve; ``component_means`` holds the per-training-
    curve type I means backing a type II mixture."""

    grid: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    noise_free: bool
    prediction_type: str
    component_means: np.ndarray | None = None


@dataclass
class GPFRModel:
    """Two-step fitted model: FR mean plus shared-parameter residual GP."""

    fr_mean: fr.FRModel
    gp: gpr.GPModel
    gp_reg: tuple
    t_grids: list
    responses: list
    residuals: list
    gp_inputs: list
    fitted_mean: list | None = None
    fitted_sd: list | None = None

    @property
    def n_curves(self) -> int:
        return len(self.responses)

    @property
    def noise_variance(self) -> float:
        return self.gp.noise_variance


def _curve_list(data, name):
    if data is None:
        return None
    if isinstance(data, np.ndarray) and data.ndim == 2:
        return [np.asarray(r, dtype=float).ravel() for r in data]
    return [np.asarray(c, dtype=float).ravel() for c in data]


def _normalize_gp_reg(gp_reg, n_curves, grids):
    """Returns (selectors, data) where selectors are 'time' or 'given', and
    data holds per-dimension lists of per-curve arrays for 'given' entries."""
    if gp_reg is None:
        items = ["time"]
    elif isinstance(gp_reg, str):
        items = [gp_reg]
    elif isinstance(gp_reg, np.ndarray):
        items = [gp_reg]  # one curve set passed directly
    else:
        listed = list(gp_reg)
        if listed and all(not isinstance(e, str) and np.ndim(e) == 1 for e in listed):
            items = [listed]  # one ragged curve set
        else:
            items = listed
    selectors = []
    data = []
    for item in items:
        if isinstance(item, str):
            if item != "time":
                raise ValidationError(f"unknown gp regressor {item!r}")
            selectors.append("time")
            data.append(None)
        else:
            curves = _curve_list(item, "gp regressor")
            if len(curves) != n_curves:
                raise ValidationError(
                    f"gp regressor has {len(curves)} curves, expected {n_curves}"
                )
            for c, g in zip(curves, grids):
                if c.size != g.size:
                    raise ValidationError("gp regressor curve length mismatch")
            selectors.append("given")
            data.append(curves)
    return tuple(selectors), data


def _stack_gp_inputs(selectors, t, given_cols):
    cols = []
    gi = 0
    for sel in selectors:
        if sel == "time":
            cols.append(np.asarray(t, dtype=float).ravel())
        else:
            cols.append(np.asarray(given_cols[gi], dtype=float).ravel())
            gi += 1
    n = cols[0].size
    for c in cols:
        if c.size != n:
            raise ValidationError("gp input columns disagree in length")
    return np.column_stack(cols)


def fit(responses, t_grids, *, u_reg=None, fx_reg=None, gp_reg=None,
        kernel=("pow.ex",), gamma=2.0, nu=1.5, concurrent=True,
        fy_spec=None, fx_coef_spec=None, fitting=False, restarts=5, seed=0,
        use_gradient=True, max_iter=500) -> GPFRModel:
    """Fit the functional-regression mean, then the residual GP.

    Parameters
    ----------
    responses : (M, n) array or list of arrays
        Training curves (M >= 2), possibly on per-curve grids.
    t_grids : array or list of arrays
        Shared grid or one grid per curve.
    u_reg : (M, p) array, optional
        Scalar covariates of the mean model.
    fx_reg : list, optional
        Functional covariates of the mean model.
    gp_reg : optional
        Inputs of the residual GP: ``"time"`` (default), a curve set
        aligned with the grids, or a list mixing both.
    kernel : tuple of str
        Kernel families for the residual GP.
    fitting : bool
        Store in-sample fitted curves and standard deviations.
    """
    ys = _curve_list(responses, "responses")
    if len(ys) < 2:
        raise ValidationError("need at least two training curves")
    M = len(ys)
    grids = (
        [np.asarray(t_grids, dtype=float).ravel()] * M
        if np.ndim(t_grids) == 1
        else [np.asarray(g, dtype=float).ravel() for g in t_grids]
    )
    fxs = [_curve_list(x, "functional covariate") for x in fx_reg] if fx_reg else None

    fr_mean = fr.fr_fit(ys, grids, u_reg, fxs, concurrent=concurrent,
                        fy_spec=fy_spec, fx_coef_spec=fx_coef_spec)
    U = None
    if u_reg is not None:
        U = np.asarray(u_reg, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
    residuals = []
    for m in range(M):
        x_m = [fx[m] for fx in fxs] if fxs else None
        mu_m = fr.fr_mean_eval(fr_mean, U[m] if U is not None else None, x_m, grids[m])
        residuals.append(ys[m] - mu_m)

    selectors, gp_data = _normalize_gp_reg(gp_reg, M, grids)
    gp_inputs = []
    for m in range(M):
        given = [d[m] for d in gp_data if d is not None]
        gp_inputs.append(_stack_gp_inputs(selectors, grids[m], given))

    spec = KernelSpec(tuple(kernel), gp_inputs[0].shape[1], gamma=gamma, nu=nu)
    ds = gpr.Dataset.from_curves(gp_inputs, residuals)
    gp_model = gpr.fit(ds, spec, "zero", restarts=restarts, seed=seed,
                       use_gradient=use_gradient, max_iter=max_iter)

    model = GPFRModel(fr_mean, gp_model, selectors, grids, ys, residuals, gp_inputs)
    if fitting:
        fitted_mean, fitted_sd = [], []
        s2 = gp_model.noise_variance
        for m in range(M):
            X = gp_inputs[m]
            K = kernels.cov_matrix(spec, gp_model.hp, X, X)
            L, _ = chol_with_jitter(K + s2 * np.eye(X.shape[0]))
            alpha = cho_solve((L, True), residuals[m])
            smooth = K @ alpha
            Xs = cho_solve((L, True), K)
            var = np.maximum(np.diag(K) - np.einsum("ij,ij->j", K, Xs), 0.0) + s2
            fitted_mean.append(ys[m] - residuals[m] + smooth)
            fitted_sd.append(np.sqrt(var))
        model.fitted_mean = fitted_mean
        model.fitted_sd = fitted_sd
    return model


def _mean_at(model, u_star, x_star, t):
    u_star = None if u_star is None else np.asarray(u_star, dtype=float).ravel()
    return fr.fr_mean_eval(model.fr_mean, u_star, x_star, t)


def _tau_conditional(model, X_obs, r_obs, X_star):
    spec, hp = model.gp.spec, model.gp.hp
    Psi = kernels.cov_matrix(spec, hp, X_obs, X_obs, add_noise=True)
    L, _ = chol_with_jitter(Psi)
    alpha = cho_solve((L, True), r_obs)
    k_cross = kernels.cov_matrix(spec, hp, X_star, X_obs)
    prior = kernels.prior_variance_diag(spec, hp, X_star)
    return conditional_parts(L, alpha, k_cross, prior)


def predict_type1(model: GPFRModel, obs_t, obs_y, t_star, *, u_star=None,
                  x_star=None, obs_x=None, gp_obs=None, gp_star=None,
                  noise_free=False) -> GPFRPrediction:
    """Prediction for a new curve with its own observations.

    ``obs_t``/``obs_y`` are the new curve's observed points, ``obs_x`` the
    mean-model functional covariates there, and ``gp_obs``/``gp_star`` the
    non-time GP regressor values at the observed and prediction points.
    """
    obs_t = np.asarray(obs_t, dtype=float).ravel()
    obs_y = np.asarray(obs_y, dtype=float).ravel()
    t_star = np.asarray(t_star, dtype=float).ravel()
    if obs_t.size == 0 or obs_t.size != obs_y.size:
        raise ValidationError("type I prediction needs non-empty matching observations")
    mu_obs = _mean_at(model, u_star, obs_x, obs_t)
    r_obs = obs_y - mu_obs
    X_obs = _stack_gp_inputs(model.gp_reg, obs_t, _listify(gp_obs))
    X_star = _stack_gp_inputs(model.gp_reg, t_star, _listify(gp_star))
    shift, var = _tau_conditional(model, X_obs, r_obs, X_star)
    mean = _mean_at(model, u_star, x_star, t_star) + shift
    if not noise_free:
        var = var + model.noise_variance
    return GPFRPrediction(t_star, mean, np.sqrt(var), noise_free, "typeI")


def _listify(gp_cols):
    if gp_cols is None:
        return []
    if isinstance(gp_cols, np.ndarray) and gp_cols.ndim == 1:
        return [gp_cols]
    if isinstance(gp_cols, (list, tuple)) and gp_cols and np.ndim(gp_cols[0]) == 0:
        return [np.asarray(gp_cols, dtype=float)]
    return [np.asarray(c, dtype=float).ravel() for c in gp_cols]


def type2_components(model: GPFRModel, t_star, *, u_star=None, x_star=None,
                     gp_star=None, noise_free=False):
    """Per-training-curve type I means and variances at ``t_star``.

    Conditioning against curve m uses that curve's stored residuals and GP
    inputs; the new curve's own covariate values are used at the prediction
    points.
    """
    t_star = np.asarray(t_star, dtype=float).ravel()
    X_star = _stack_gp_inputs(model.gp_reg, t_star, _listify(gp_star))
    mu_star = _mean_at(model, u_star, x_star, t_star)
    M = model.n_curves
    means = np.empty((M, t_star.size))
    variances = np.empty((M, t_star.size))
    s2 = 0.0 if noise_free else model.noise_variance
    for m in range(M):
        shift, var = _tau_conditional(
            model, model.gp_inputs[m], model.residuals[m], X_star
        )
        means[m] = mu_star + shift
        variances[m] = var + s2
    return means, variances


def mix_equal_weights(means, variances):
    """Equal-weight mixture mean and variance over per-curve predictions.

    For component rows m: ``mean = sum_m mean_m / M`` and
    ``var = sum_m var_m / M + (sum_m mean_m^2 / M - mean^2)``; the second
    term is computed in centered form, so it is nonnegative by construction.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    variances = np.atleast_2d(np.asarray(variances, dtype=float))
    mean = means.mean(axis=0)
    var = variances.mean(axis=0) + np.mean((means - mean) ** 2, axis=0)
    return mean, var


def predict_type2(model: GPFRModel, t_star, *, u_star=None, x_star=None,
                  gp_star=None, noise_free=False, mean_only=False) -> GPFRPrediction:
    """Prediction for a wholly unobserved curve.

    Mixes the per-training-curve conditionings with equal weights 1/M; with
    ``mean_only`` the FR mean is returned with the GP prior variance.
    """
    t_star = np.asarray(t_star, dtype=float).ravel()
    if mean_only:
        mean = _mean_at(model, u_star, x_star, t_star)
        X_star = _stack_gp_inputs(model.gp_reg, t_star, _listify(gp_star))
        var = kernels.prior_variance_diag(model.gp.spec, model.gp.hp, X_star)
        if not noise_free:
            var = var + model.noise_variance
        return GPFRPrediction(t_star, mean, np.sqrt(var), noise_free, "typeII")
    means, variances = type2_components(
        model, t_star, u_star=u_star, x_star=x_star, gp_star=gp_star,
        noise_free=noise_free,
    )
    mean, var = mix_equal_weights(means, variances)
    return GPFRPrediction(t_star, mean, np.sqrt(var), noise_free, "typeII", means)

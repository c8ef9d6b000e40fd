"""Univariate Gaussian process regression.

Hyperparameters are estimated by maximizing the Gaussian marginal
log-likelihood

    l(theta) = -1/2 log|Psi| - 1/2 x' Psi^-1 x - n/2 log 2pi

summed over independent realizations of the process, with analytic gradients
via the trace identity ``dl/dtheta_j = 1/2 tr((aa' - Psi^-1) dPsi/dtheta_j)``
where ``a = Psi^-1 x``.  Prediction is exact Gaussian conditioning; optional
approximations are subset-of-data for training and subset-of-regressors for
prediction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import kernels
from .errors import FactorizationError, FitError, ValidationError
from .kernels import HyperParams, KernelSpec
from .linalg import chol_with_jitter, conditional_parts, gaussian_loglik
from .optimize import minimize_bfgs
from .seeds import RESTART_OFFSET, SOD_OFFSET, SOR_OFFSET, rng_for

MEAN_KINDS = ("zero", "constant", "linear", "average", "explicit")


class Dataset:
    """Inputs and one or more response realizations.

    Either a shared grid (``inputs`` of shape (n, Q) with ``responses`` of
    shape (n, M)) or, via :meth:`from_curves`, per-realization grids for
    ragged data.
    """

    def __init__(self, inputs, responses):
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        responses = np.asarray(responses, dtype=float)
        if responses.ndim == 1:
            responses = responses[:, None]
        if inputs.ndim != 2 or responses.ndim != 2:
            raise ValidationError("inputs and responses must be 2-D arrays")
        if inputs.shape[0] != responses.shape[0]:
            raise ValidationError(
                f"{inputs.shape[0]} input rows vs {responses.shape[0]} response rows"
            )
        if inputs.shape[0] < 2:
            raise ValidationError("need at least two observations")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(responses))):
            raise ValidationError("dataset contains non-finite values")
        self.inputs = inputs
        self.responses = responses
        self.curve_inputs = None
        self.curve_responses = None

    @classmethod
    def from_curves(cls, curve_inputs, curve_responses):
        """Ragged dataset: one grid and one response vector per realization."""
        if len(curve_inputs) != len(curve_responses) or not curve_inputs:
            raise ValidationError("need matching, non-empty curve lists")
        obj = cls.__new__(cls)
        ins, resp = [], []
        q = None
        for T, y in zip(curve_inputs, curve_responses):
            T = np.asarray(T, dtype=float)
            if T.ndim == 1:
                T = T[:, None]
            y = np.asarray(y, dtype=float).ravel()
            if T.shape[0] != y.size or T.shape[0] < 2:
                raise ValidationError("each curve needs >= 2 matching rows")
            if not (np.all(np.isfinite(T)) and np.all(np.isfinite(y))):
                raise ValidationError("dataset contains non-finite values")
            if q is None:
                q = T.shape[1]
            elif T.shape[1] != q:
                raise ValidationError("curves disagree on input dimension")
            ins.append(T)
            resp.append(y)
        obj.inputs = None
        obj.responses = None
        obj.curve_inputs = ins
        obj.curve_responses = resp
        return obj

    @property
    def shared_grid(self) -> bool:
        return self.inputs is not None

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1] if self.shared_grid else self.curve_inputs[0].shape[1]

    @property
    def n_realizations(self) -> int:
        return self.responses.shape[1] if self.shared_grid else len(self.curve_inputs)

    def blocks(self):
        """List of (inputs, response-columns) sharing one covariance matrix."""
        if self.shared_grid:
            return [(self.inputs, self.responses)]
        return [(T, y[:, None]) for T, y in zip(self.curve_inputs, self.curve_responses)]

    def pooled_response_variance(self) -> float:
        vals = (
            self.responses.ravel()
            if self.shared_grid
            else np.concatenate(self.curve_responses)
        )
        return float(np.var(vals))


def subset_of_data(dataset: Dataset, m: int, rng) -> Dataset:
    """Uniform without-replacement subsample of the shared grid, kept sorted."""
    if not dataset.shared_grid:
        raise ValidationError("subset-of-data requires a shared grid")
    n = dataset.inputs.shape[0]
    if not 2 <= m <= n:
        raise ValidationError(f"subset size must be in [2, {n}], got {m}")
    if m == n:
        return dataset
    idx = np.sort(rng.choice(n, size=m, replace=False))
    return Dataset(dataset.inputs[idx], dataset.responses[idx])


@dataclass
class MeanModel:
    """Fitted mean function: zero, constant, linear in t, pointwise average
    across realizations, or explicitly supplied values on the training grid."""

    kind: str
    coef: np.ndarray | None = None
    grid: np.ndarray | None = None
    values: np.ndarray | None = None


def mean_fit(dataset: Dataset, kind: str = "zero", mu=None) -> MeanModel:
    """Fit a mean model of the requested kind on a dataset.

    ``constant`` is the grand mean, ``linear`` a pooled least-squares fit on
    (1, t), ``average`` the pointwise mean over realizations (shared grid
    only), and ``explicit`` passes through user-supplied values.
    """
    if kind not in MEAN_KINDS:
        raise ValidationError(f"unknown mean model {kind!r}")
    if kind == "zero":
        return MeanModel("zero")
    if kind == "constant":
        vals = (
            dataset.responses
            if dataset.shared_grid
            else np.concatenate(dataset.curve_responses)
        )
        return MeanModel("constant", coef=np.array([np.mean(vals)]))
    if kind == "linear":
        rows, targets = [], []
        for T, Y in dataset.blocks():
            design = np.hstack([np.ones((T.shape[0], 1)), T])
            for col in Y.T:
                rows.append(design)
                targets.append(col)
        X = np.vstack(rows)
        y = np.concatenate(targets)
        coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < X.shape[1]:
            raise ValidationError("rank-deficient design for the linear mean model")
        return MeanModel("linear", coef=coef)
    if kind == "average":
        if not dataset.shared_grid:
            raise ValidationError(
                "average mean model requires realizations on one shared grid"
            )
        return MeanModel(
            "average",
            grid=dataset.inputs.copy(),
            values=dataset.responses.mean(axis=1),
        )
    # explicit
    if mu is None:
        raise ValidationError("explicit mean model needs mu values")
    mu = np.asarray(mu, dtype=float).ravel()
    if not dataset.shared_grid:
        raise ValidationError("explicit mean model requires a shared grid")
    if mu.size != dataset.inputs.shape[0]:
        raise ValidationError(
            f"mu has {mu.size} values for {dataset.inputs.shape[0]} grid rows"
        )
    return MeanModel("explicit", grid=dataset.inputs.copy(), values=mu)


def _lookup_grid_values(mean: MeanModel, T, allow_interp: bool):
    T = np.asarray(T, dtype=float)
    grid = mean.grid
    out = np.empty(T.shape[0])
    matched = np.zeros(T.shape[0], dtype=bool)
    index = {tuple(row): i for i, row in enumerate(grid)}
    for i, row in enumerate(T):
        j = index.get(tuple(row))
        if j is not None:
            out[i] = mean.values[j]
            matched[i] = True
    if np.all(matched):
        return out
    if allow_interp and grid.shape[1] == 1:
        order = np.argsort(grid[:, 0])
        out[~matched] = np.interp(
            T[~matched, 0], grid[order, 0], mean.values[order]
        )
        return out
    raise ValidationError(
        f"{mean.kind} mean model cannot be evaluated off the training grid"
    )


def mean_eval(mean: MeanModel, T):
    """Evaluate a fitted mean model at the rows of ``T``."""
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if mean is None or mean.kind == "zero":
        return np.zeros(T.shape[0])
    if mean.kind == "constant":
        return np.full(T.shape[0], mean.coef[0])
    if mean.kind == "linear":
        return np.hstack([np.ones((T.shape[0], 1)), T]) @ mean.coef
    return _lookup_grid_values(mean, T, allow_interp=mean.kind == "average")


def _centered_blocks(dataset: Dataset, mean: MeanModel):
    out = []
    for T, Y in dataset.blocks():
        out.append((T, Y - mean_eval(mean, T)[:, None]))
    return out


def log_marginal_likelihood(spec, hp, dataset, mean=None):
    """Marginal log-likelihood, summed over realizations."""
    total = 0.0
    for T, Y in _centered_blocks(dataset, mean or MeanModel("zero")):
        Psi = kernels.cov_matrix(spec, hp, T, T, add_noise=True)
        ll, _, _ = gaussian_loglik(Psi, Y)
        total += ll
    return total


def log_lik_gradient(spec, hp, dataset, mean=None):
    """Gradient of the marginal log-likelihood over the log-scale parameters."""
    grad = np.zeros(len(hp.names))
    for T, Y in _centered_blocks(dataset, mean or MeanModel("zero")):
        Psi = kernels.cov_matrix(spec, hp, T, T, add_noise=True)
        _, L, alpha = gaussian_loglik(Psi, Y)
        m = Y.shape[1]
        Pinv = cho_solve((L, True), np.eye(T.shape[0]))
        W = alpha @ alpha.T - m * Pinv
        for j, dPsi in enumerate(kernels.cov_grad(spec, hp, T)):
            grad[j] += 0.5 * float(np.vdot(W, dPsi))
    return grad


def log_lik_hessian_diag(spec, hp, dataset, mean=None):
    """Pure second derivatives of the log-likelihood, one per parameter.

    Used as a convergence diagnostic; entries should be negative at a
    maximum.
    """
    hess = np.zeros(len(hp.names))
    for T, Y in _centered_blocks(dataset, mean or MeanModel("zero")):
        Psi = kernels.cov_matrix(spec, hp, T, T, add_noise=True)
        _, L, alpha = gaussian_loglik(Psi, Y)
        m = Y.shape[1]
        Pinv = cho_solve((L, True), np.eye(T.shape[0]))
        firsts = kernels.cov_grad(spec, hp, T)
        seconds = kernels.cov_second_deriv(spec, hp, T)
        for j, (D, H) in enumerate(zip(firsts, seconds)):
            PD = Pinv @ D
            quad_H = float(np.sum((H @ alpha) * alpha))
            quad_A = float(np.sum((D @ (PD @ alpha)) * alpha))
            tr_PH = float(np.vdot(Pinv, H))
            tr_PA = float(np.sum(PD * PD.T))
            hess[j] += 0.5 * (quad_H - 2.0 * quad_A - m * tr_PH + m * tr_PA)
    return hess


@dataclass
class FitReport:
    converged: bool
    loglik: float
    iterations: int
    grad_norm: float
    message: str
    restarts: list = field(default_factory=list)
    hessian_diag: np.ndarray | None = None


@dataclass
class GPModel:
    """Fitted GP: kernel spec, log-scale estimates, mean model and caches."""

    spec: KernelSpec
    hp: HyperParams
    mean: MeanModel
    train: Dataset
    report: FitReport | None = None
    chols: list = field(default_factory=list, repr=False)
    alphas: list = field(default_factory=list, repr=False)

    @classmethod
    def from_params(cls, spec, hp, train, mean=None, report=None):
        """Assemble a usable model from known parameters (no optimization)."""
        mean = mean or MeanModel("zero")
        model = cls(spec, hp, mean, train, report)
        for T, Yc in _centered_blocks(train, mean):
            Psi = kernels.cov_matrix(spec, hp, T, T, add_noise=True)
            L, _ = chol_with_jitter(Psi)
            model.chols.append(L)
            model.alphas.append(cho_solve((L, True), Yc))
        return model

    @property
    def noise_variance(self) -> float:
        return self.hp.noise_variance


@dataclass
class PredictionResult:
    """Predictive mean and standard deviation on a grid."""

    grid: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    noise_free: bool


def _negative_loglik_and_grad(spec, names, blocks, use_gradient):
    def nll(theta):
        hp = HyperParams(theta, names)
        total = 0.0
        for T, Yc in blocks:
            Psi = kernels.cov_matrix(spec, hp, T, T, add_noise=True)
            ll, _, _ = gaussian_loglik(Psi, Yc)
            total += ll
        return -total

    if not (use_gradient and kernels.has_analytic_gradient(spec)):
        return nll, None

    def ngrad(theta):
        hp = HyperParams(theta, names)
        g = np.zeros(len(names))
        for T, Yc in blocks:
            Psi = kernels.cov_matrix(spec, hp, T, T, add_noise=True)
            _, L, alpha = gaussian_loglik(Psi, Yc)
            Pinv = cho_solve((L, True), np.eye(T.shape[0]))
            W = alpha @ alpha.T - Yc.shape[1] * Pinv
            for j, dPsi in enumerate(kernels.cov_grad(spec, hp, T)):
                g[j] += 0.5 * float(np.vdot(W, dPsi))
        return -g

    return nll, ngrad


def fit(dataset, spec, mean="zero", *, m=None, restarts=5, seed=0,
        use_gradient=True, mu=None, max_iter=500) -> GPModel:
    """Empirical-Bayes fit of a GP model.

    Parameters
    ----------
    dataset : Dataset
        Training data; multiple realizations share one parameter vector.
    spec : KernelSpec
        Kernel composition.
    mean : str
        One of ``zero``, ``constant``, ``linear``, ``average``, ``explicit``.
    m : int, optional
        Subset-of-data size; a seeded uniform subsample of the grid.
    restarts : int
        Number of random optimizer initializations; the best final
        likelihood wins.
    seed : int
        Top-level seed; sub-seeds are derived with fixed offsets.
    use_gradient : bool
        Use analytic gradients when available, else finite differences.
    mu : array_like, optional
        Mean values for the ``explicit`` mean model.

    Raises
    ------
    FitError
        If no restart converges; the error message carries per-restart
        diagnostics.
    """
    if m is not None:
        dataset = subset_of_data(dataset, int(m), rng_for(seed, SOD_OFFSET))
    if spec.input_dim != dataset.input_dim:
        raise ValidationError(
            f"kernel expects {spec.input_dim} input dims, data has {dataset.input_dim}"
        )
    mean_model = mean_fit(dataset, mean, mu)
    blocks = _centered_blocks(dataset, mean_model)
    names = spec.hyper_names()
    nll, ngrad = _negative_loglik_and_grad(spec, names, blocks, use_gradient)

    var0 = max(dataset.pooled_response_variance(), 1e-8)
    noise_init = float(np.log(0.1 * var0))
    noise_idx = names.index("noise")

    rng = rng_for(seed, RESTART_OFFSET)
    attempts = []
    for _ in range(max(1, int(restarts))):
        x0 = rng.uniform(-3.0, 2.0, size=len(names))
        x0[noise_idx] = noise_init
        res = minimize_bfgs(nll, x0, ngrad, max_iter=max_iter)
        attempts.append(res)

    usable = [r for r in attempts if r.converged and np.isfinite(r.fun)]
    diagnostics = [
        {
            "converged": r.converged,
            "loglik": -r.fun if np.isfinite(r.fun) else None,
            "iterations": r.iterations,
            "message": r.message,
        }
        for r in attempts
    ]
    if not usable:
        raise FitError(f"no optimizer restart converged: {diagnostics}")
    best = min(usable, key=lambda r: r.fun)

    hp_hat = HyperParams(best.x, names)
    report = FitReport(
        converged=True,
        loglik=-best.fun,
        iterations=best.iterations,
        grad_norm=best.grad_norm,
        message=best.message,
        restarts=diagnostics,
    )
    try:
        report.hessian_diag = log_lik_hessian_diag(spec, hp_hat, dataset, mean_model)
        if np.any(report.hessian_diag >= 0):
            warnings.warn(
                "log-likelihood curvature is not negative in every direction; "
                "the optimum may be flat or on a ridge",
                RuntimeWarning,
                stacklevel=2,
            )
    except Exception:
        report.hessian_diag = None
    return GPModel.from_params(spec, hp_hat, dataset, mean_model, report)


def _exact_prediction(model, tstar, realization):
    T = model.train.inputs
    L = model.chols[0]
    alpha = model.alphas[0][:, realization]
    k_cross = kernels.cov_matrix(model.spec, model.hp, tstar, T)
    prior = kernels.prior_variance_diag(model.spec, model.hp, tstar)
    shift, var = conditional_parts(L, alpha, k_cross, prior)
    return shift, var


def _sor_prediction(model, tstar, realization, m_sr, rng):
    # Regressor-subset prediction solved through a QR factorization of the
    # stacked design [K_NI; sigma L_I'], which squares less of the kernel's
    # condition number than the normal equations would.
    T = model.train.inputs
    n = T.shape[0]
    if not 1 <= m_sr <= n:
        raise ValidationError(f"subset-of-regressors size must be in [1, {n}]")
    idx = np.sort(rng.choice(n, size=m_sr, replace=False))
    yc = (model.train.responses[:, realization]
          - mean_eval(model.mean, T))
    K_ni = kernels.cov_matrix(model.spec, model.hp, T, T[idx])
    K_ii = kernels.cov_matrix(model.spec, model.hp, T[idx], T[idx])
    s2 = model.noise_variance
    L_ii, _ = chol_with_jitter(K_ii)
    design = np.vstack([K_ni, np.sqrt(s2) * L_ii.T])
    rhs = np.concatenate([yc, np.zeros(m_sr)])
    Q, R = np.linalg.qr(design)
    k_star = kernels.cov_matrix(model.spec, model.hp, tstar, T[idx])
    try:
        coef = solve_triangular(R, Q.T @ rhs)
        U = solve_triangular(R.T, k_star.T, lower=True)
    except (np.linalg.LinAlgError, ValueError):
        raise FactorizationError("subset-of-regressors system is singular")
    shift = k_star @ coef
    var = s2 * np.einsum("ij,ij->j", U, U)
    if np.any(var < 0.0):
        warnings.warn(
            "negative subset-of-regressors variances clamped at zero",
            RuntimeWarning,
            stacklevel=2,
        )
        var = np.maximum(var, 0.0)
    return shift, var


def predict(model: GPModel, tstar, *, noise_free=False, m_sr=None, seed=0,
            realization=0) -> PredictionResult:
    """Predictive mean and standard deviation at new inputs.

    ``m_sr`` switches to the subset-of-regressors approximation with a
    seeded random regressor set.  ``noise_free`` drops the noise variance
    from the predictive variance (the mean is unchanged).  With multiple
    realizations, ``realization`` selects the one being predicted.
    """
    if not model.train.shared_grid:
        raise ValidationError("predict expects a model trained on a shared grid")
    tstar = np.asarray(tstar, dtype=float)
    if tstar.ndim == 1:
        tstar = tstar[:, None]
    if not 0 <= realization < model.train.n_realizations:
        raise ValidationError(f"no realization {realization}")
    if m_sr is None:
        shift, var = _exact_prediction(model, tstar, realization)
    else:
        shift, var = _sor_prediction(
            model, tstar, realization, int(m_sr), rng_for(seed, SOR_OFFSET)
        )
    mean = mean_eval(model.mean, tstar) + shift
    if not noise_free:
        var = var + model.noise_variance
    return PredictionResult(tstar, mean, np.sqrt(var), noise_free)

"""Nonstationary and/or nonseparable Gaussian process regression.

The covariance between two points is

    sigma(t) sigma(t') |S(t)|^(1/4) |S(t')|^(1/4) |(S(t)+S(t'))/2|^(-1/2)
        * g(sqrt(Q_tt'))

with the quadratic form ``Q_tt' = (t-t')' ((S(t)+S(t'))/2)^-1 (t-t')`` and an
isotropic correlation ``g`` (powered exponential or Matern).  The local
matrices ``S(t)`` (the inverse of the anisotropy matrix) and the log standard
deviation ``log sigma(t)`` vary over a chosen subset of the input coordinates
through B-spline surfaces; ``S`` is kept positive definite by a spherical
parametrization ``S = L L'`` with ``L`` built from exponentiated log-radius
surfaces and angle surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .bessel import matern_correlation
from .errors import FitError, NumericalError, ValidationError
from .fr import clamped_knots, periodic_bspline_design, _bspline_design
from .gpr import Dataset, FitReport, PredictionResult
from .linalg import chol_with_jitter, conditional_parts, gaussian_loglik
from .optimize import minimize_bfgs
from .seeds import RESTART_OFFSET, rng_for

_SPLINE_ORDER = 4


@dataclass(frozen=True)
class ParamBasis:
    """Tensor-product B-spline basis for the varying parameter surfaces.

    Surfaces are functions of the ``which_tau`` coordinates only, each
    rescaled to [0, 1]; cyclic coordinates use a periodic basis so the
    parameters match at the domain endpoints.
    """

    which_tau: tuple
    n_basis: int
    cyclic: tuple
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if self.n_basis < _SPLINE_ORDER:
            raise ValidationError(f"n_basis must be >= {_SPLINE_ORDER} (cubic splines)")
        if len(self.which_tau) not in (1, 2):
            raise ValidationError("parameter surfaces support 1 or 2 coordinates")

    @property
    def size(self) -> int:
        return self.n_basis ** len(self.which_tau)

    def design(self, T) -> np.ndarray:
        T = np.asarray(T, dtype=float)
        if T.ndim == 1:
            T = T[:, None]
        mats = []
        for k, c in enumerate(self.which_tau):
            span = self.hi[k] - self.lo[k]
            u = np.clip((T[:, c] - self.lo[k]) / span, 0.0, 1.0)
            if self.cyclic[k]:
                mats.append(periodic_bspline_design(u, self.n_basis, _SPLINE_ORDER, (0.0, 1.0)))
            else:
                knots = clamped_knots(self.n_basis, _SPLINE_ORDER, 0.0, 1.0)
                mats.append(_bspline_design(u, knots, _SPLINE_ORDER))
        if len(mats) == 1:
            return mats[0]
        return np.einsum("ni,nj->nij", mats[0], mats[1]).reshape(T.shape[0], -1)


@dataclass
class VaryingCoeffs:
    """Spline coefficients of the varying covariance parameters.

    ``sigma_coef`` parameterizes ``log sigma(t)`` (``None`` under the
    unit-signal-variance option), ``radius_coefs`` the log radii of the
    spherical factor (one per input dimension) and ``angle_coefs`` its
    angles (empty when the anisotropy is kept diagonal).
    """

    basis: ParamBasis
    input_dim: int
    sigma_coef: np.ndarray | None
    radius_coefs: list
    angle_coefs: list
    noise_log_var: float
    sep_cov: bool = False

    def __post_init__(self):
        q = self.input_dim
        if len(self.radius_coefs) != q:
            raise ValidationError(f"need {q} log-radius surfaces")
        expected_angles = 0 if (self.sep_cov or q == 1) else q * (q - 1) // 2
        if len(self.angle_coefs) != expected_angles:
            raise ValidationError(f"need {expected_angles} angle surfaces")

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.noise_log_var))


def eval_surfaces(coeffs: VaryingCoeffs, T):
    """``(sigma, S)`` at the rows of ``T``: sigma (n,) and local matrices (n, Q, Q)."""
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    n, q = T.shape
    D = coeffs.basis.design(T)
    sigma = np.exp(D @ coeffs.sigma_coef) if coeffs.sigma_coef is not None else np.ones(n)
    radii = np.column_stack([np.exp(D @ c) for c in coeffs.radius_coefs])
    L = np.zeros((n, q, q))
    if coeffs.sep_cov or q == 1:
        for i in range(q):
            L[:, i, i] = radii[:, i]
    else:
        angles = np.column_stack([D @ c for c in coeffs.angle_coefs])
        pos = 0
        for i in range(q):
            if i == 0:
                L[:, 0, 0] = radii[:, 0]
                continue
            row_angles = angles[:, pos : pos + i]
            pos += i
            sin_prod = np.ones(n)
            for k in range(i):
                L[:, i, k] = radii[:, i] * sin_prod * np.cos(row_angles[:, k])
                sin_prod = sin_prod * np.sin(row_angles[:, k])
            L[:, i, i] = radii[:, i] * sin_prod
    S = np.einsum("nij,nkj->nik", L, L)
    return sigma, S


def ns_quadratic_form(coeffs: VaryingCoeffs, T1, T2):
    """Quadratic form ``(t-t')' ((S(t)+S(t'))/2)^-1 (t-t')`` for all pairs."""
    T1 = np.asarray(T1, dtype=float)
    T2 = np.asarray(T2, dtype=float)
    if T1.ndim == 1:
        T1 = T1[:, None]
    if T2.ndim == 1:
        T2 = T2[:, None]
    _, S1 = eval_surfaces(coeffs, T1)
    _, S2 = eval_surfaces(coeffs, T2)
    return _quadratic_form_from_surfaces(T1, S1, T2, S2)[0]


def _quadratic_form_from_surfaces(T1, S1, T2, S2):
    q = T1.shape[1]
    diff = T1[:, None, :] - T2[None, :, :]
    if q == 1:
        with np.errstate(over="ignore"):  # overflow reads as infinite scale
            mid = 0.5 * (S1[:, None, 0, 0] + S2[None, :, 0, 0])
            if np.any(mid <= 0):
                raise NumericalError("averaged local matrix is singular")
            return diff[:, :, 0] ** 2 / mid, mid
    mid = 0.5 * (S1[:, None, :, :] + S2[None, :, :, :])
    det_mid = np.linalg.det(mid)
    if np.any(det_mid <= 0):
        raise NumericalError("averaged local matrix is singular")
    sol = np.linalg.solve(mid, diff[..., None])[..., 0]
    return np.einsum("ijq,ijq->ij", diff, sol), det_mid


def _correlation(r2, corr_model, gamma, nu):
    if corr_model == "pow.ex":
        r2 = np.maximum(r2, 0.0)
        return np.exp(-(r2 ** (0.5 * gamma)))
    if corr_model == "matern":
        return matern_correlation(r2, nu)
    raise ValidationError(f"unknown correlation model {corr_model!r}")


def ns_cov_matrix(coeffs: VaryingCoeffs, T1, T2, *, corr_model="pow.ex",
                  gamma=2.0, nu=1.5, add_noise=False):
    """Nonstationary covariance matrix between two input sets.

    With ``add_noise`` the noise variance is added on the diagonal where
    the paired rows coincide exactly.
    """
    T1 = np.asarray(T1, dtype=float)
    T2 = np.asarray(T2, dtype=float)
    if T1.ndim == 1:
        T1 = T1[:, None]
    if T2.ndim == 1:
        T2 = T2[:, None]
    sig1, S1 = eval_surfaces(coeffs, T1)
    sig2, S2 = eval_surfaces(coeffs, T2)
    q = T1.shape[1]
    if q == 1:
        quad, mid = _quadratic_form_from_surfaces(T1, S1, T2, S2)
        det1, det2, det_mid = S1[:, 0, 0], S2[:, 0, 0], mid
    else:
        quad, det_mid = _quadratic_form_from_surfaces(T1, S1, T2, S2)
        det1 = np.linalg.det(S1)
        det2 = np.linalg.det(S2)
    if np.any(det1 <= 0) or np.any(det2 <= 0):
        raise NumericalError("local matrix is singular at an evaluation point")
    pref = (
        np.outer(sig1 * det1**0.25, sig2 * det2**0.25) / np.sqrt(det_mid)
    )
    K = pref * _correlation(quad, corr_model, gamma, nu)
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite nonstationary covariance values")
    if add_noise:
        if T1.shape != T2.shape:
            raise ValidationError("noise requires T1 and T2 to be the same point set")
        coincide = np.all(T1 == T2, axis=1)
        K[np.diag_indices_from(K)] += np.exp(coeffs.noise_log_var) * coincide
    return K


@dataclass
class NSGPRModel:
    """Fitted nonstationary GP (zero mean)."""

    coeffs: VaryingCoeffs
    corr_model: str
    gamma: float
    nu: float
    train: Dataset
    report: FitReport | None = None
    chol: np.ndarray | None = field(default=None, repr=False)
    alpha: np.ndarray | None = field(default=None, repr=False)

    def cov(self, T1, T2, add_noise=False):
        return ns_cov_matrix(
            self.coeffs, T1, T2, corr_model=self.corr_model,
            gamma=self.gamma, nu=self.nu, add_noise=add_noise,
        )


def _pack(coeffs: VaryingCoeffs, fit_noise: bool):
    parts = []
    if coeffs.sigma_coef is not None:
        parts.append(coeffs.sigma_coef)
    parts.extend(coeffs.radius_coefs)
    parts.extend(coeffs.angle_coefs)
    if fit_noise:
        parts.append(np.array([coeffs.noise_log_var]))
    return np.concatenate(parts)


def _unpack(vec, template: VaryingCoeffs, fit_noise: bool) -> VaryingCoeffs:
    k = template.basis.size
    pos = 0
    sigma_coef = None
    if template.sigma_coef is not None:
        sigma_coef = vec[pos : pos + k]
        pos += k
    radius = []
    for _ in range(template.input_dim):
        radius.append(vec[pos : pos + k])
        pos += k
    angles = []
    for _ in range(len(template.angle_coefs)):
        angles.append(vec[pos : pos + k])
        pos += k
    noise = vec[pos] if fit_noise else template.noise_log_var
    return VaryingCoeffs(
        basis=template.basis,
        input_dim=template.input_dim,
        sigma_coef=sigma_coef,
        radius_coefs=radius,
        angle_coefs=angles,
        noise_log_var=float(noise),
        sep_cov=template.sep_cov,
    )


def fit(dataset, corr_model="pow.ex", *, gamma=2.0, nu=1.5, which_tau=(0,),
        n_basis=5, cyclic=None, unit_signal_variance=False,
        zero_noise_variance=False, sep_cov=False, restarts=3, seed=0,
        max_iter=200) -> NSGPRModel:
    """Maximum-likelihood fit of the varying covariance parameters.

    Parameters
    ----------
    dataset : Dataset
        Realizations on a shared grid; the input dimension may be up to 3.
    corr_model : str
        Isotropic correlation, ``pow.ex`` or ``matern``.
    which_tau : tuple of int
        0-based input coordinates the parameter surfaces vary over.
    n_basis : int
        B-spline surface size per coordinate (>= 4).
    cyclic : tuple of bool, optional
        Per-``which_tau``-coordinate periodicity flags.
    unit_signal_variance, zero_noise_variance, sep_cov : bool
        Fix sigma(t) = 1, fix the noise variance at exactly 0, or keep
        the anisotropy matrix diagonal.

    Gradients are finite differences over the spline coefficients.
    """
    if isinstance(dataset, tuple):
        dataset = Dataset(*dataset)
    if not dataset.shared_grid:
        raise ValidationError("nonstationary fit expects a shared grid")
    T = dataset.inputs
    q = T.shape[1]
    if q > 3:
        raise ValidationError("estimation is supported for up to 3 input dimensions")
    which_tau = tuple(int(c) for c in which_tau)
    if not which_tau or any(c < 0 or c >= q for c in which_tau):
        raise ValidationError(f"which_tau must name coordinates in 0..{q - 1}")
    cyclic = tuple(bool(c) for c in (cyclic or (False,) * len(which_tau)))
    if len(cyclic) != len(which_tau):
        raise ValidationError("cyclic flags must match which_tau")
    lo = T[:, list(which_tau)].min(axis=0)
    hi = T[:, list(which_tau)].max(axis=0)
    if np.any(hi <= lo):
        raise ValidationError("degenerate coordinate range for parameter surfaces")
    basis = ParamBasis(which_tau, int(n_basis), cyclic, lo, hi)

    k = basis.size
    n_angles = 0 if (sep_cov or q == 1) else q * (q - 1) // 2
    var0 = max(dataset.pooled_response_variance(), 1e-8)
    template = VaryingCoeffs(
        basis=basis,
        input_dim=q,
        sigma_coef=None if unit_signal_variance else np.zeros(k),
        radius_coefs=[np.zeros(k) for _ in range(q)],
        angle_coefs=[np.full(k, 0.5 * np.pi) for _ in range(n_angles)],
        noise_log_var=-np.inf if zero_noise_variance else float(np.log(0.1 * var0)),
        sep_cov=sep_cov,
    )
    fit_noise = not zero_noise_variance
    x_init = _pack(template, fit_noise)
    Y = dataset.responses

    def nll(vec):
        coeffs = _unpack(vec, template, fit_noise)
        Psi = ns_cov_matrix(coeffs, T, T, corr_model=corr_model, gamma=gamma,
                            nu=nu, add_noise=True)
        ll, _, _ = gaussian_loglik(Psi, Y)
        return -ll

    rng = rng_for(seed, RESTART_OFFSET)
    attempts = []
    for r in range(max(1, int(restarts))):
        x0 = x_init.copy()
        if r > 0:
            x0 = x0 + rng.uniform(-1.0, 1.0, size=x0.size)
        res = minimize_bfgs(nll, x0, max_iter=max_iter)
        attempts.append(res)
    usable = [r for r in attempts if r.converged and np.isfinite(r.fun)]
    diagnostics = [
        {"converged": r.converged, "loglik": -r.fun if np.isfinite(r.fun) else None,
         "iterations": r.iterations, "message": r.message}
        for r in attempts
    ]
    if not usable:
        raise FitError(f"no optimizer restart converged: {diagnostics}")
    best = min(usable, key=lambda r: r.fun)
    coeffs = _unpack(best.x, template, fit_noise)
    report = FitReport(True, -best.fun, best.iterations, best.grad_norm,
                       best.message, diagnostics)
    model = NSGPRModel(coeffs, corr_model, float(gamma), float(nu), dataset, report)
    Psi = model.cov(T, T, add_noise=True)
    L, _ = chol_with_jitter(Psi)
    model.chol = L
    model.alpha = cho_solve((L, True), Y)
    return model


def predict(model: NSGPRModel, tstar, *, noise_free=False, realization=0) -> PredictionResult:
    """Gaussian conditioning at new inputs under the fitted covariance."""
    tstar = np.asarray(tstar, dtype=float)
    if tstar.ndim == 1:
        tstar = tstar[:, None]
    T = model.train.inputs
    if not 0 <= realization < model.train.n_realizations:
        raise ValidationError(f"no realization {realization}")
    k_cross = model.cov(tstar, T)
    sig_star, _ = eval_surfaces(model.coeffs, tstar)
    shift, var = conditional_parts(
        model.chol, model.alpha[:, realization], k_cross, sig_star**2
    )
    if not noise_free:
        var = var + model.coeffs.noise_variance
    return PredictionResult(tstar, shift, np.sqrt(var), noise_free)

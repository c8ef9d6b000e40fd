"""Multi-output Gaussian process regression via convolved latent processes.

Each output ``x_j`` is the sum of a convolution of one latent white-noise
process shared by all outputs, a convolution of an output-specific latent
process, and observation noise.  With Gaussian smoothing kernels both
convolutions have closed forms: for diagonal precision matrices ``B_i`` and
amplitudes ``A_i``,

    C_ij(d) = A_i A_j (2 pi)^(Q/2) |B_i + B_j|^(-1/2)
              * exp(-1/2 d' B_i (B_i + B_j)^-1 B_j d)

equals ``integral k_i(d - u) k_j(u) du`` for ``k_i(u) = A_i exp(-u'B_i u/2)``.
Cross-covariances carry only the shared-process term, auto-covariances add
the independent term and noise.  The joint covariance over all outputs is
positive semidefinite by construction, and estimation maximizes the Gaussian
likelihood of the concatenated (output-major) responses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import FitError, ValidationError
from .gpr import Dataset, FitReport, MeanModel, PredictionResult, mean_eval, mean_fit
from .linalg import chol_with_jitter, conditional_parts, gaussian_loglik
from .optimize import minimize_bfgs
from .seeds import RESTART_OFFSET, SOD_OFFSET, rng_for

_TWO_PI = 2.0 * np.pi


class MultiDataset:
    """Observations of p outputs, each on its own grid, with M realizations."""

    def __init__(self, inputs, responses):
        if len(inputs) != len(responses):
            raise ValidationError("inputs and responses list lengths differ")
        if len(inputs) < 2:
            raise ValidationError("a multi-output dataset needs p >= 2 outputs")
        self.inputs = []
        self.responses = []
        m = None
        q = None
        for j, (T, Y) in enumerate(zip(inputs, responses)):
            T = np.asarray(T, dtype=float)
            if T.ndim == 1:
                T = T[:, None]
            Y = np.asarray(Y, dtype=float)
            if Y.ndim == 1:
                Y = Y[:, None]
            if T.shape[0] != Y.shape[0]:
                raise ValidationError(f"output {j}: input and response rows differ")
            if not (np.all(np.isfinite(T)) and np.all(np.isfinite(Y))):
                raise ValidationError(f"output {j}: non-finite values")
            if q is None:
                q = T.shape[1]
            elif T.shape[1] != q:
                raise ValidationError("outputs disagree on input dimension")
            if m is None:
                m = Y.shape[1]
            elif Y.shape[1] != m:
                raise ValidationError("outputs disagree on the number of realizations")
            self.inputs.append(T)
            self.responses.append(Y)

    @property
    def p(self) -> int:
        return len(self.inputs)

    @property
    def n_realizations(self) -> int:
        return self.responses[0].shape[1]

    @property
    def input_dim(self) -> int:
        return self.inputs[0].shape[1]

    def subset(self, m: int, rng) -> "MultiDataset":
        """Per-output sorted uniform subsample of the grids."""
        ins, resp = [], []
        for T, Y in zip(self.inputs, self.responses):
            n = T.shape[0]
            if not 2 <= m <= n:
                raise ValidationError(f"subset size must be in [2, {n}], got {m}")
            idx = np.sort(rng.choice(n, size=m, replace=False)) if m < n else np.arange(n)
            ins.append(T[idx])
            resp.append(Y[idx])
        return MultiDataset(ins, resp)


@dataclass
class MGPRHyper:
    """Natural-scale convolution parameters, one row per output.

    ``shared_amp``/``shared_prec`` describe the smoothing kernel applied to
    the shared latent process, ``indep_amp``/``indep_prec`` the kernel of the
    output-specific process, and ``noise_var`` the observation noise.
    Precisions are per input dimension (diagonal matrices).
    """

    shared_amp: np.ndarray
    shared_prec: np.ndarray
    indep_amp: np.ndarray
    indep_prec: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.shared_amp, dtype=float).size
        self.shared_amp = np.asarray(self.shared_amp, dtype=float).reshape(p)
        self.indep_amp = np.asarray(self.indep_amp, dtype=float).reshape(p)
        self.noise_var = np.asarray(self.noise_var, dtype=float).reshape(p)
        self.shared_prec = np.atleast_2d(np.asarray(self.shared_prec, dtype=float))
        self.indep_prec = np.atleast_2d(np.asarray(self.indep_prec, dtype=float))
        if self.shared_prec.shape[0] != p or self.indep_prec.shape[0] != p:
            raise ValidationError("precision rows must match the number of outputs")
        for name, arr in (("shared_amp", self.shared_amp), ("indep_amp", self.indep_amp),
                          ("noise_var", self.noise_var)):
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be finite and nonnegative")
        for name, arr in (("shared_prec", self.shared_prec), ("indep_prec", self.indep_prec)):
            if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be finite and positive")

    @property
    def p(self) -> int:
        return self.shared_amp.size

    @property
    def input_dim(self) -> int:
        return self.shared_prec.shape[1]

    def to_log_vector(self) -> np.ndarray:
        """Fixed optimizer layout, output-major: per output j the slots are
        [log shared_amp, log shared_prec (Q), log indep_amp,
        log indep_prec (Q), log noise_var]."""
        parts = []
        for j in range(self.p):
            parts.append([np.log(self.shared_amp[j])])
            parts.append(np.log(self.shared_prec[j]))
            parts.append([np.log(self.indep_amp[j])])
            parts.append(np.log(self.indep_prec[j]))
            parts.append([np.log(self.noise_var[j])])
        return np.concatenate([np.atleast_1d(x) for x in parts])

    @classmethod
    def from_log_vector(cls, vec, p, q) -> "MGPRHyper":
        vec = np.asarray(vec, dtype=float)
        if vec.size != p * (2 * q + 3):
            raise ValidationError("hyperparameter vector has the wrong length")
        sa, sp_, ia, ip_, nv = [], [], [], [], []
        pos = 0
        for _ in range(p):
            sa.append(np.exp(vec[pos])); pos += 1
            sp_.append(np.exp(vec[pos : pos + q])); pos += q
            ia.append(np.exp(vec[pos])); pos += 1
            ip_.append(np.exp(vec[pos : pos + q])); pos += q
            nv.append(np.exp(vec[pos])); pos += 1
        return cls(np.array(sa), np.array(sp_), np.array(ia), np.array(ip_), np.array(nv))


def _gauss_conv(amp_i, prec_i, amp_j, prec_j, T_i, T_j):
    """Closed-form convolution of two Gaussian smoothing kernels."""
    if amp_i == 0.0 or amp_j == 0.0:
        return np.zeros((T_i.shape[0], T_j.shape[0]))
    denom = prec_i + prec_j
    coef = (
        amp_i * amp_j
        * _TWO_PI ** (0.5 * prec_i.size)
        / np.sqrt(np.prod(denom))
    )
    weights = prec_i * prec_j / denom
    diff = T_i[:, None, :] - T_j[None, :, :]
    quad = np.tensordot(diff * diff, weights, axes=([2], [0]))
    return coef * np.exp(-0.5 * quad)


def cross_cov(hyper: MGPRHyper, i: int, j: int, T_i, T_j, add_noise=None):
    """Covariance block between outputs ``i`` and ``j``.

    Cross blocks (``i != j``) carry only the shared-process term.  Auto
    blocks add the independent-process term, plus noise on the exactly
    coincident diagonal; by default noise is added only when ``T_i`` and
    ``T_j`` are the same array.
    """
    p = hyper.p
    if not (0 <= i < p and 0 <= j < p):
        raise ValidationError(f"output indices must be in 0..{p - 1}")
    T_i = np.asarray(T_i, dtype=float)
    T_j = np.asarray(T_j, dtype=float)
    if T_i.ndim == 1:
        T_i = T_i[:, None]
    if T_j.ndim == 1:
        T_j = T_j[:, None]
    K = _gauss_conv(
        hyper.shared_amp[i], hyper.shared_prec[i],
        hyper.shared_amp[j], hyper.shared_prec[j], T_i, T_j,
    )
    if i == j:
        K += _gauss_conv(
            hyper.indep_amp[i], hyper.indep_prec[i],
            hyper.indep_amp[i], hyper.indep_prec[i], T_i, T_j,
        )
        if add_noise is None:
            add_noise = T_i is T_j or (T_i.shape == T_j.shape and np.array_equal(T_i, T_j))
        if add_noise:
            if T_i.shape != T_j.shape:
                raise ValidationError("noise requires matching point sets")
            coincide = np.all(T_i == T_j, axis=1)
            K[np.diag_indices_from(K)] += hyper.noise_var[i] * coincide
    return K


def _joint_cov_for(hyper, output_ids, inputs, add_noise):
    ins = []
    for T in inputs:
        T = np.asarray(T, dtype=float)
        ins.append(T[:, None] if T.ndim == 1 else T)
    sizes = [T.shape[0] for T in ins]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    K = np.empty((offsets[-1], offsets[-1]))
    for a, i in enumerate(output_ids):
        for b in range(a, len(output_ids)):
            j = output_ids[b]
            block = cross_cov(
                hyper, i, j, ins[a], ins[b],
                add_noise=add_noise if a == b else False,
            )
            K[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]] = block
            if b > a:
                K[offsets[b]:offsets[b + 1], offsets[a]:offsets[a + 1]] = block.T
    return K


def build_joint_cov(hyper: MGPRHyper, inputs, add_noise=True):
    """Joint covariance of all outputs stacked output-major."""
    p = len(inputs)
    if p != hyper.p:
        raise ValidationError(f"{p} input grids for {hyper.p} outputs")
    return _joint_cov_for(hyper, list(range(p)), inputs, add_noise)


@dataclass
class MGPRModel:
    """Fitted multi-output GP with per-output mean models."""

    hyper: MGPRHyper
    means: list
    train: MultiDataset
    report: FitReport | None = None
    chol: np.ndarray | None = field(default=None, repr=False)
    alpha: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_params(cls, hyper, train, means=None, report=None):
        means = means or [MeanModel("zero") for _ in range(train.p)]
        model = cls(hyper, means, train, report)
        Psi = build_joint_cov(hyper, train.inputs, add_noise=True)
        Yc = _centered_stack(train, means)
        L, _ = chol_with_jitter(Psi)
        model.chol = L
        model.alpha = cho_solve((L, True), Yc)
        return model


def _centered_stack(data: MultiDataset, means):
    cols = []
    for T, Y, mean in zip(data.inputs, data.responses, means):
        cols.append(Y - mean_eval(mean, T)[:, None])
    return np.vstack(cols)


def log_marginal_likelihood(hyper, data: MultiDataset, means=None):
    """Joint Gaussian log-likelihood of the concatenated responses."""
    means = means or [MeanModel("zero") for _ in range(data.p)]
    Psi = build_joint_cov(hyper, data.inputs, add_noise=True)
    ll, _, _ = gaussian_loglik(Psi, _centered_stack(data, means))
    return ll


def fit(data: MultiDataset, *, m=None, mean_model="zero", mu=None, restarts=5,
        seed=0, max_iter=500) -> MGPRModel:
    """Maximum-likelihood fit of the convolution hyperparameters.

    ``m`` applies a per-output subset-of-data subsample.  The mean model is
    fitted to each output separately before the covariance parameters are
    estimated; gradients are finite differences on the log scale.
    """
    if m is not None:
        data = data.subset(int(m), rng_for(seed, SOD_OFFSET))
    p, q = data.p, data.input_dim
    means = []
    for T, Y in zip(data.inputs, data.responses):
        means.append(mean_fit(Dataset(T, Y), mean_model, mu))
    Yc = _centered_stack(data, means)

    def nll(vec):
        try:
            hyper = MGPRHyper.from_log_vector(vec, p, q)
        except ValidationError:  # exp overflow while the optimizer probes
            return np.inf
        Psi = build_joint_cov(hyper, data.inputs, add_noise=True)
        ll, _, _ = gaussian_loglik(Psi, Yc)
        return -ll

    noise_inits = [
        float(np.log(0.1 * max(np.var(Y), 1e-8))) for Y in data.responses
    ]
    rng = rng_for(seed, RESTART_OFFSET)
    attempts = []
    for _ in range(max(1, int(restarts))):
        x0 = rng.uniform(-3.0, 2.0, size=p * (2 * q + 3))
        for j in range(p):
            x0[j * (2 * q + 3) + 2 * q + 2] = noise_inits[j]
        attempts.append(minimize_bfgs(nll, x0, max_iter=max_iter))
    usable = [r for r in attempts if r.converged and np.isfinite(r.fun)]
    diagnostics = [
        {"converged": r.converged, "loglik": -r.fun if np.isfinite(r.fun) else None,
         "iterations": r.iterations, "message": r.message}
        for r in attempts
    ]
    if not usable:
        raise FitError(f"no optimizer restart converged: {diagnostics}")
    best = min(usable, key=lambda r: r.fun)
    hyper = MGPRHyper.from_log_vector(best.x, p, q)
    report = FitReport(True, -best.fun, best.iterations, best.grad_norm,
                       best.message, diagnostics)
    return MGPRModel.from_params(hyper, data, means, report)


def _prior_variance(hyper, j, n):
    v = (
        _gauss_conv(hyper.shared_amp[j], hyper.shared_prec[j],
                    hyper.shared_amp[j], hyper.shared_prec[j],
                    np.zeros((1, hyper.input_dim)), np.zeros((1, hyper.input_dim)))[0, 0]
        + _gauss_conv(hyper.indep_amp[j], hyper.indep_prec[j],
                      hyper.indep_amp[j], hyper.indep_prec[j],
                      np.zeros((1, hyper.input_dim)), np.zeros((1, hyper.input_dim)))[0, 0]
    )
    return np.full(n, v)


def predict(model: MGPRModel, obs_inputs, obs_responses, tstar, *,
            noise_free=False):
    """Conditional prediction given partial observations of any outputs.

    Parameters
    ----------
    obs_inputs, obs_responses : lists, one entry per output
        Observed points of the realization being predicted; entries may be
        empty.
    tstar : list, one grid per output
        Prediction points; entries may be empty.

    Returns
    -------
    list of PredictionResult, one per output.
    """
    p = model.hyper.p
    if len(obs_inputs) != p or len(obs_responses) != p or len(tstar) != p:
        raise ValidationError(f"need one entry per output (p={p})")
    obs_T, obs_y = [], []
    for j in range(p):
        T = np.asarray(obs_inputs[j], dtype=float)
        if T.ndim == 1:
            T = T[:, None]
        y = np.asarray(obs_responses[j], dtype=float).ravel()
        if T.shape[0] != y.size:
            raise ValidationError(f"output {j}: observation sizes differ")
        obs_T.append(T)
        obs_y.append(y)
    stars = []
    for j in range(p):
        S = np.asarray(tstar[j], dtype=float)
        if S.ndim == 1:
            S = S[:, None]
        stars.append(S)

    have_obs = [j for j in range(p) if obs_T[j].shape[0] > 0]
    if have_obs:
        K_obs = _joint_cov_for(
            model.hyper, have_obs, [obs_T[j] for j in have_obs], add_noise=True
        )
        # noise enters only on the per-output diagonal blocks built above
        yc = np.concatenate([
            obs_y[j] - mean_eval(model.means[j], obs_T[j]) for j in have_obs
        ])
        L, _ = chol_with_jitter(K_obs)
        alpha = cho_solve((L, True), yc)
    results = []
    for j in range(p):
        n_star = stars[j].shape[0]
        prior = _prior_variance(model.hyper, j, n_star)
        if n_star == 0:
            results.append(PredictionResult(stars[j], np.zeros(0), np.zeros(0), noise_free))
            continue
        if have_obs:
            K_cross = np.hstack([
                cross_cov(model.hyper, j, i, stars[j], obs_T[i], add_noise=False)
                for i in have_obs
            ])
            shift, var = conditional_parts(L, alpha, K_cross, prior)
        else:
            shift, var = np.zeros(n_star), prior
        mean = mean_eval(model.means[j], stars[j]) + shift
        if not noise_free:
            var = var + model.hyper.noise_var[j]
        results.append(PredictionResult(stars[j], mean, np.sqrt(var), noise_free))
    return results

"""Stationary covariance kernels with analytic hyperparameter derivatives.

Four families are available: ``linear``, ``pow.ex`` (powered exponential),
``matern`` and ``rat.qu`` (rational quadratic).  A kernel specification may
combine several families; the composite covariance is the sum of the term
covariances, each applied to all input dimensions.  Every hyperparameter is
stored on the log scale, so the natural-scale parameters ``exp(theta)`` are
positive, and an extra ``noise`` slot carries the log noise variance that is
added to the diagonal of a covariance matrix evaluated on one point set.

All derivative routines return ``d Psi / d theta_j`` with respect to the
log-scale parameters, matching central finite differences of
:func:`cov_matrix`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bessel import matern_correlation
from .errors import AnalyticGradientUnavailable, ValidationError

KERNEL_FAMILIES = ("linear", "pow.ex", "matern", "rat.qu")

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel composition.

    Parameters
    ----------
    terms : tuple of str
        Kernel families to sum; each family may appear at most once.
    input_dim : int
        Number of input dimensions Q.
    gamma : float
        Exponent of the powered-exponential family, in (0, 2].
    nu : float
        Matern smoothness, positive.  Analytic gradients exist only for
        nu in {1.5, 2.5}; other values fall back to finite differences.
    """

    terms: tuple
    input_dim: int
    gamma: float = 2.0
    nu: float = 1.5

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValidationError("kernel spec needs at least one term")
        for t in terms:
            if t not in KERNEL_FAMILIES:
                raise ValidationError(f"unknown kernel family {t!r}")
        if len(set(terms)) != len(terms):
            raise ValidationError("each kernel family may appear at most once")
        if self.input_dim < 1:
            raise ValidationError("input_dim must be >= 1")
        if not 0.0 < self.gamma <= 2.0:
            raise ValidationError(f"gamma must be in (0, 2], got {self.gamma!r}")
        if self.nu <= 0.0:
            raise ValidationError(f"nu must be positive, got {self.nu!r}")

    def hyper_names(self) -> tuple:
        """Ordered log-scale parameter names, noise slot last."""
        names = []
        q = self.input_dim
        for term in self.terms:
            if term == "linear":
                names.append("linear.a0")
                names.extend(f"linear.a{i}" for i in range(1, q + 1))
            elif term == "pow.ex":
                names.append("pow.ex.v")
                names.extend(f"pow.ex.w{i}" for i in range(1, q + 1))
            elif term == "matern":
                names.append("matern.v")
                names.extend(f"matern.w{i}" for i in range(1, q + 1))
            elif term == "rat.qu":
                names.append("rat.qu.v")
                names.extend(f"rat.qu.w{i}" for i in range(1, q + 1))
                names.append("rat.qu.alpha")
        names.append("noise")
        return tuple(names)

    @property
    def n_hyper(self) -> int:
        return len(self.hyper_names())


@dataclass(frozen=True)
class HyperParams:
    """Log-scale hyperparameter vector laid out per :meth:`KernelSpec.hyper_names`.

    All entries must be finite except the ``noise`` slot, where ``-inf``
    encodes an exactly noise-free model.
    """

    values: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1:
            raise ValidationError("hyperparameter values must be a vector")
        if self.names and len(self.names) != vals.size:
            raise ValidationError(
                f"{len(self.names)} names for {vals.size} values"
            )
        for name, v in zip(self.names, vals):
            if not np.isfinite(v) and not (name == "noise" and v == -np.inf):
                raise ValidationError(f"non-finite hyperparameter {name}={v!r}")

    @classmethod
    def for_spec(cls, spec: KernelSpec, values) -> "HyperParams":
        values = np.asarray(values, dtype=float)
        names = spec.hyper_names()
        if values.size != len(names):
            raise ValidationError(
                f"kernel spec expects {len(names)} hyperparameters, got {values.size}"
            )
        return cls(values, names)

    @classmethod
    def from_dict(cls, spec: KernelSpec, mapping) -> "HyperParams":
        names = spec.hyper_names()
        missing = [n for n in names if n not in mapping]
        extra = [k for k in mapping if k not in names]
        if missing or extra:
            raise ValidationError(
                f"hyperparameter layout mismatch (missing {missing}, unknown {extra})"
            )
        return cls(np.array([mapping[n] for n in names], dtype=float), names)

    @classmethod
    def from_natural(cls, spec: KernelSpec, mapping) -> "HyperParams":
        """Build from natural-scale (positive) values; noise 0 maps to -inf."""
        with np.errstate(divide="ignore"):
            log_map = {k: float(np.log(v)) for k, v in mapping.items()}
        return cls.from_dict(spec, log_map)

    def get(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def replace(self, name: str, value: float) -> "HyperParams":
        vals = self.values.copy()
        vals[self.names.index(name)] = value
        return HyperParams(vals, self.names)

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def natural_dict(self) -> dict:
        return {n: float(np.exp(v)) for n, v in zip(self.names, self.values)}

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.get("noise")))


def _as_inputs(T, q=None, name="inputs"):
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if T.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D array, got ndim={T.ndim}")
    if q is not None and T.shape[1] != q:
        raise ValidationError(f"{name} has {T.shape[1]} columns, expected {q}")
    if not np.all(np.isfinite(T)):
        raise ValidationError(f"{name} contain non-finite values")
    return T


def weighted_distance(w, T1, T2, gamma):
    """Weighted coordinate-wise distance ``sum_q w_q |t_q - t'_q|^gamma``.

    Parameters
    ----------
    w : array_like
        Nonnegative natural-scale weights, one per input dimension.
    T1, T2 : array_like
        Input matrices with matching column counts.
    gamma : float
        Exponent in (0, 2].
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("distance weights must be finite and nonnegative")
    if not 0.0 < gamma <= 2.0:
        raise ValidationError(f"gamma must be in (0, 2], got {gamma!r}")
    T1 = _as_inputs(T1, w.size, "T1")
    T2 = _as_inputs(T2, w.size, "T2")
    diff = T1[:, None, :] - T2[None, :, :]
    if gamma == 2.0:
        pow_diff = diff * diff
    else:
        pow_diff = np.abs(diff) ** gamma
    return np.tensordot(pow_diff, w, axes=([2], [0]))


def _power_distance(w, T1, T2, gamma):
    # internal variant without the public-contract weight validation: an
    # overflowed weight reads as infinite distance (zero correlation)
    diff = T1[:, None, :] - T2[None, :, :]
    with np.errstate(over="ignore", invalid="ignore"):
        pow_diff = diff * diff if gamma == 2.0 else np.abs(diff) ** gamma
        return np.tensordot(pow_diff, w, axes=([2], [0]))


def _slices(spec):
    out = {}
    pos = 0
    q = spec.input_dim
    for term in spec.terms:
        size = {"linear": 1 + q, "pow.ex": 1 + q, "matern": 1 + q, "rat.qu": 2 + q}[term]
        out[term] = slice(pos, pos + size)
        pos += size
    out["noise"] = slice(pos, pos + 1)
    return out


def _kernel_term(term, spec, theta, T1, T2):
    """Covariance matrix of a single kernel family (no noise)."""
    q = spec.input_dim
    if term == "linear":
        a0 = np.exp(theta[0])
        a = np.exp(theta[1:])
        return a0 + np.einsum("q,iq,jq->ij", a, T1, T2)
    with np.errstate(over="ignore"):
        v = np.exp(theta[0])
        w = np.exp(theta[1 : 1 + q])
    if term == "pow.ex":
        return v * np.exp(-_power_distance(w, T1, T2, spec.gamma))
    d2 = _power_distance(w, T1, T2, 2.0)
    if term == "matern":
        return v * matern_correlation(d2, spec.nu)
    if term == "rat.qu":
        with np.errstate(over="ignore"):
            alpha = np.exp(theta[1 + q])
            return v * (1.0 + d2) ** (-alpha)
    raise AssertionError(term)


def cov_matrix(spec: KernelSpec, hp: HyperParams, T1, T2, add_noise=False):
    """Covariance matrix of the composite kernel between two input sets.

    With ``add_noise`` the natural-scale noise variance is added on the
    diagonal wherever the paired rows of ``T1`` and ``T2`` coincide exactly,
    which requires both sets to describe the same points.
    """
    if len(hp.names) != len(spec.hyper_names()):
        raise ValidationError("hyperparameter layout does not match kernel spec")
    T1 = _as_inputs(T1, spec.input_dim, "T1")
    T2 = _as_inputs(T2, spec.input_dim, "T2")
    slices = _slices(spec)
    K = np.zeros((T1.shape[0], T2.shape[0]))
    for term in spec.terms:
        K += _kernel_term(term, spec, hp.values[slices[term]], T1, T2)
    if add_noise:
        if T1.shape != T2.shape:
            raise ValidationError("noise requires T1 and T2 to be the same point set")
        coincide = np.all(T1 == T2, axis=1)
        K[np.diag_indices_from(K)] += hp.noise_variance * coincide
    return K


def prior_variance_diag(spec: KernelSpec, hp: HyperParams, T):
    """Diagonal values ``k(t, t)`` of the composite kernel, noise excluded."""
    T = _as_inputs(T, spec.input_dim, "T")
    slices = _slices(spec)
    out = np.zeros(T.shape[0])
    for term in spec.terms:
        theta = hp.values[slices[term]]
        if term == "linear":
            out += np.exp(theta[0]) + (T * T) @ np.exp(theta[1:])
        else:
            out += np.exp(theta[0])
    return out


def has_analytic_gradient(spec: KernelSpec) -> bool:
    """Closed-form derivatives exist unless a Matern term has nu outside {1.5, 2.5}."""
    return "matern" not in spec.terms or spec.nu in (1.5, 2.5)


def _check_analytic(spec):
    if not has_analytic_gradient(spec):
        raise AnalyticGradientUnavailable(
            f"analytic matern derivatives require nu in {{1.5, 2.5}}, got {spec.nu}; "
            "use a finite-difference fallback"
        )


def _term_derivs(term, spec, theta, T, second):
    """First (or pure second) derivative matrices of one term, per parameter."""
    q = spec.input_dim
    n = T.shape[0]
    out = []
    if term == "linear":
        out.append(np.full((n, n), np.exp(theta[0])))
        for i in range(q):
            out.append(np.exp(theta[1 + i]) * np.outer(T[:, i], T[:, i]))
        return out

    v = np.exp(theta[0])
    w = np.exp(theta[1 : 1 + q])
    diff2 = (T[:, None, :] - T[None, :, :]) ** 2

    if term == "pow.ex":
        if spec.gamma == 2.0:
            dg = diff2
        else:
            dg = np.abs(T[:, None, :] - T[None, :, :]) ** spec.gamma
        K = v * np.exp(-np.tensordot(dg, w, axes=([2], [0])))
        out.append(K)
        for i in range(q):
            wd = w[i] * dg[:, :, i]
            out.append(K * (wd * wd - wd) if second else -K * wd)
        return out

    if term == "matern":
        d2 = np.tensordot(diff2, w, axes=([2], [0]))
        s = np.sqrt(d2)
        if spec.nu == 1.5:
            expo = np.exp(-_SQRT3 * s)
            K = v * (1.0 + _SQRT3 * s) * expo
            out.append(K)
            safe_s = np.where(s > 0, s, 1.0)
            for i in range(q):
                wd = w[i] * diff2[:, :, i]
                base = -1.5 * v * wd * expo
                if second:
                    out.append(base * (1.0 - 0.5 * _SQRT3 * wd / safe_s))
                else:
                    out.append(base)
        else:  # nu == 2.5
            expo = np.exp(-_SQRT5 * s)
            K = v * (1.0 + _SQRT5 * s + (5.0 / 3.0) * d2) * expo
            out.append(K)
            for i in range(q):
                wd = w[i] * diff2[:, :, i]
                base = -(5.0 / 6.0) * v * wd * expo
                poly = 1.0 + _SQRT5 * s
                out.append(base * (poly - 2.5 * wd) if second else base * poly)
        return out

    if term == "rat.qu":
        alpha = np.exp(theta[1 + q])
        B = 1.0 + np.tensordot(diff2, w, axes=([2], [0]))
        K = v * B ** (-alpha)
        out.append(K)
        for i in range(q):
            wd = w[i] * diff2[:, :, i]
            if second:
                out.append(
                    alpha * (alpha + 1.0) * v * B ** (-alpha - 2.0) * wd * wd
                    - alpha * v * B ** (-alpha - 1.0) * wd
                )
            else:
                out.append(-alpha * v * B ** (-alpha - 1.0) * wd)
        logB = np.log(B)
        dalpha = -alpha * K * logB
        out.append(-alpha * (dalpha + K) * logB if second else dalpha)
        return out

    raise AssertionError(term)


def cov_grad(spec: KernelSpec, hp: HyperParams, T):
    """Derivatives ``d Psi / d theta_j`` on one input set, one matrix per slot.

    The returned list follows the :meth:`KernelSpec.hyper_names` layout,
    including the diagonal noise derivative.  Raises
    :class:`AnalyticGradientUnavailable` for Matern smoothness outside
    {1.5, 2.5}.
    """
    _check_analytic(spec)
    T = _as_inputs(T, spec.input_dim, "T")
    slices = _slices(spec)
    grads = []
    for term in spec.terms:
        grads.extend(_term_derivs(term, spec, hp.values[slices[term]], T, second=False))
    grads.append(hp.noise_variance * np.eye(T.shape[0]))
    return grads


def cov_second_deriv(spec: KernelSpec, hp: HyperParams, T):
    """Pure second derivatives ``d^2 Psi / d theta_j^2``, one matrix per slot."""
    _check_analytic(spec)
    T = _as_inputs(T, spec.input_dim, "T")
    slices = _slices(spec)
    out = []
    for term in spec.terms:
        out.extend(_term_derivs(term, spec, hp.values[slices[term]], T, second=True))
    out.append(hp.noise_variance * np.eye(T.shape[0]))
    return out

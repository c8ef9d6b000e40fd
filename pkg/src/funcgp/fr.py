"""Basis systems, penalized smoothing and the functional-regression mean.

B-spline bases are evaluated with the Cox-de Boor recursion on clamped,
equally spaced knots; Fourier bases are ``(1, sin, cos, ...)`` with a given
period.  Curves are represented by basis coefficients obtained from a
penalized least-squares fit, and the functional-regression model estimates a
coefficient curve per scalar covariate plus, optionally, coefficients for
functional covariates (a scalar each, or a coefficient curve in the
concurrent model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


# ---------------------------------------------------------------------------
# basis evaluation


def _bspline_design(t, knots, order, deriv=0):
    """Cox-de Boor design matrix (and derivatives) on an explicit knot vector."""
    t = np.asarray(t, dtype=float)
    if deriv > 0:
        return (order - 1) * _bspline_deriv_chain(t, knots, order, deriv)
    B = np.zeros((t.size, len(knots) - 1))
    last = knots[-1]
    for i in range(len(knots) - 1):
        if knots[i + 1] > knots[i]:
            inside = (t >= knots[i]) & (t < knots[i + 1])
            if knots[i + 1] == last:
                inside |= t == last
            B[inside, i] = 1.0
    for k in range(2, order + 1):
        nb_k = len(knots) - k
        newB = np.zeros((t.size, nb_k))
        for i in range(nb_k):
            d1 = knots[i + k - 1] - knots[i]
            d2 = knots[i + k] - knots[i + 1]
            term = 0.0
            if d1 > 0:
                term = (t - knots[i]) / d1 * B[:, i]
            if d2 > 0:
                term = term + (knots[i + k] - t) / d2 * B[:, i + 1]
            newB[:, i] = term
        B = newB
    return B


def _bspline_deriv_chain(t, knots, order, deriv):
    # d-th derivative by differencing coefficients of lower-order splines
    lower = _bspline_design(t, knots, order - 1, deriv - 1)
    nb = len(knots) - order
    out = np.zeros((t.size, nb))
    k = order - 1
    for i in range(nb):
        d1 = knots[i + k] - knots[i]
        d2 = knots[i + k + 1] - knots[i + 1]
        if d1 > 0:
            out[:, i] += lower[:, i] / d1
        if d2 > 0:
            out[:, i] -= lower[:, i + 1] / d2
    return out


def clamped_knots(nbasis, order, lo, hi):
    """Equally spaced clamped knot vector for ``nbasis`` splines of ``order``."""
    if nbasis < order:
        raise ValidationError(f"nbasis {nbasis} must be >= norder {order}")
    interior = np.linspace(lo, hi, nbasis - order + 2)[1:-1]
    return np.concatenate([np.full(order, lo), interior, np.full(order, hi)])


def periodic_bspline_design(t, nbasis, order, domain):
    """Periodic uniform B-spline design matrix on ``domain``.

    Basis functions wrap around the domain, so every function and its
    derivatives match at the two endpoints.
    """
    lo, hi = domain
    if nbasis < order:
        raise ValidationError(f"nbasis {nbasis} must be >= norder {order}")
    t = np.asarray(t, dtype=float)
    h = (hi - lo) / nbasis
    # wrap evaluation points into [lo, hi)
    tw = lo + np.mod(t - lo, hi - lo)
    tw[np.asarray(t) == hi] = hi
    knots = lo + h * np.arange(-(order - 1), nbasis + order)
    B = _bspline_design(tw, knots, order)
    out = np.zeros((t.size, nbasis))
    for i in range(B.shape[1]):
        out[:, i % nbasis] += B[:, i]
    return out


@dataclass(frozen=True)
class BasisSystem:
    """A B-spline or Fourier basis on a fixed domain.

    ``nbasis`` must be odd for Fourier bases (one constant plus sin/cos
    pairs) and at least ``norder`` for B-splines.
    """

    kind: str
    nbasis: int
    domain: tuple
    norder: int = 4
    period: float | None = None

    def __post_init__(self):
        if self.kind not in ("bspline", "fourier"):
            raise ValidationError(f"unknown basis kind {self.kind!r}")
        lo, hi = self.domain
        if not hi > lo:
            raise ValidationError("basis domain must have positive length")
        if self.kind == "bspline":
            if self.nbasis < self.norder:
                raise ValidationError(
                    f"nbasis {self.nbasis} must be >= norder {self.norder}"
                )
        else:
            if self.nbasis % 2 == 0:
                raise ValidationError("fourier basis needs an odd nbasis")
        object.__setattr__(self, "domain", (float(lo), float(hi)))

    @property
    def knots(self):
        lo, hi = self.domain
        return clamped_knots(self.nbasis, self.norder, lo, hi)


def basis_eval(basis: BasisSystem, t, deriv=0):
    """Design matrix of basis values (or a derivative) at the points ``t``."""
    t = np.asarray(t, dtype=float).ravel()
    if not np.all(np.isfinite(t)):
        raise ValidationError("basis evaluation points must be finite")
    lo, hi = basis.domain
    if basis.kind == "bspline":
        if np.any(t < lo) or np.any(t > hi):
            raise ValidationError(
                f"evaluation points outside the basis domain [{lo}, {hi}]"
            )
        if deriv >= basis.norder:
            return np.zeros((t.size, basis.nbasis))
        return _bspline_design(t, basis.knots, basis.norder, deriv)
    period = basis.period if basis.period is not None else hi - lo
    omega = 2.0 * math.pi / period
    out = np.empty((t.size, basis.nbasis))
    out[:, 0] = 1.0 if deriv == 0 else 0.0
    phase = deriv * math.pi / 2.0
    for pair in range(1, (basis.nbasis - 1) // 2 + 1):
        f = pair * omega
        scale = f**deriv
        out[:, 2 * pair - 1] = scale * np.sin(f * t + phase)
        out[:, 2 * pair] = scale * np.cos(f * t + phase)
    return out


# ---------------------------------------------------------------------------
# penalties and smoothing


def penalty_matrix(basis: BasisSystem, pen):
    """Weighted sum of derivative Gram matrices ``sum_d pen_d G_d``.

    ``G_d[h, k] = integral of phi_h^(d) phi_k^(d)`` over the domain, computed
    with Gauss-Legendre quadrature that is exact for the B-spline polynomial
    order.  ``pen`` holds weights for derivative orders 0, 1 and 2.
    """
    pen = tuple(float(p) for p in pen)
    if len(pen) > 3:
        raise ValidationError("penalty weights support derivative orders 0..2")
    if any(p < 0 for p in pen):
        raise ValidationError("penalty weights must be nonnegative")
    lo, hi = basis.domain
    if basis.kind == "bspline":
        # distinct knot spans, `norder` nodes each: exact for degree 2*norder-1
        spans = np.unique(basis.knots)
        nodes, weights = np.polynomial.legendre.leggauss(basis.norder)
    else:
        spans = np.linspace(lo, hi, 8 * basis.nbasis + 1)
        nodes, weights = np.polynomial.legendre.leggauss(10)
    G = np.zeros((basis.nbasis, basis.nbasis))
    for a, b in zip(spans[:-1], spans[1:]):
        if b <= a:
            continue
        half = 0.5 * (b - a)
        x = 0.5 * (a + b) + half * nodes
        for d, w_d in enumerate(pen):
            if w_d == 0.0:
                continue
            Phi = basis_eval(basis, x, deriv=d)
            G += w_d * half * (Phi.T * weights) @ Phi
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class SmoothSpec:
    """Smoothing configuration for representing curves in a basis.

    ``nbasis=None`` applies the default rule ``min(ceil(n/5), 23)`` clamped
    below by ``norder``.  The default penalty weights ``(0, 0, 1)`` penalize
    only the second derivative, with smoothing parameter ``lam``.
    """

    nbasis: int | None = None
    norder: int = 6
    bspline: bool = True
    pen: tuple = (0.0, 0.0, 1.0)
    lam: float = 1e-4
    period: float | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError("smoothing parameter must be >= 0")
        if any(p < 0 for p in self.pen):
            raise ValidationError("penalty weights must be nonnegative")


def default_nbasis(n_points: int, norder: int = 6) -> int:
    return max(norder, min(math.ceil(n_points / 5), 23))


def make_basis(spec: SmoothSpec, domain, n_points: int) -> BasisSystem:
    """Concrete basis for a smoothing spec over an observed domain.

    An even Fourier size is rounded up to the next odd value so the
    constant column keeps its sin/cos pairs intact.
    """
    nb = spec.nbasis if spec.nbasis is not None else default_nbasis(n_points, spec.norder)
    if spec.bspline:
        return BasisSystem("bspline", nb, tuple(domain), norder=spec.norder)
    if nb % 2 == 0:
        nb += 1
    return BasisSystem("fourier", nb, tuple(domain), period=spec.period)


def _penalized_solve(Phi, y, lam, P):
    if lam == 0.0:
        coef, _, rank, _ = np.linalg.lstsq(Phi, y, rcond=None)
        if rank < Phi.shape[1]:
            raise ValidationError(
                "normal equations are singular; add a penalty (lambda > 0) "
                "or reduce nbasis"
            )
        return coef
    A = Phi.T @ Phi + lam * P
    return np.linalg.solve(A, Phi.T @ y)


def smooth_curve(y, t_grid, spec: SmoothSpec = SmoothSpec(), basis: BasisSystem | None = None):
    """Penalized basis coefficients of one observed curve.

    Minimizes ``||y - Phi c||^2 + lam * c' P c``; with ``lam = 0`` and a
    full-rank design this is plain least squares.
    """
    y = np.asarray(y, dtype=float).ravel()
    t = np.asarray(t_grid, dtype=float).ravel()
    if y.size != t.size:
        raise ValidationError(f"{y.size} values on {t.size} grid points")
    if basis is None:
        basis = make_basis(spec, (t.min(), t.max()), t.size)
    Phi = basis_eval(basis, t)
    P = penalty_matrix(basis, spec.pen) if spec.lam > 0 else None
    return _penalized_solve(Phi, y, spec.lam, P)


# ---------------------------------------------------------------------------
# functional regression


@dataclass
class FRModel:
    """Fitted functional-regression mean.

    ``A`` holds per-curve coefficients (M x H), ``B`` the coefficient matrix
    of the scalar covariates (H x p) so the coefficient curves are
    ``B' Phi(t)``.  Functional covariates contribute either one scalar each
    (``alpha``) or a coefficient curve each (``alpha_coef`` over
    ``fcov_basis``) in the concurrent model.
    """

    basis: BasisSystem
    A: np.ndarray
    B: np.ndarray | None = None
    alpha: np.ndarray | None = None
    alpha_coef: np.ndarray | None = None
    fcov_basis: BasisSystem | None = None
    concurrent: bool = True

    @property
    def n_scalar(self) -> int:
        return 0 if self.B is None else self.B.shape[1]

    @property
    def n_functional(self) -> int:
        if self.alpha is not None:
            return self.alpha.size
        if self.alpha_coef is not None:
            return self.alpha_coef.shape[1]
        return 0

    def beta_curves(self, t):
        """Scalar-covariate coefficient curves evaluated at ``t`` (n x p)."""
        if self.B is None:
            raise ValidationError("model has no scalar covariates")
        return basis_eval(self.basis, t) @ self.B


def _as_curve_list(data, name):
    if isinstance(data, np.ndarray) and data.ndim == 2:
        return [np.asarray(row, dtype=float) for row in data]
    out = [np.asarray(c, dtype=float).ravel() for c in data]
    if not out:
        raise ValidationError(f"{name} is empty")
    return out


def fr_fit(responses, t_grids, u=None, xfun=None, *, concurrent=True,
           fy_spec: SmoothSpec | None = None,
           fx_coef_spec: SmoothSpec | None = None) -> FRModel:
    """Fit the functional-regression mean model.

    Parameters
    ----------
    responses : (M, n) array or list of arrays
        Observed curves, possibly on per-curve grids.
    t_grids : array or list of arrays
        Shared grid, or one grid per curve.
    u : (M, p) array, optional
        Scalar covariates; must have full column rank.
    xfun : list, optional
        Functional covariates, each an (M, n) array or list of curves
        aligned with ``t_grids``.
    concurrent : bool
        Whether functional-covariate coefficients vary with t.
    """
    ys = _as_curve_list(responses, "responses")
    M = len(ys)
    grids = (
        [np.asarray(t_grids, dtype=float).ravel()] * M
        if np.ndim(t_grids) == 1
        else [np.asarray(g, dtype=float).ravel() for g in t_grids]
    )
    if len(grids) != M:
        raise ValidationError(f"{len(grids)} grids for {M} curves")
    for y, g in zip(ys, grids):
        if y.size != g.size:
            raise ValidationError("curve and grid lengths disagree")
    fy_spec = fy_spec or SmoothSpec()
    lo = min(g.min() for g in grids)
    hi = max(g.max() for g in grids)
    basis = make_basis(fy_spec, (lo, hi), max(g.size for g in grids))
    P = penalty_matrix(basis, fy_spec.pen) if fy_spec.lam > 0 else None

    A = np.vstack([
        _penalized_solve(basis_eval(basis, g), y, fy_spec.lam, P)
        for y, g in zip(ys, grids)
    ])

    B = None
    if u is not None:
        U = np.asarray(u, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if U.shape[0] != M:
            raise ValidationError(f"u has {U.shape[0]} rows for {M} curves")
        if M < U.shape[1]:
            raise ValidationError("fewer curves than scalar covariates")
        Bt, _, rank, _ = np.linalg.lstsq(U, A, rcond=None)
        if rank < U.shape[1]:
            raise ValidationError("scalar covariate matrix is rank deficient")
        B = Bt.T

    model = FRModel(basis=basis, A=A, B=B, concurrent=concurrent)
    if xfun is None or len(xfun) == 0:
        return model

    xs = [_as_curve_list(x, f"functional covariate {c}") for c, x in enumerate(xfun)]
    n_cov = len(xs)
    resid = []
    for m, (y, g) in enumerate(zip(ys, grids)):
        r = y.copy()
        if B is not None:
            r -= basis_eval(basis, g) @ (B @ np.asarray(u, dtype=float).reshape(M, -1)[m])
        resid.append(r)
    r_all = np.concatenate(resid)
    if not concurrent:
        design = np.column_stack([
            np.concatenate([xs[c][m] for m in range(M)]) for c in range(n_cov)
        ])
        alpha, _, rank, _ = np.linalg.lstsq(design, r_all, rcond=None)
        if rank < n_cov:
            raise ValidationError("functional covariates are collinear")
        model.alpha = alpha
        return model
    fx_spec = fx_coef_spec or SmoothSpec()
    fbasis = make_basis(fx_spec, (lo, hi), max(g.size for g in grids))
    Pf = penalty_matrix(fbasis, fx_spec.pen)
    H2 = fbasis.nbasis
    cols = []
    for c in range(n_cov):
        block = np.vstack([
            basis_eval(fbasis, g) * xs[c][m][:, None] for m, g in enumerate(grids)
        ])
        cols.append(block)
    design = np.hstack(cols)
    P_big = np.kron(np.eye(n_cov), Pf)
    coef = _penalized_solve(design, r_all, fx_spec.lam, P_big)
    model.alpha_coef = coef.reshape(n_cov, H2).T
    model.fcov_basis = fbasis
    return model


def fr_mean_eval(model: FRModel, u_star=None, x_star=None, t_grid=None):
    """Mean curve for covariates ``u_star`` (p,) and ``x_star`` at ``t_grid``.

    ``x_star`` is a list with one value curve per functional covariate,
    aligned with ``t_grid``.
    """
    t = np.asarray(t_grid, dtype=float).ravel()
    out = np.zeros(t.size)
    if model.B is not None:
        if u_star is None:
            raise ValidationError("model was fitted with scalar covariates")
        u_star = np.asarray(u_star, dtype=float).ravel()
        if u_star.size != model.n_scalar:
            raise ValidationError(
                f"expected {model.n_scalar} scalar covariates, got {u_star.size}"
            )
        out += basis_eval(model.basis, t) @ (model.B @ u_star)
    if model.n_functional:
        if x_star is None:
            raise ValidationError("model was fitted with functional covariates")
        xs = [np.asarray(x, dtype=float).ravel() for x in x_star]
        if len(xs) != model.n_functional:
            raise ValidationError(
                f"expected {model.n_functional} functional covariates, got {len(xs)}"
            )
        for c, x in enumerate(xs):
            if x.size != t.size:
                raise ValidationError("functional covariate curve length mismatch")
            if model.concurrent:
                out += (basis_eval(model.fcov_basis, t) @ model.alpha_coef[:, c]) * x
            else:
                out += model.alpha[c] * x
    return out

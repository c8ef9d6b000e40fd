"""Dense linear-algebra helpers shared by the model modules."""

import numpy as np
from scipy.linalg import cho_solve

from .errors import FactorizationError

JITTER_REL = 1e-10
JITTER_ESCALATIONS = 3
LOG_2PI = float(np.log(2.0 * np.pi))


def chol_with_jitter(A):
    """Lower Cholesky factor, retrying with escalating diagonal jitter.

    On failure adds ``1e-10 * trace/n`` to the diagonal and escalates by
    a factor of 10 up to three times before raising
    :class:`FactorizationError`.  Returns ``(L, jitter_used)``.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise FactorizationError("matrix contains non-finite entries")
    n = A.shape[0]
    scale = float(np.trace(A)) / n
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    jitter = 0.0
    for attempt in range(JITTER_ESCALATIONS + 2):
        try:
            L = np.linalg.cholesky(A if jitter == 0.0 else A + jitter * np.eye(n))
            return L, jitter
        except np.linalg.LinAlgError:
            if attempt > JITTER_ESCALATIONS:
                break
            jitter = JITTER_REL * scale if jitter == 0.0 else jitter * 10.0
    raise FactorizationError(
        f"matrix stayed indefinite after jitter escalation to {jitter:g}"
    )


def gaussian_loglik(Psi, Y):
    """Gaussian log-likelihood of the columns of ``Y`` under ``N(0, Psi)``.

    Returns ``(loglik, L, alpha)`` where ``alpha = Psi^-1 Y`` and ``L`` is the
    Cholesky factor actually used (including any jitter).
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, m = Y.shape
    L, _ = chol_with_jitter(Psi)
    alpha = cho_solve((L, True), Y)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    quad = float(np.sum(Y * alpha))
    ll = -0.5 * quad - 0.5 * m * logdet - 0.5 * m * n * LOG_2PI
    return ll, L, alpha


def conditional_parts(L, alpha, K_cross, prior_diag):
    """Conditional mean shift and latent variance given a factored prior.

    ``K_cross`` holds covariances between prediction and training points
    (``n_star x n``); ``prior_diag`` the prior variances at the prediction
    points.  Variances are clamped at zero.
    """
    mean_shift = K_cross @ alpha
    X = cho_solve((L, True), K_cross.T)
    var = prior_diag - np.einsum("ij,ij->j", K_cross.T, X)
    return mean_shift, np.maximum(var, 0.0)

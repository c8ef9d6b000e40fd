"""Gaussian process regression for functional data.

Four model families share one toolkit: stationary univariate GP regression
(``gpr``), nonstationary/nonseparable covariances with spline-varying
parameters (``nsgpr``), multi-output GPs built from convolved latent
processes (``mgpr``), and GP functional regression combining a
functional-regression mean with a GP residual structure (``gpfr``).
Supporting modules provide kernels with analytic derivatives (``kernels``),
basis systems and penalized smoothing (``fr``), seeded simulation
(``simulate``), model archives (``archive``) and a batch CLI (``cli``).

Submodules are imported lazily so the command-line entry point can configure
threading before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "archive",
    "bessel",
    "cli",
    "dataio",
    "errors",
    "fr",
    "gpfr",
    "gpr",
    "kernels",
    "linalg",
    "mgpr",
    "nsgpr",
    "optimize",
    "plotting",
    "seeds",
    "simulate",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)

"""Model archives: JSON serialization of fitted models.

An archive embeds everything prediction needs (kernel configuration,
log- and natural-scale estimates, mean-model parameters, coefficient
matrices and the training data) plus a fingerprint of the training data.
Floats survive the round trip bit for bit, so predictions from a loaded
archive match in-memory predictions exactly.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import fr, gpfr, gpr, mgpr, nsgpr
from .errors import ValidationError
from .kernels import HyperParams, KernelSpec

ARCHIVE_VERSION = 1


def _arr(x):
    return None if x is None else np.asarray(x).tolist()


def _fingerprint(obj) -> dict:
    payload = json.dumps(obj, sort_keys=True).encode()
    rows = 0

    def count(o):
        nonlocal rows
        if isinstance(o, dict):
            for v in o.values():
                count(v)
        elif isinstance(o, list):
            if o and not isinstance(o[0], (list, dict)):
                rows += 1
            for e in o:
                count(e)

    count(obj)
    return {"rows": rows, "sha256": hashlib.sha256(payload).hexdigest()}


def _spec_block(spec: KernelSpec) -> dict:
    return {
        "terms": list(spec.terms),
        "inputDim": spec.input_dim,
        "gamma": spec.gamma,
        "nu": spec.nu,
    }


def _spec_from(block) -> KernelSpec:
    return KernelSpec(tuple(block["terms"]), int(block["inputDim"]),
                      gamma=float(block["gamma"]), nu=float(block["nu"]))


def _theta_blocks(hp: HyperParams) -> dict:
    return {
        "thetaLog": {k: _json_float(v) for k, v in hp.as_dict().items()},
        "thetaNatural": hp.natural_dict(),
    }


def _json_float(v):
    return None if v == -np.inf else float(v)


def _theta_from(block, spec) -> HyperParams:
    vals = {k: (-np.inf if v is None else float(v)) for k, v in block["thetaLog"].items()}
    return HyperParams.from_dict(spec, vals)


def _mean_block(mean: gpr.MeanModel) -> dict:
    return {
        "kind": mean.kind,
        "coef": _arr(mean.coef),
        "grid": _arr(mean.grid),
        "values": _arr(mean.values),
    }


def _mean_from(block) -> gpr.MeanModel:
    return gpr.MeanModel(
        block["kind"],
        coef=None if block["coef"] is None else np.asarray(block["coef"], dtype=float),
        grid=None if block["grid"] is None else np.asarray(block["grid"], dtype=float),
        values=None if block["values"] is None else np.asarray(block["values"], dtype=float),
    )


def _report_block(report) -> dict | None:
    if report is None:
        return None
    return {
        "converged": bool(report.converged),
        "loglik": float(report.loglik),
        "iterations": int(report.iterations),
        "gradNorm": float(report.grad_norm),
        "message": report.message,
    }


def _basis_block(basis: fr.BasisSystem) -> dict:
    return {
        "kind": basis.kind,
        "nbasis": basis.nbasis,
        "norder": basis.norder,
        "domain": list(basis.domain),
        "period": basis.period,
    }


def _basis_from(block) -> fr.BasisSystem:
    return fr.BasisSystem(block["kind"], int(block["nbasis"]),
                          tuple(block["domain"]), norder=int(block["norder"]),
                          period=block["period"])


def to_archive(model) -> dict:
    """Archive dictionary for any fitted model kind."""
    if isinstance(model, gpr.GPModel):
        train = {
            "inputs": _arr(model.train.inputs),
            "responses": _arr(model.train.responses),
        }
        return {
            "kind": "gpr",
            "version": ARCHIVE_VERSION,
            "kernel": _spec_block(model.spec),
            **_theta_blocks(model.hp),
            "mean": _mean_block(model.mean),
            "train": train,
            "fingerprint": _fingerprint(train),
            "fitReport": _report_block(model.report),
        }
    if isinstance(model, nsgpr.NSGPRModel):
        basis = model.coeffs.basis
        train = {
            "inputs": _arr(model.train.inputs),
            "responses": _arr(model.train.responses),
        }
        return {
            "kind": "nsgpr",
            "version": ARCHIVE_VERSION,
            "corrModel": model.corr_model,
            "gamma": model.gamma,
            "nu": model.nu,
            "surfaceBasis": {
                "whichTau": list(basis.which_tau),
                "nBasis": basis.n_basis,
                "cyclic": list(basis.cyclic),
                "lo": _arr(basis.lo),
                "hi": _arr(basis.hi),
            },
            "coefficients": {
                "sigma": _arr(model.coeffs.sigma_coef),
                "radius": [_arr(c) for c in model.coeffs.radius_coefs],
                "angles": [_arr(c) for c in model.coeffs.angle_coefs],
                "noiseLogVar": _json_float(model.coeffs.noise_log_var),
                "sepCov": model.coeffs.sep_cov,
            },
            "train": train,
            "fingerprint": _fingerprint(train),
            "fitReport": _report_block(model.report),
        }
    if isinstance(model, mgpr.MGPRModel):
        train = {
            "inputs": [_arr(T) for T in model.train.inputs],
            "responses": [_arr(Y) for Y in model.train.responses],
        }
        return {
            "kind": "mgpr",
            "version": ARCHIVE_VERSION,
            "hyper": {
                "sharedAmp": _arr(model.hyper.shared_amp),
                "sharedPrec": _arr(model.hyper.shared_prec),
                "indepAmp": _arr(model.hyper.indep_amp),
                "indepPrec": _arr(model.hyper.indep_prec),
                "noiseVar": _arr(model.hyper.noise_var),
            },
            "means": [_mean_block(m) for m in model.means],
            "train": train,
            "fingerprint": _fingerprint(train),
            "fitReport": _report_block(model.report),
        }
    if isinstance(model, gpfr.GPFRModel):
        frm = model.fr_mean
        train = {
            "tGrids": [_arr(g) for g in model.t_grids],
            "responses": [_arr(y) for y in model.responses],
            "residuals": [_arr(r) for r in model.residuals],
            "gpInputs": [_arr(X) for X in model.gp_inputs],
        }
        return {
            "kind": "gpfr",
            "version": ARCHIVE_VERSION,
            "frMean": {
                "basis": _basis_block(frm.basis),
                "A": _arr(frm.A),
                "B": _arr(frm.B),
                "alpha": _arr(frm.alpha),
                "alphaCoef": _arr(frm.alpha_coef),
                "fcovBasis": None if frm.fcov_basis is None else _basis_block(frm.fcov_basis),
                "concurrent": frm.concurrent,
            },
            "gp": {
                "kernel": _spec_block(model.gp.spec),
                **_theta_blocks(model.gp.hp),
            },
            "gpReg": list(model.gp_reg),
            "train": train,
            "fingerprint": _fingerprint(train),
            "fitReport": _report_block(model.gp.report),
        }
    raise ValidationError(f"cannot archive object of type {type(model).__name__}")


def from_archive(doc):
    """Rebuild a usable fitted model from an archive dictionary."""
    kind = doc.get("kind")
    if doc.get("version") != ARCHIVE_VERSION:
        raise ValidationError(f"unsupported archive version {doc.get('version')!r}")
    if kind == "gpr":
        spec = _spec_from(doc["kernel"])
        hp = _theta_from(doc, spec)
        train = gpr.Dataset(
            np.asarray(doc["train"]["inputs"], dtype=float),
            np.asarray(doc["train"]["responses"], dtype=float),
        )
        return gpr.GPModel.from_params(spec, hp, train, _mean_from(doc["mean"]))
    if kind == "nsgpr":
        sb = doc["surfaceBasis"]
        basis = nsgpr.ParamBasis(
            tuple(sb["whichTau"]), int(sb["nBasis"]), tuple(bool(c) for c in sb["cyclic"]),
            np.asarray(sb["lo"], dtype=float), np.asarray(sb["hi"], dtype=float),
        )
        cf = doc["coefficients"]
        train = gpr.Dataset(
            np.asarray(doc["train"]["inputs"], dtype=float),
            np.asarray(doc["train"]["responses"], dtype=float),
        )
        noise = cf["noiseLogVar"]
        coeffs = nsgpr.VaryingCoeffs(
            basis=basis,
            input_dim=train.input_dim,
            sigma_coef=None if cf["sigma"] is None else np.asarray(cf["sigma"], dtype=float),
            radius_coefs=[np.asarray(c, dtype=float) for c in cf["radius"]],
            angle_coefs=[np.asarray(c, dtype=float) for c in cf["angles"]],
            noise_log_var=-np.inf if noise is None else float(noise),
            sep_cov=bool(cf["sepCov"]),
        )
        model = nsgpr.NSGPRModel(coeffs, doc["corrModel"], float(doc["gamma"]),
                                 float(doc["nu"]), train)
        from scipy.linalg import cho_solve

        from .linalg import chol_with_jitter

        Psi = model.cov(train.inputs, train.inputs, add_noise=True)
        L, _ = chol_with_jitter(Psi)
        model.chol = L
        model.alpha = cho_solve((L, True), train.responses)
        return model
    if kind == "mgpr":
        h = doc["hyper"]
        hyper = mgpr.MGPRHyper(
            np.asarray(h["sharedAmp"], dtype=float),
            np.asarray(h["sharedPrec"], dtype=float),
            np.asarray(h["indepAmp"], dtype=float),
            np.asarray(h["indepPrec"], dtype=float),
            np.asarray(h["noiseVar"], dtype=float),
        )
        train = mgpr.MultiDataset(
            [np.asarray(T, dtype=float) for T in doc["train"]["inputs"]],
            [np.asarray(Y, dtype=float) for Y in doc["train"]["responses"]],
        )
        means = [_mean_from(b) for b in doc["means"]]
        return mgpr.MGPRModel.from_params(hyper, train, means)
    if kind == "gpfr":
        fm = doc["frMean"]
        frm = fr.FRModel(
            basis=_basis_from(fm["basis"]),
            A=np.asarray(fm["A"], dtype=float),
            B=None if fm["B"] is None else np.asarray(fm["B"], dtype=float),
            alpha=None if fm["alpha"] is None else np.asarray(fm["alpha"], dtype=float),
            alpha_coef=None if fm["alphaCoef"] is None else np.asarray(fm["alphaCoef"], dtype=float),
            fcov_basis=None if fm["fcovBasis"] is None else _basis_from(fm["fcovBasis"]),
            concurrent=bool(fm["concurrent"]),
        )
        spec = _spec_from(doc["gp"]["kernel"])
        hp = _theta_from(doc["gp"], spec)
        t_grids = [np.asarray(g, dtype=float) for g in doc["train"]["tGrids"]]
        responses = [np.asarray(y, dtype=float) for y in doc["train"]["responses"]]
        residuals = [np.asarray(r, dtype=float) for r in doc["train"]["residuals"]]
        gp_inputs = [np.asarray(X, dtype=float) for X in doc["train"]["gpInputs"]]
        ds = gpr.Dataset.from_curves(gp_inputs, residuals)
        gp_model = gpr.GPModel.from_params(spec, hp, ds)
        return gpfr.GPFRModel(frm, gp_model, tuple(doc["gpReg"]), t_grids,
                              responses, residuals, gp_inputs)
    raise ValidationError(f"unknown archive kind {kind!r}")


def save_model(path, model):
    doc = to_archive(model)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return from_archive(doc)

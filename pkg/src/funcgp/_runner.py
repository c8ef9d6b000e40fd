"""Implementation behind the command-line interface.

A run is described by one JSON config carrying the command (``simulate``,
``fit``, ``predict`` or ``export-plot-data``), the model family, the blocks
mirroring that family's fit/predict signature, and file paths.  Unknown keys
are rejected.  Input paths are resolved against the config file's directory,
output paths against ``--output-dir`` (falling back to the config
directory).
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from . import archive, dataio, fr, gpfr, gpr, kernels, mgpr, nsgpr, plotting, simulate
from .errors import ValidationError
from .seeds import SIMULATE_OFFSET, rng_for

COMMANDS = ("simulate", "fit", "predict", "export-plot-data")
MODELS = ("gpr", "nsgpr", "mgpr", "gpfr")


def _check_keys(block, allowed, required, where):
    if not isinstance(block, dict):
        raise ValidationError(f"{where}: expected an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ValidationError(f"{where}: unknown keys {unknown}")
    missing = sorted(set(required) - set(block))
    if missing:
        raise ValidationError(f"{where}: missing required keys {missing}")


def _need(block, key, where):
    if key not in block or block[key] is None:
        raise ValidationError(f"{where}: missing required key {key!r}")
    return block[key]


class RunContext:
    def __init__(self, config_path, seed_override=None, output_dir=None):
        self.config_path = Path(config_path)
        try:
            with open(self.config_path, "r", encoding="utf-8") as fh:
                self.config = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"{config_path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{config_path}: invalid JSON ({exc})") from exc
        if not isinstance(self.config, dict):
            raise ValidationError("config must be a JSON object")
        self.in_dir = self.config_path.parent
        self.out_dir = Path(output_dir) if output_dir else self.in_dir
        seed = self.config.get("seed", 0)
        if seed_override is not None:
            seed = seed_override
        self.seed = int(seed)

    def in_path(self, rel):
        p = Path(rel)
        return p if p.is_absolute() else self.in_dir / p

    def out_path(self, rel):
        p = Path(rel)
        if not p.is_absolute():
            p = self.out_dir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


def run(config_path, seed_override=None, output_dir=None):
    ctx = RunContext(config_path, seed_override, output_dir)
    command = ctx.config.get("command")
    if command not in COMMANDS:
        raise ValidationError(f"command must be one of {COMMANDS}, got {command!r}")
    if command == "export-plot-data":
        return _run_export(ctx)
    model = ctx.config.get("model")
    if model not in MODELS:
        raise ValidationError(f"model must be one of {MODELS}, got {model!r}")
    return {
        "simulate": _run_simulate,
        "fit": _run_fit,
        "predict": _run_predict,
    }[command](ctx, model)


# ---------------------------------------------------------------------------
# shared block parsers


def _parse_kernel(block, input_dim):
    _check_keys(block, ("terms", "gamma", "nu"), ("terms",), "kernel")
    return kernels.KernelSpec(
        tuple(block["terms"]), input_dim,
        gamma=float(block.get("gamma", 2.0)), nu=float(block.get("nu", 1.5)),
    )


def _parse_theta(spec, block):
    if not isinstance(block, dict):
        raise ValidationError("thetaNatural: expected an object of named values")
    return kernels.HyperParams.from_natural(spec, block)


def _parse_grid(block):
    _check_keys(block, ("n", "min", "max"), ("n", "min", "max"), "grid")
    n = int(block["n"])
    if n < 2:
        raise ValidationError("grid.n must be >= 2")
    return np.linspace(float(block["min"]), float(block["max"]), n)


def _parse_smooth_spec(block, where):
    if block is None:
        return None
    _check_keys(block, ("nbasis", "norder", "bspline", "pen", "lambda", "period"),
                (), where)
    return fr.SmoothSpec(
        nbasis=None if block.get("nbasis") is None else int(block["nbasis"]),
        norder=int(block.get("norder", 6)),
        bspline=bool(block.get("bspline", True)),
        pen=tuple(block.get("pen", (0.0, 0.0, 1.0))),
        lam=float(block.get("lambda", 1e-4)),
        period=block.get("period"),
    )


def _simulated_mean(block, grid, n_outputs=None, output_index=None):
    if block is None:
        return None
    kind = block.get("kind", "zero")
    if kind == "zero":
        return None
    if kind == "constant":
        vals = block.get("value")
        if n_outputs is not None:
            vals = vals[output_index]
        return gpr.MeanModel("constant", coef=np.array([float(vals)]))
    if kind == "linear":
        coefs = _need(block, "coefficients", "mean")
        if n_outputs is not None:
            coefs = coefs[output_index]
        return gpr.MeanModel("linear", coef=np.asarray(coefs, dtype=float))
    raise ValidationError(f"mean.kind for simulation must be zero/constant/linear, got {kind!r}")


def _write_params(ctx, path, payload):
    with open(ctx.out_path(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# simulate


def _run_simulate(ctx, model):
    cfg = ctx.config
    rng = rng_for(ctx.seed, SIMULATE_OFFSET)
    if model == "gpr":
        _check_keys(cfg, ("command", "model", "seed", "grid", "kernel", "thetaNatural",
                          "mean", "realizations", "output"),
                    ("grid", "kernel", "thetaNatural", "output"), "config")
        grid = _parse_grid(_need(cfg, "grid", "config"))
        spec = _parse_kernel(_need(cfg, "kernel", "config"), 1)
        hp = _parse_theta(spec, _need(cfg, "thetaNatural", "config"))
        mean = _simulated_mean(cfg.get("mean"), grid)
        m = int(cfg.get("realizations", 1))
        latent, responses = simulate.simulate_gpr(rng, spec, hp, grid, m, mean)
        out = _need(cfg, "output", "config")
        _check_keys(out, ("data", "params", "latent"), ("data",), "output")
        names = [f"y{j + 1}" for j in range(m)]
        dataio.write_csv(ctx.out_path(out["data"]), ["t"] + names,
                         [grid] + [responses[:, j] for j in range(m)])
        if out.get("latent"):
            dataio.write_csv(ctx.out_path(out["latent"]),
                             ["t"] + [f"f{j + 1}" for j in range(m)],
                             [grid] + [latent[:, j] for j in range(m)])
        if out.get("params"):
            _write_params(ctx, out["params"], {
                "model": "gpr", "seed": ctx.seed,
                "kernel": cfg["kernel"], "thetaNatural": cfg["thetaNatural"],
                "mean": cfg.get("mean"), "realizations": m,
            })
        return {"rows": grid.size, "realizations": m}
    if model == "nsgpr":
        _check_keys(cfg, ("command", "model", "seed", "grid", "corrModel", "gamma", "nu",
                          "surface", "realizations", "output"),
                    ("grid", "surface", "output"), "config")
        grid = _parse_grid(_need(cfg, "grid", "config"))
        sb = _need(cfg, "surface", "config")
        _check_keys(sb, ("nBasis", "cyclic", "sigma", "radius", "angles",
                         "noiseLogVar", "sepCov"), ("nBasis", "radius"), "surface")
        basis = nsgpr.ParamBasis(
            (0,), int(sb["nBasis"]), (bool(sb.get("cyclic", [False])[0]),),
            np.array([grid.min()]), np.array([grid.max()]),
        )
        noise = sb.get("noiseLogVar")
        coeffs = nsgpr.VaryingCoeffs(
            basis=basis, input_dim=1,
            sigma_coef=None if sb.get("sigma") is None else np.asarray(sb["sigma"], dtype=float),
            radius_coefs=[np.asarray(c, dtype=float) for c in sb["radius"]],
            angle_coefs=[np.asarray(c, dtype=float) for c in sb.get("angles", [])],
            noise_log_var=-np.inf if noise is None else float(noise),
            sep_cov=bool(sb.get("sepCov", False)),
        )
        m = int(cfg.get("realizations", 1))
        latent, responses = simulate.simulate_nsgpr(
            rng, coeffs, grid, m, corr_model=cfg.get("corrModel", "pow.ex"),
            gamma=float(cfg.get("gamma", 2.0)), nu=float(cfg.get("nu", 1.5)),
        )
        out = _need(cfg, "output", "config")
        _check_keys(out, ("data", "params", "latent"), ("data",), "output")
        names = [f"y{j + 1}" for j in range(m)]
        dataio.write_csv(ctx.out_path(out["data"]), ["t"] + names,
                         [grid] + [responses[:, j] for j in range(m)])
        if out.get("latent"):
            dataio.write_csv(ctx.out_path(out["latent"]),
                             ["t"] + [f"f{j + 1}" for j in range(m)],
                             [grid] + [latent[:, j] for j in range(m)])
        if out.get("params"):
            _write_params(ctx, out["params"], {"model": "nsgpr", "seed": ctx.seed,
                                               "surface": sb, "corrModel": cfg.get("corrModel", "pow.ex")})
        return {"rows": grid.size, "realizations": m}
    if model == "mgpr":
        _check_keys(cfg, ("command", "model", "seed", "grids", "hyper", "mean",
                          "realizations", "output"),
                    ("grids", "hyper", "output"), "config")
        grids = [_parse_grid(g) for g in _need(cfg, "grids", "config")]
        hb = _need(cfg, "hyper", "config")
        _check_keys(hb, ("sharedAmp", "sharedPrec", "indepAmp", "indepPrec", "noiseVar"),
                    ("sharedAmp", "sharedPrec", "indepAmp", "indepPrec", "noiseVar"), "hyper")
        hyper = mgpr.MGPRHyper(
            np.asarray(hb["sharedAmp"], dtype=float),
            np.asarray(hb["sharedPrec"], dtype=float),
            np.asarray(hb["indepAmp"], dtype=float),
            np.asarray(hb["indepPrec"], dtype=float),
            np.asarray(hb["noiseVar"], dtype=float),
        )
        p = hyper.p
        if len(grids) != p:
            raise ValidationError(f"{len(grids)} grids for {p} outputs")
        means = [_simulated_mean(cfg.get("mean"), grids[j], p, j) for j in range(p)]
        m = int(cfg.get("realizations", 1))
        latent, responses = simulate.simulate_mgpr(rng, hyper, grids, m, means)
        out = _need(cfg, "output", "config")
        _check_keys(out, ("data", "params", "latent"), ("data",), "output")
        names = [f"y{j + 1}" for j in range(m)]
        out_col = np.concatenate([[j + 1] * grids[j].size for j in range(p)])
        t_col = np.concatenate(grids)
        resp_cols = [np.concatenate([responses[j][:, r] for j in range(p)]) for r in range(m)]
        dataio.write_csv(ctx.out_path(out["data"]), ["output", "t"] + names,
                         [out_col, t_col] + resp_cols)
        if out.get("latent"):
            lat_cols = [np.concatenate([latent[j][:, r] for j in range(p)]) for r in range(m)]
            dataio.write_csv(ctx.out_path(out["latent"]),
                             ["output", "t"] + [f"f{j + 1}" for j in range(m)],
                             [out_col, t_col] + lat_cols)
        if out.get("params"):
            _write_params(ctx, out["params"], {"model": "mgpr", "seed": ctx.seed, "hyper": hb})
        return {"outputs": p, "realizations": m}
    # gpfr
    _check_keys(cfg, ("command", "model", "seed", "grid", "realizations",
                      "scalarCovariates", "beta", "functionalCovariate", "gpReg",
                      "kernel", "thetaNatural", "output"),
                ("grid", "realizations", "scalarCovariates", "beta", "kernel",
                 "thetaNatural", "output"), "config")
    grid = _parse_grid(_need(cfg, "grid", "config"))
    m = int(cfg["realizations"])
    sc = _need(cfg, "scalarCovariates", "config")
    _check_keys(sc, ("normal", "values"), (), "scalarCovariates")
    if "values" in sc and sc["values"] is not None:
        u = np.asarray(sc["values"], dtype=float)
    else:
        nb = _need(sc, "normal", "scalarCovariates")
        mu_u = np.asarray(nb["mean"], dtype=float)
        sd_u = np.asarray(nb["sd"], dtype=float)
        u = mu_u[None, :] + sd_u[None, :] * rng.normal(size=(m, mu_u.size))
    beta = np.asarray(cfg["beta"], dtype=float)
    x_curves = None
    fc = cfg.get("functionalCovariate")
    if fc is not None:
        _check_keys(fc, ("curve", "offsetSd"), ("curve",), "functionalCovariate")
        base = np.asarray(fc["curve"], dtype=float)
        if base.size != grid.size:
            raise ValidationError("functionalCovariate.curve length must match the grid")
        offs = float(fc.get("offsetSd", 0.0)) * rng.normal(size=(m, 1))
        x_curves = [base[None, :] + offs]
    gp_reg_cfg = cfg.get("gpReg", "time")
    if gp_reg_cfg == "covariate":
        if x_curves is None:
            raise ValidationError("gpReg 'covariate' needs a functionalCovariate block")
        gp_reg = 0
    elif gp_reg_cfg == "time":
        gp_reg = "time"
    else:
        raise ValidationError("gpReg must be 'time' or 'covariate'")
    spec = _parse_kernel(_need(cfg, "kernel", "config"), 1)
    hp = _parse_theta(spec, _need(cfg, "thetaNatural", "config"))
    sim = simulate.simulate_gpfr(rng, grid, u, beta, spec, hp,
                                 x_curves=x_curves, gp_reg=gp_reg)
    out = _need(cfg, "output", "config")
    _check_keys(out, ("data", "scalars", "covariate", "params"), ("data", "scalars"), "output")
    names = [f"y{j + 1}" for j in range(m)]
    dataio.write_csv(ctx.out_path(out["data"]), ["t"] + names,
                     [grid] + [sim["responses"][j] for j in range(m)])
    dataio.write_csv(ctx.out_path(out["scalars"]),
                     [f"u{k + 1}" for k in range(u.shape[1])],
                     [u[:, k] for k in range(u.shape[1])])
    if x_curves is not None and out.get("covariate"):
        dataio.write_csv(ctx.out_path(out["covariate"]),
                         ["t"] + [f"x{j + 1}" for j in range(m)],
                         [grid] + [x_curves[0][j] for j in range(m)])
    if out.get("params"):
        _write_params(ctx, out["params"], {"model": "gpfr", "seed": ctx.seed,
                                           "thetaNatural": cfg["thetaNatural"],
                                           "gpReg": gp_reg_cfg})
    return {"rows": grid.size, "realizations": m}


# ---------------------------------------------------------------------------
# fit


def _fit_report_payload(report, extra, runtime):
    payload = {
        "converged": bool(report.converged),
        "logLikelihood": float(report.loglik),
        "gradientNorm": float(report.grad_norm),
        "iterations": int(report.iterations),
        "message": report.message,
        "runtimeSeconds": runtime,
    }
    payload.update(extra)
    return payload


def _run_fit(ctx, model):
    cfg = ctx.config
    t0 = time.perf_counter()
    out = _need(cfg, "output", "config")
    _check_keys(out, ("archive", "report"), ("archive",), "output")
    if model == "gpr":
        _check_keys(cfg, ("command", "model", "seed", "data", "kernel", "mean",
                          "options", "output"), ("data", "kernel", "output"), "config")
        db = _need(cfg, "data", "config")
        _check_keys(db, ("path", "inputCols", "responseCols"),
                    ("path", "inputCols", "responseCols"), "data")
        ds = dataio.ingest_dataset(ctx.in_path(db["path"]), db["inputCols"], db["responseCols"])
        spec = _parse_kernel(_need(cfg, "kernel", "config"), ds.input_dim)
        mb = cfg.get("mean") or {"kind": "zero"}
        _check_keys(mb, ("kind", "mu"), ("kind",), "mean")
        ob = cfg.get("options") or {}
        _check_keys(ob, ("m", "restarts", "useGradient", "maxIter"), (), "options")
        fitted = gpr.fit(
            ds, spec, mb["kind"], m=ob.get("m"),
            restarts=int(ob.get("restarts", 5)), seed=ctx.seed,
            use_gradient=bool(ob.get("useGradient", True)), mu=mb.get("mu"),
            max_iter=int(ob.get("maxIter", 500)),
        )
        extra = {"thetaNatural": fitted.hp.natural_dict()}
    elif model == "nsgpr":
        _check_keys(cfg, ("command", "model", "seed", "data", "corrModel", "gamma", "nu",
                          "options", "output"), ("data", "output"), "config")
        db = _need(cfg, "data", "config")
        _check_keys(db, ("path", "inputCols", "responseCols"),
                    ("path", "inputCols", "responseCols"), "data")
        ds = dataio.ingest_dataset(ctx.in_path(db["path"]), db["inputCols"], db["responseCols"])
        ob = cfg.get("options") or {}
        _check_keys(ob, ("whichTau", "nBasis", "cyclic", "unitSignalVariance",
                         "zeroNoiseVariance", "sepCov", "restarts", "maxIter"), (), "options")
        fitted = nsgpr.fit(
            ds, cfg.get("corrModel", "pow.ex"),
            gamma=float(cfg.get("gamma", 2.0)), nu=float(cfg.get("nu", 1.5)),
            which_tau=tuple(ob.get("whichTau", (0,))),
            n_basis=int(ob.get("nBasis", 5)),
            cyclic=ob.get("cyclic"),
            unit_signal_variance=bool(ob.get("unitSignalVariance", False)),
            zero_noise_variance=bool(ob.get("zeroNoiseVariance", False)),
            sep_cov=bool(ob.get("sepCov", False)),
            restarts=int(ob.get("restarts", 3)), seed=ctx.seed,
            max_iter=int(ob.get("maxIter", 200)),
        )
        extra = {"noiseVariance": fitted.coeffs.noise_variance}
    elif model == "mgpr":
        _check_keys(cfg, ("command", "model", "seed", "data", "mean", "options",
                          "output"), ("data", "output"), "config")
        db = _need(cfg, "data", "config")
        _check_keys(db, ("path", "paths", "outputIdCol", "inputCols", "responseCols"),
                    ("inputCols", "responseCols"), "data")
        if db.get("paths"):
            ds = dataio.ingest_multi_files([ctx.in_path(p) for p in db["paths"]],
                                           db["inputCols"], db["responseCols"])
        else:
            ds = dataio.ingest_multi_by_id(ctx.in_path(_need(db, "path", "data")),
                                           _need(db, "outputIdCol", "data"),
                                           db["inputCols"], db["responseCols"])
        mb = cfg.get("mean") or {"kind": "zero"}
        _check_keys(mb, ("kind", "mu"), ("kind",), "mean")
        ob = cfg.get("options") or {}
        _check_keys(ob, ("m", "restarts", "maxIter"), (), "options")
        fitted = mgpr.fit(
            ds, m=ob.get("m"), mean_model=mb["kind"], mu=mb.get("mu"),
            restarts=int(ob.get("restarts", 5)), seed=ctx.seed,
            max_iter=int(ob.get("maxIter", 500)),
        )
        extra = {"noiseVariances": fitted.hyper.noise_var.tolist()}
    else:  # gpfr
        _check_keys(cfg, ("command", "model", "seed", "data", "gpReg",
                          "useCovariateInMean", "concurrent", "kernel", "fySpec",
                          "fxCoefSpec", "options", "output"),
                    ("data", "kernel", "output"), "config")
        db = _need(cfg, "data", "config")
        _check_keys(db, ("responses", "scalars", "covariate"), ("responses",), "data")
        rb = db["responses"]
        _check_keys(rb, ("path", "timeCol", "curveCols"), ("path", "timeCol", "curveCols"),
                    "data.responses")
        header, rows = dataio.read_table(ctx.in_path(rb["path"]))
        t_grid = dataio.column_values(ctx.in_path(rb["path"]), header, rows,
                                      [rb["timeCol"]])[:, 0]
        Y = dataio.column_values(ctx.in_path(rb["path"]), header, rows, rb["curveCols"]).T
        u = None
        if db.get("scalars"):
            sb = db["scalars"]
            _check_keys(sb, ("path", "cols"), ("path", "cols"), "data.scalars")
            h2, r2 = dataio.read_table(ctx.in_path(sb["path"]))
            u = dataio.column_values(ctx.in_path(sb["path"]), h2, r2, sb["cols"])
        x = None
        if db.get("covariate"):
            xb = db["covariate"]
            _check_keys(xb, ("path", "curveCols"), ("path", "curveCols"), "data.covariate")
            h3, r3 = dataio.read_table(ctx.in_path(xb["path"]))
            x = dataio.column_values(ctx.in_path(xb["path"]), h3, r3, xb["curveCols"]).T
        gp_reg_cfg = cfg.get("gpReg", "time")
        if gp_reg_cfg == "covariate":
            if x is None:
                raise ValidationError("gpReg 'covariate' needs a data.covariate block")
            gp_reg = x
        elif gp_reg_cfg == "time":
            gp_reg = "time"
        else:
            raise ValidationError("gpReg must be 'time' or 'covariate'")
        ob = cfg.get("options") or {}
        _check_keys(ob, ("restarts", "useGradient", "maxIter", "fitting"), (), "options")
        kb = _need(cfg, "kernel", "config")
        fitted = gpfr.fit(
            Y, t_grid, u_reg=u,
            fx_reg=[x] if (x is not None and cfg.get("useCovariateInMean")) else None,
            gp_reg=gp_reg,
            kernel=tuple(kb["terms"]), gamma=float(kb.get("gamma", 2.0)),
            nu=float(kb.get("nu", 1.5)),
            concurrent=bool(cfg.get("concurrent", True)),
            fy_spec=_parse_smooth_spec(cfg.get("fySpec"), "fySpec"),
            fx_coef_spec=_parse_smooth_spec(cfg.get("fxCoefSpec"), "fxCoefSpec"),
            fitting=bool(ob.get("fitting", False)),
            restarts=int(ob.get("restarts", 5)), seed=ctx.seed,
            use_gradient=bool(ob.get("useGradient", True)),
            max_iter=int(ob.get("maxIter", 500)),
        )
        extra = {"thetaNatural": fitted.gp.hp.natural_dict()}
    runtime = time.perf_counter() - t0
    archive.save_model(ctx.out_path(out["archive"]), fitted)
    report = fitted.report if not isinstance(fitted, gpfr.GPFRModel) else fitted.gp.report
    if out.get("report"):
        _write_params(ctx, out["report"], _fit_report_payload(report, extra, runtime))
    return {"archive": str(ctx.out_path(out["archive"])), "loglik": report.loglik}


# ---------------------------------------------------------------------------
# predict


def _run_predict(ctx, model):
    cfg = ctx.config
    out = _need(cfg, "output", "config")
    _check_keys(out, ("predictions",), ("predictions",), "output")
    loaded = archive.load_model(ctx.in_path(_need(cfg, "archive", "config")))
    ob = cfg.get("options") or {}
    if model in ("gpr", "nsgpr"):
        _check_keys(cfg, ("command", "model", "seed", "archive", "inputs", "options",
                          "output"), ("archive", "inputs", "output"), "config")
        ib = _need(cfg, "inputs", "config")
        _check_keys(ib, ("path", "inputCols"), ("path", "inputCols"), "inputs")
        header, rows = dataio.read_table(ctx.in_path(ib["path"]))
        T = dataio.column_values(ctx.in_path(ib["path"]), header, rows, ib["inputCols"])
        if model == "gpr":
            if not isinstance(loaded, gpr.GPModel):
                raise ValidationError("archive does not hold a gpr model")
            _check_keys(ob, ("noiseFreePred", "mSR", "realization"), (), "options")
            pred = gpr.predict(
                loaded, T, noise_free=bool(ob.get("noiseFreePred", False)),
                m_sr=ob.get("mSR"), seed=ctx.seed,
                realization=int(ob.get("realization", 0)),
            )
        else:
            if not isinstance(loaded, nsgpr.NSGPRModel):
                raise ValidationError("archive does not hold an nsgpr model")
            _check_keys(ob, ("noiseFreePred", "realization"), (), "options")
            pred = nsgpr.predict(
                loaded, T, noise_free=bool(ob.get("noiseFreePred", False)),
                realization=int(ob.get("realization", 0)),
            )
        cols = [pred.grid[:, q] for q in range(pred.grid.shape[1])]
        dataio.write_csv(
            ctx.out_path(out["predictions"]),
            list(ib["inputCols"]) + ["mean", "sd", "noiseFree"],
            cols + [pred.mean, pred.sd, np.full(pred.mean.size, pred.noise_free, dtype=object)],
        )
        return {"rows": pred.mean.size}
    if model == "mgpr":
        _check_keys(cfg, ("command", "model", "seed", "archive", "inputs", "obs",
                          "options", "output"), ("archive", "inputs", "output"), "config")
        if not isinstance(loaded, mgpr.MGPRModel):
            raise ValidationError("archive does not hold an mgpr model")
        _check_keys(ob, ("noiseFreePred",), (), "options")
        ib = _need(cfg, "inputs", "config")
        _check_keys(ib, ("path", "outputIdCol", "inputCols"),
                    ("path", "outputIdCol", "inputCols"), "inputs")
        stars = _read_per_output(ctx, ib, loaded.hyper.p, value_col=None)
        if cfg.get("obs"):
            xb = cfg["obs"]
            _check_keys(xb, ("path", "outputIdCol", "inputCols", "responseCol"),
                        ("path", "outputIdCol", "inputCols", "responseCol"), "obs")
            obs_T, obs_y = _read_per_output(ctx, xb, loaded.hyper.p,
                                            value_col=xb["responseCol"])
        else:
            q = loaded.train.input_dim
            obs_T = [np.zeros((0, q)) for _ in range(loaded.hyper.p)]
            obs_y = [np.zeros(0) for _ in range(loaded.hyper.p)]
        preds = mgpr.predict(loaded, obs_T, obs_y, stars,
                             noise_free=bool(ob.get("noiseFreePred", False)))
        out_col, t_cols, mean_col, sd_col = [], [], [], []
        for j, pred in enumerate(preds):
            out_col.append(np.full(pred.mean.size, j + 1))
            t_cols.append(pred.grid)
            mean_col.append(pred.mean)
            sd_col.append(pred.sd)
        grid_all = np.vstack([g for g in t_cols if g.size] or [np.zeros((0, 1))])
        nf = bool(ob.get("noiseFreePred", False))
        dataio.write_csv(
            ctx.out_path(out["predictions"]),
            ["output"] + list(ib["inputCols"]) + ["mean", "sd", "noiseFree"],
            [np.concatenate(out_col)]
            + [grid_all[:, q] for q in range(grid_all.shape[1])]
            + [np.concatenate(mean_col), np.concatenate(sd_col),
               np.full(sum(p.mean.size for p in preds), nf, dtype=object)],
        )
        return {"rows": int(sum(p.mean.size for p in preds))}
    # gpfr
    _check_keys(cfg, ("command", "model", "seed", "archive", "inputs", "obs", "uStar",
                      "options", "output"), ("archive", "inputs", "output"), "config")
    if not isinstance(loaded, gpfr.GPFRModel):
        raise ValidationError("archive does not hold a gpfr model")
    _check_keys(ob, ("noiseFreePred", "meanOnly"), (), "options")
    ib = _need(cfg, "inputs", "config")
    _check_keys(ib, ("path", "timeCol", "covariateCol"), ("path", "timeCol"), "inputs")
    header, rows = dataio.read_table(ctx.in_path(ib["path"]))
    t_star = dataio.column_values(ctx.in_path(ib["path"]), header, rows, [ib["timeCol"]])[:, 0]
    gp_star = None
    if ib.get("covariateCol"):
        gp_star = dataio.column_values(ctx.in_path(ib["path"]), header, rows,
                                       [ib["covariateCol"]])[:, 0]
    u_star = None if cfg.get("uStar") is None else np.asarray(cfg["uStar"], dtype=float)
    noise_free = bool(ob.get("noiseFreePred", False))
    needs_gp_cols = any(s == "given" for s in loaded.gp_reg)
    needs_mean_cols = loaded.fr_mean.n_functional > 0
    if (needs_gp_cols or needs_mean_cols) and gp_star is None:
        raise ValidationError("model uses a functional covariate; inputs need covariateCol")
    x_star = [gp_star] if needs_mean_cols else None
    if cfg.get("obs"):
        xb = cfg["obs"]
        _check_keys(xb, ("path", "timeCol", "responseCol", "covariateCol"),
                    ("path", "timeCol", "responseCol"), "obs")
        h2, r2 = dataio.read_table(ctx.in_path(xb["path"]))
        obs_t = dataio.column_values(ctx.in_path(xb["path"]), h2, r2, [xb["timeCol"]])[:, 0]
        obs_y = dataio.column_values(ctx.in_path(xb["path"]), h2, r2, [xb["responseCol"]])[:, 0]
        gp_obs = None
        if xb.get("covariateCol"):
            gp_obs = dataio.column_values(ctx.in_path(xb["path"]), h2, r2,
                                          [xb["covariateCol"]])[:, 0]
        if (needs_gp_cols or needs_mean_cols) and gp_obs is None:
            raise ValidationError("model uses a functional covariate; obs need covariateCol")
        pred = gpfr.predict_type1(loaded, obs_t, obs_y, t_star, u_star=u_star,
                                  x_star=x_star,
                                  obs_x=[gp_obs] if needs_mean_cols else None,
                                  gp_obs=gp_obs, gp_star=gp_star,
                                  noise_free=noise_free)
    else:
        pred = gpfr.predict_type2(loaded, t_star, u_star=u_star, x_star=x_star,
                                  gp_star=gp_star, noise_free=noise_free,
                                  mean_only=bool(ob.get("meanOnly", False)))
    dataio.write_csv(
        ctx.out_path(out["predictions"]),
        [ib["timeCol"], "mean", "sd", "noiseFree", "predictionType"],
        [pred.grid, pred.mean, pred.sd,
         np.full(pred.mean.size, pred.noise_free, dtype=object),
         np.full(pred.mean.size, pred.prediction_type, dtype=object)],
    )
    return {"rows": pred.mean.size, "predictionType": pred.prediction_type}


def _read_per_output(ctx, block, p, value_col):
    # outputs are numbered 1..p, matching the sorted-id order used at fit time
    path = ctx.in_path(block["path"])
    header, rows = dataio.read_table(path)
    id_col = block["outputIdCol"]
    if id_col not in header:
        raise ValidationError(f"{path}: missing column {id_col!r}")
    j = header.index(id_col)
    ids = np.array([row[j].strip() for row in rows])
    known = {str(k) for k in range(1, p + 1)}
    unknown = sorted(set(ids) - known)
    if unknown:
        raise ValidationError(
            f"{path}: output ids must be 1..{p}, found {unknown}"
        )
    T = dataio.column_values(path, header, rows, block["inputCols"])
    vals = None
    if value_col is not None:
        vals = dataio.column_values(path, header, rows, [value_col])[:, 0]
    stars, obs_vals = [], []
    for out_id in range(1, p + 1):
        mask = ids == str(out_id)
        stars.append(T[mask])
        if vals is not None:
            obs_vals.append(vals[mask])
    if value_col is None:
        return stars
    return stars, obs_vals


# ---------------------------------------------------------------------------
# export-plot-data


def _run_export(ctx):
    cfg = ctx.config
    _check_keys(cfg, ("command", "seed", "predictions", "data", "band", "output"),
                ("predictions", "output"), "config")
    pb = _need(cfg, "predictions", "config")
    _check_keys(pb, ("path",), ("path",), "predictions")
    path = ctx.in_path(pb["path"])
    header, rows = dataio.read_table(path)
    for col in ("mean", "sd"):
        if col not in header:
            raise ValidationError(f"{path}: predictions file lacks column {col!r}")
    t_col = header[0] if header[0] not in ("output",) else header[1]
    level = 0.95
    if cfg.get("band"):
        _check_keys(cfg["band"], ("level",), (), "band")
        level = float(cfg["band"].get("level", 0.95))
        if not 0.0 < level < 1.0:
            raise ValidationError("band.level must be in (0, 1)")
    z = float(ndtri(0.5 * (1.0 + level)))
    t = dataio.column_values(path, header, rows, [t_col])[:, 0]
    mean = dataio.column_values(path, header, rows, ["mean"])[:, 0]
    sd = dataio.column_values(path, header, rows, ["sd"])[:, 0]
    if "output" in header:
        j = header.index("output")
        labels = [f"prediction-{row[j].strip()}" for row in rows]
    else:
        labels = ["prediction"] * len(rows)
    tidy = []
    for i in range(len(rows)):
        tidy.append({"series": labels[i], "t": t[i], "value": mean[i],
                     "lo": mean[i] - z * sd[i], "hi": mean[i] + z * sd[i]})
    if cfg.get("data"):
        db = cfg["data"]
        _check_keys(db, ("path", "inputCol", "responseCols"),
                    ("path", "inputCol", "responseCols"), "data")
        dpath = ctx.in_path(db["path"])
        h2, r2 = dataio.read_table(dpath)
        td = dataio.column_values(dpath, h2, r2, [db["inputCol"]])[:, 0]
        for col in db["responseCols"]:
            vals = dataio.column_values(dpath, h2, r2, [col])[:, 0]
            for i in range(td.size):
                tidy.append({"series": f"data-{col}", "t": td[i], "value": vals[i],
                             "lo": np.nan, "hi": np.nan})
    out = _need(cfg, "output", "config")
    _check_keys(out, ("table", "figure"), ("table",), "output")
    dataio.write_csv(
        ctx.out_path(out["table"]),
        ["series", "t", "value", "lo", "hi"],
        [[e["series"] for e in tidy],
         [e["t"] for e in tidy],
         [e["value"] for e in tidy],
         ["" if not np.isfinite(e["lo"]) else repr(float(e["lo"])) for e in tidy],
         ["" if not np.isfinite(e["hi"]) else repr(float(e["hi"])) for e in tidy]],
    )
    if out.get("figure"):
        plotting.render_series_figure(tidy, ctx.out_path(out["figure"]))
    return {"rows": len(tidy)}

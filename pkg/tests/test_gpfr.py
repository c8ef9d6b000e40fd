"""GP functional regression: two-step fit, type I and type II prediction."""

import numpy as np
import pytest

from funcgp import fr, gpfr, simulate
from funcgp.errors import ValidationError
from funcgp.kernels import HyperParams, KernelSpec


def benchmark_setup(seed=42, M=20, n=50):
    """Function-on-scalar curves with a GP residual driven by a covariate."""
    rng = np.random.default_rng(seed)
    t = np.linspace(-4.0, 4.0, n)
    u = np.column_stack([rng.normal(0, 1, M), rng.normal(10, 5, M)])
    beta = np.vstack([np.ones(n), np.sin((0.5 * t) ** 3)])
    x = np.exp(t)[None, :] + rng.normal(0, 0.1, size=(M, 1))
    spec = KernelSpec(("pow.ex",), 1, gamma=1.0)
    hp = HyperParams.from_natural(spec, {"pow.ex.v": 2.0, "pow.ex.w1": 0.1, "noise": 1.0})
    sim = simulate.simulate_gpfr(rng, t, u, beta, spec, hp, x_curves=[x], gp_reg=0)
    return dict(rng=rng, t=t, u=u, beta=beta, x=x, spec=spec, hp=hp, sim=sim)


@pytest.fixture(scope="module")
def fitted_benchmark():
    setup = benchmark_setup()
    model = gpfr.fit(setup["sim"]["responses"], setup["t"], u_reg=setup["u"],
                     gp_reg=setup["x"], kernel=("pow.ex",), gamma=1.0,
                     fy_spec=fr.SmoothSpec(nbasis=23, lam=1e-4),
                     restarts=3, seed=7)
    return setup, model


def new_curve(setup, seed=77, n_new=60):
    rng = np.random.default_rng(seed)
    t_new = np.linspace(-4.0, 4.0, n_new)
    u_new = np.array([rng.normal(0, 1), rng.normal(10, 5)])
    beta_new = np.vstack([np.ones(n_new), np.sin((0.5 * t_new) ** 3)])
    x_new = np.exp(t_new) + rng.normal(0, 0.1)
    sim = simulate.simulate_gpfr(rng, t_new, u_new[None, :], beta_new,
                                 setup["spec"], setup["hp"],
                                 x_curves=[x_new[None, :]], gp_reg=0)
    return t_new, u_new, x_new, sim["responses"][0]


# ---------------------------------------------------------------------------
# fitting


def test_fit_estimates_noise_variance(fitted_benchmark):
    _, model = fitted_benchmark
    assert model.gp.report.converged
    assert 0.5 <= model.noise_variance <= 2.0


def test_residual_decomposition_is_reproducible(fitted_benchmark):
    setup, model = fitted_benchmark
    for m in (0, 5, 19):
        mu_m = fr.fr_mean_eval(model.fr_mean, setup["u"][m], None, setup["t"])
        resid = setup["sim"]["responses"][m] - mu_m
        np.testing.assert_allclose(model.residuals[m], resid, atol=1e-10)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # flat optimum expected
def test_exact_mean_data_gives_near_zero_insample_error():
    rng = np.random.default_rng(3)
    M, n, H = 12, 60, 9
    t = np.linspace(0.0, 1.0, n)
    basis = fr.BasisSystem("bspline", H, (0.0, 1.0), norder=4)
    Phi = fr.basis_eval(basis, t)
    u = rng.normal(size=(M, 2))
    B_true = rng.normal(size=(H, 2))
    responses = np.vstack([Phi @ (B_true @ u[m]) for m in range(M)])
    model = gpfr.fit(responses, t, u_reg=u, gp_reg="time", kernel=("pow.ex",),
                     fy_spec=fr.SmoothSpec(nbasis=H, norder=4, lam=0.0),
                     restarts=2, seed=5, fitting=True)
    fitted = np.vstack(model.fitted_mean)
    rmse = np.sqrt(np.mean((fitted - responses) ** 2))
    assert rmse < 1e-3


def test_fitting_flag_controls_insample_arrays(fitted_benchmark):
    setup, model = fitted_benchmark
    assert model.fitted_mean is None and model.fitted_sd is None
    with_fit = gpfr.fit(setup["sim"]["responses"], setup["t"], u_reg=setup["u"],
                        gp_reg=setup["x"], kernel=("pow.ex",), gamma=1.0,
                        fy_spec=fr.SmoothSpec(nbasis=23, lam=1e-4),
                        restarts=1, seed=7, fitting=True)
    assert len(with_fit.fitted_mean) == 20
    assert all(sd.min() > 0 for sd in with_fit.fitted_sd)


def test_fit_needs_at_least_two_curves():
    t = np.linspace(0, 1, 20)
    with pytest.raises(ValidationError):
        gpfr.fit(np.zeros((1, 20)), t, gp_reg="time")


def test_gp_inputs_can_mix_time_and_covariate(fitted_benchmark):
    setup, _ = fitted_benchmark
    model = gpfr.fit(setup["sim"]["responses"], setup["t"], u_reg=setup["u"],
                     gp_reg=["time", setup["x"]], kernel=("pow.ex",), gamma=1.0,
                     fy_spec=fr.SmoothSpec(nbasis=23, lam=1e-4),
                     restarts=2, seed=9)
    assert model.gp.spec.input_dim == 2
    assert model.gp_reg == ("time", "given")
    t_new, u_new, x_new, y_new = new_curve(setup)
    pred = gpfr.predict_type1(model, t_new, y_new, t_new, u_star=u_new,
                              gp_obs=[x_new], gp_star=[x_new])
    assert np.all(np.isfinite(pred.mean)) and np.all(pred.sd > 0)
    p2 = gpfr.predict_type2(model, t_new, u_star=u_new, gp_star=[x_new])
    means, variances = gpfr.type2_components(model, t_new, u_star=u_new,
                                             gp_star=[x_new])
    mean_ref, var_ref = gpfr.mix_equal_weights(means, variances)
    np.testing.assert_allclose(p2.mean, mean_ref, atol=1e-10)
    np.testing.assert_allclose(p2.sd**2, var_ref, atol=1e-10)


# ---------------------------------------------------------------------------
# type I prediction


def test_type1_decomposes_into_mean_plus_conditional(fitted_benchmark):
    setup, model = fitted_benchmark
    t_new, u_new, x_new, y_new = new_curve(setup)
    pred = gpfr.predict_type1(model, t_new, y_new, t_new, u_star=u_new,
                              gp_obs=x_new, gp_star=x_new)
    assert pred.prediction_type == "typeI"
    mu = fr.fr_mean_eval(model.fr_mean, u_new, None, t_new)
    tau = pred.mean - mu
    # the conditional shift of the residual process, via a dense inverse
    from funcgp import kernels

    spec, hp = model.gp.spec, model.gp.hp
    X = x_new[:, None]
    Psi = kernels.cov_matrix(spec, hp, X, X, add_noise=True)
    shift = kernels.cov_matrix(spec, hp, X, X) @ np.linalg.solve(Psi, y_new - mu)
    np.testing.assert_allclose(tau, shift, atol=1e-8)


def test_type1_interpolates_observed_points_noise_free():
    # mean exactly representable in the basis, residuals noise-free GP draws:
    # conditioning on the new curve's observations reproduces them
    rng = np.random.default_rng(11)
    M, n, H = 8, 40, 9
    t = np.linspace(0.0, 1.0, n)
    basis = fr.BasisSystem("bspline", H, (0.0, 1.0), norder=4)
    Phi = fr.basis_eval(basis, t)
    u = rng.normal(size=(M, 2))
    B_true = rng.normal(size=(H, 2))
    spec = KernelSpec(("matern",), 1, nu=1.5)
    hp_free = HyperParams.from_natural(
        spec, {"matern.v": 1.0, "matern.w1": 8.0, "noise": 1e-12})
    sim = simulate.simulate_gpfr(rng, t, u, (Phi @ B_true).T, spec, hp_free,
                                 gp_reg="time")
    model = gpfr.fit(sim["responses"], t, u_reg=u, gp_reg="time",
                     kernel=("matern",), nu=1.5,
                     fy_spec=fr.SmoothSpec(nbasis=H, norder=4, lam=0.0),
                     restarts=3, seed=2)
    assert model.noise_variance < 1e-6
    u_new = rng.normal(size=2)
    sim_new = simulate.simulate_gpfr(rng, t, u_new[None, :], (Phi @ B_true).T,
                                     spec, hp_free, gp_reg="time")
    y_new = sim_new["responses"][0]
    pred = gpfr.predict_type1(model, t, y_new, t, u_star=u_new, noise_free=True)
    assert np.abs(pred.mean - y_new).max() < 1e-6


def test_type1_uncertainty_grows_away_from_observations(fitted_benchmark):
    setup, model = fitted_benchmark
    t_new, u_new, x_new, y_new = new_curve(setup)
    k = 20
    pred = gpfr.predict_type1(model, t_new[:k], y_new[:k], t_new, u_star=u_new,
                              gp_obs=x_new[:k], gp_star=x_new)
    assert np.median(pred.sd[k:]) > np.median(pred.sd[:k])


def test_type1_reverts_to_mean_far_from_observations(fitted_benchmark):
    setup, model = fitted_benchmark
    t_new, u_new, x_new, y_new = new_curve(setup)
    # far in covariate space: x far outside exp([-4, 4])
    t_far = np.array([4.0])
    x_far = np.array([5000.0])
    pred = gpfr.predict_type1(model, t_new[:20], y_new[:20], t_far, u_star=u_new,
                              gp_obs=x_new[:20], gp_star=x_far)
    mu = fr.fr_mean_eval(model.fr_mean, u_new, None, t_far)
    scale = np.abs(setup["sim"]["responses"]).max()
    assert abs(pred.mean[0] - mu[0]) < 1e-3 * scale


def test_type1_variance_monotone_in_observations(fitted_benchmark):
    setup, model = fitted_benchmark
    t_new, u_new, x_new, y_new = new_curve(setup)
    p_small = gpfr.predict_type1(model, t_new[:10], y_new[:10], t_new,
                                 u_star=u_new, gp_obs=x_new[:10], gp_star=x_new)
    p_large = gpfr.predict_type1(model, t_new[:30], y_new[:30], t_new,
                                 u_star=u_new, gp_obs=x_new[:30], gp_star=x_new)
    assert np.all(p_large.sd**2 <= p_small.sd**2 + 1e-10)


def test_type1_requires_observations(fitted_benchmark):
    setup, model = fitted_benchmark
    with pytest.raises(ValidationError):
        gpfr.predict_type1(model, [], [], setup["t"], u_star=setup["u"][0])


# ---------------------------------------------------------------------------
# type II prediction


def test_type2_matches_direct_mixture_computation(fitted_benchmark):
    setup, model = fitted_benchmark
    t_new, u_new, x_new, _ = new_curve(setup)
    pred = gpfr.predict_type2(model, t_new, u_star=u_new, gp_star=x_new)
    assert pred.prediction_type == "typeII"
    means, variances = gpfr.type2_components(model, t_new, u_star=u_new,
                                             gp_star=x_new)
    w = 1.0 / model.n_curves
    mean_ref = w * means.sum(axis=0)
    var_ref = w * variances.sum(axis=0) + (w * (means**2).sum(axis=0) - mean_ref**2)
    np.testing.assert_allclose(pred.mean, mean_ref, atol=1e-8)
    np.testing.assert_allclose(pred.sd**2, var_ref, atol=1e-8)
    # dispersion term is a variance of means, so the mixture variance
    # dominates the mixed component variances
    assert np.all(pred.sd**2 >= w * variances.sum(axis=0) - 1e-12)


def test_mixture_hand_computable_case():
    mean, var = gpfr.mix_equal_weights([[1.0], [3.0]], [[1.0], [1.0]])
    assert mean[0] == pytest.approx(2.0, abs=0)
    assert var[0] == pytest.approx(2.0, abs=1e-15)


def test_type2_mean_only_equals_fr_mean(fitted_benchmark):
    setup, model = fitted_benchmark
    t_new, u_new, x_new, _ = new_curve(setup)
    pred = gpfr.predict_type2(model, t_new, u_star=u_new, gp_star=x_new,
                              mean_only=True)
    mu = fr.fr_mean_eval(model.fr_mean, u_new, None, t_new)
    np.testing.assert_array_equal(pred.mean, mu)


def test_type2_single_curve_equals_type1_on_that_curve(fitted_benchmark):
    setup, model = fitted_benchmark
    single = gpfr.GPFRModel(
        model.fr_mean, model.gp, model.gp_reg,
        model.t_grids[:1], model.responses[:1], model.residuals[:1],
        model.gp_inputs[:1],
    )
    t_new = np.linspace(-4, 4, 30)
    x_new = np.exp(t_new)
    u0 = setup["u"][0]
    p2 = gpfr.predict_type2(single, t_new, u_star=u0, gp_star=x_new)
    p1 = gpfr.predict_type1(model, setup["t"], setup["sim"]["responses"][0],
                            t_new, u_star=u0, gp_obs=setup["x"][0],
                            gp_star=x_new)
    np.testing.assert_allclose(p2.mean, p1.mean, atol=1e-8)
    np.testing.assert_allclose(p2.sd, p1.sd, atol=1e-8)


def test_type2_degenerate_mixture_of_identical_curves(fitted_benchmark):
    setup, model = fitted_benchmark
    dup = gpfr.GPFRModel(
        model.fr_mean, model.gp, model.gp_reg,
        [model.t_grids[0]] * 4, [model.responses[0]] * 4,
        [model.residuals[0]] * 4, [model.gp_inputs[0]] * 4,
    )
    t_new = np.linspace(-4, 4, 25)
    x_new = np.exp(t_new)
    u0 = setup["u"][0]
    p2 = gpfr.predict_type2(dup, t_new, u_star=u0, gp_star=x_new)
    means, variances = gpfr.type2_components(dup, t_new, u_star=u0, gp_star=x_new)
    # identical components: the dispersion term vanishes
    np.testing.assert_allclose(p2.sd**2, variances[0], atol=1e-12)
    np.testing.assert_allclose(p2.mean, means[0], atol=1e-12)

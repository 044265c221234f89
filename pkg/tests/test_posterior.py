import math

import numpy as np
import pytest

from plainbayes.data_io import Dataset
from plainbayes.distributions import Exponential, HalfNormal, Normal, Uniform
from plainbayes.errors import (
    DimensionMismatch,
    MissingResponseColumn,
    NonFiniteDensity,
    UnresolvedVariable,
)
from plainbayes.posterior import build_posterior
from plainbayes.spec_schema import (
    DistributionSpec,
    LikelihoodSpec,
    ModelSpec,
    parse_model_json,
    validate_model,
)

from conftest import EXPERIMENT_MODEL_JSON


def _experiment_pf(dataset, **kwargs):
    spec = parse_model_json(EXPERIMENT_MODEL_JSON)
    vm = validate_model(spec, dataset.column_names())
    return build_posterior(vm, dataset, **kwargs)


class TestLogDensity:
    def test_hand_summed_single_row(self, tiny_dataset):
        # alpha=0 (logistic z=0), beta=2 (z=ln 2), sigma=15 (z=ln 15)
        pf = _experiment_pf(tiny_dataset)
        z = np.array([0.0, math.log(2.0), math.log(15.0)])

        alpha_prior = Uniform(-25, 25)
        beta_prior = Exponential(0.5)
        sigma_prior = HalfNormal(15)
        expected = (
            alpha_prior.log_pdf(0.0)
            + alpha_prior.transform().log_jacobian(0.0)
            + beta_prior.log_pdf(2.0)
            + beta_prior.transform().log_jacobian(math.log(2.0))
            + sigma_prior.log_pdf(15.0)
            + sigma_prior.transform().log_jacobian(math.log(15.0))
            + Normal(0.0, 15.0).log_pdf(0.0)  # y=0 given mu = alpha + beta*0 = 0
        )
        assert pf.log_density(z) == pytest.approx(expected, rel=1e-14)

    def test_prior_only_hook(self, experiment_dataset):
        pf_full = _experiment_pf(experiment_dataset)
        pf_prior = _experiment_pf(experiment_dataset, include_likelihood=False)
        z = np.array([0.3, -0.2, 0.5])
        priors = [Uniform(-25, 25), Exponential(0.5), HalfNormal(15)]
        expected = sum(
            d.log_pdf(d.transform().forward(zi)) + d.transform().log_jacobian(zi)
            for d, zi in zip(priors, z)
        )
        assert pf_prior.log_density(z) == pytest.approx(expected, rel=1e-14)
        assert pf_full.log_density(z) != pf_prior.log_density(z)

    def test_deterministic_bit_for_bit(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        z = np.array([0.1, 0.2, 0.3])
        assert pf.log_density(z) == pf.log_density(z)
        v1, g1 = pf.log_density_and_grad(z)
        v2, g2 = pf.log_density_and_grad(z)
        assert v1 == v2 and np.array_equal(g1, g2)

    def test_translation_of_sigma_coordinate(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        z = np.array([0.0, 0.1, 1.0])
        delta = 0.37
        shifted = z.copy()
        shifted[2] += delta
        assert pf.log_density(shifted) == pf.log_density(np.array([0.0, 0.1, 1.0 + delta]))

    def test_density_higher_near_truth(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        tf_alpha = Uniform(-25, 25).transform()
        z_true = np.array([tf_alpha.inverse(2.5), math.log(1.8), math.log(15.0)])
        z_far = np.array([tf_alpha.inverse(24.0), math.log(100.0), math.log(100.0)])
        assert pf.log_density(z_true) > pf.log_density(z_far)

    def test_never_nan(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        rng = np.random.default_rng(0)
        for _ in range(200):
            value = pf.log_density(rng.normal(scale=30, size=3))
            assert not math.isnan(value)

    def test_dimension_mismatch(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        with pytest.raises(DimensionMismatch):
            pf.log_density(np.zeros(2))
        with pytest.raises(DimensionMismatch):
            pf.constrain(np.zeros(5))

    def test_missing_response_column(self, experiment_dataset):
        spec = parse_model_json(EXPERIMENT_MODEL_JSON)
        data = Dataset({"X": experiment_dataset.columns["X"]})
        vm = validate_model(spec, {"X", "y"})
        with pytest.raises(MissingResponseColumn):
            build_posterior(vm, data)

    def test_formula_column_missing_from_dataset(self, experiment_dataset):
        spec = parse_model_json(EXPERIMENT_MODEL_JSON)
        vm = validate_model(spec, {"X", "y"})
        data = Dataset({"y": experiment_dataset.columns["y"]})
        with pytest.raises(UnresolvedVariable):
            build_posterior(vm, data)

    def test_nonfinite_mean_is_hard_error(self):
        # alpha / X explodes on the X=0 row
        spec = ModelSpec(
            priors={
                "alpha": DistributionSpec("Normal", {"mu": 0, "sigma": 1}),
                "sigma": DistributionSpec("HalfNormal", {"sigma": 1}),
            },
            likelihood=LikelihoodSpec(formula_source="alpha / X"),
        )
        data = Dataset({"X": np.array([1.0, 0.0]), "y": np.array([0.0, 0.0])})
        pf = build_posterior(validate_model(spec, data.column_names()), data)
        with pytest.raises(NonFiniteDensity) as err:
            pf.log_density(np.array([0.5, 0.0]))
        assert err.value.row == 1

    def test_row_contributions_additive(self, experiment_dataset):
        x = experiment_dataset.columns["X"]
        y = experiment_dataset.columns["y"]
        a = Dataset({"X": x[:40], "y": y[:40]})
        b = Dataset({"X": x[40:], "y": y[40:]})
        both = Dataset({"X": x, "y": y})
        z = np.array([0.4, 0.1, 0.9])
        spec = parse_model_json(EXPERIMENT_MODEL_JSON)

        def logp(ds):
            return build_posterior(validate_model(spec, ds.column_names()), ds).log_density(z)

        prior = build_posterior(
            validate_model(spec, both.column_names()), both, include_likelihood=False
        ).log_density(z)
        assert logp(both) - logp(a) - logp(b) == pytest.approx(-prior, rel=1e-12)

    def test_prior_dominates_at_huge_sigma(self, experiment_dataset):
        # with sigma pushed to ~1e8 the likelihood is flat: density differences
        # between two points approach the prior+Jacobian differences
        pf = _experiment_pf(experiment_dataset)
        pf_prior = _experiment_pf(experiment_dataset, include_likelihood=False)
        z_sigma = 18.5
        z1 = np.array([0.2, 0.1, z_sigma])
        z2 = np.array([-0.4, 0.6, z_sigma])
        full_diff = pf.log_density(z1) - pf.log_density(z2)
        prior_diff = pf_prior.log_density(z1) - pf_prior.log_density(z2)
        assert abs(full_diff - prior_diff) < 1e-3


class TestConstrain:
    def test_zero_vector(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        out = pf.constrain(np.zeros(3))
        assert out["alpha"] == pytest.approx(0.0, abs=1e-12)
        assert out["beta"] == 1.0
        assert out["sigma"] == 1.0

    def test_round_trip_through_inverse(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        z = np.array([0.7, -1.2, 0.4])
        constrained = pf.constrain(z)
        back = [tf.inverse(constrained[name]) for name, tf in zip(pf.param_names, pf.transforms)]
        np.testing.assert_allclose(back, z, atol=1e-12)

    def test_uniform_saturation(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        out = pf.constrain(np.array([40.0, 0.0, 0.0]))
        assert abs(out["alpha"] - 25.0) <= 1e-12


# ---------------------------------------------------------------------------
# Gradient suite


def _random_model_and_data(rng):
    n_priors = int(rng.integers(1, 5))
    names = [f"p{i}" for i in range(n_priors)]
    priors = {}
    for name in names:
        kind = int(rng.integers(0, 4))
        if kind == 0:
            priors[name] = DistributionSpec(
                "Normal", {"mu": float(rng.uniform(-5, 5)), "sigma": float(rng.uniform(0.3, 10))}
            )
        elif kind == 1:
            priors[name] = DistributionSpec("HalfNormal", {"sigma": float(rng.uniform(0.3, 10))})
        elif kind == 2:
            lo = float(rng.uniform(-20, 0))
            priors[name] = DistributionSpec("Uniform", {"lower": lo, "upper": lo + float(rng.uniform(1, 30))})
        else:
            priors[name] = DistributionSpec("Exponential", {"lam": float(rng.uniform(0.1, 3))})
    noise = str(rng.choice(names))
    priors[noise] = DistributionSpec("HalfNormal", {"sigma": float(rng.uniform(1, 10))})

    # linear-ish random formula over priors and the data column (no division,
    # so no singular surfaces confound the finite differences)
    terms = []
    for name in names:
        form = int(rng.integers(0, 3))
        terms.append((name, f"{name} * X", f"{name} * {name}")[form])
    formula_source = " + ".join(terms) if rng.random() < 0.8 else " - ".join(terms)

    n = int(rng.integers(3, 12))
    data = Dataset({"X": rng.uniform(-3, 3, n), "y": rng.uniform(-5, 5, n)})
    spec = ModelSpec(priors=priors, likelihood=LikelihoodSpec(formula_source=formula_source, noise_param=noise))
    return spec, data


def gradient_check(pf, z, rel_tol=1e-6, abs_tol=1e-4):
    value, grad = pf.log_density_and_grad(z)
    assert math.isfinite(value)
    for i in range(len(z)):
        h = 1e-6 * max(1.0, abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fd = (pf.log_density(zp) - pf.log_density(zm)) / (2 * h)
        if abs(grad[i]) < 1e-3 and abs(fd) < 1e-3:
            assert abs(grad[i] - fd) <= abs_tol
        else:
            assert abs(grad[i] - fd) <= rel_tol * max(abs(grad[i]), abs(fd)) + 1e-10


class TestGradient:
    def test_random_models_match_finite_differences(self):
        rng = np.random.default_rng(2718)
        for _ in range(100):
            spec, data = _random_model_and_data(rng)
            vm = validate_model(spec, data.column_names())
            pf = build_posterior(vm, data)
            z = rng.normal(scale=0.8, size=pf.dimension)
            gradient_check(pf, z)

    def test_experiment_model_gradient(self, experiment_dataset):
        pf = _experiment_pf(experiment_dataset)
        rng = np.random.default_rng(11)
        for _ in range(20):
            gradient_check(pf, rng.normal(scale=1.0, size=3))

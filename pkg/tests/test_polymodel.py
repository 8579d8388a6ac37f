import math

import numpy as np
import pytest
from scipy import stats

from polymoment import (
    CoefficientTensor,
    CustomQuantile,
    DependenceRegime,
    DoubleExpDiscrete,
    LogPerturbedPareto,
    LogPowerOnly,
    ParetoPower,
    PolynomialModel,
    Rademacher,
    Weibull,
    empirical_moments,
    enumerate_indices,
    natural_envelope,
    natural_moments_pareto_power,
    normalize_model,
    sample_Q,
    sample_R,
    sample_cells,
    sample_reverse_V,
    save_samples,
    variance_of_Q,
)
from polymoment.polymodel import (
    cell_abs_moment,
    cell_sigma,
    enumeration_states,
    model_from_config,
    model_to_config,
)


def common_model(d, n, dists, tensor=None, sharing="none", tag="common_independent",
                 direction="forward", multiplicities=None):
    slots = len(multiplicities) if multiplicities else d
    if tensor is None:
        tensor = CoefficientTensor.uniform(slots, n)
    return PolynomialModel(
        d=d,
        n=n,
        coefficients=tensor,
        regime=DependenceRegime(tag, direction),
        distributions=tuple(dists),
        sharing=sharing,
        multiplicities=multiplicities,
    )


class TestIndexEnumeration:
    def test_pairs(self):
        assert list(enumerate_indices(2, 3)) == [(1, 2), (1, 3), (2, 3)]

    def test_last_fixed(self):
        assert list(enumerate_indices(2, 3, last_fixed=3)) == [(1, 3), (2, 3)]

    def test_count(self):
        assert sum(1 for _ in enumerate_indices(3, 10)) == 120

    def test_singleton_family(self):
        assert list(enumerate_indices(1, 5, last_fixed=5)) == [(5,)]

    def test_errors(self):
        with pytest.raises(ValueError):
            list(enumerate_indices(4, 3))
        with pytest.raises(ValueError):
            list(enumerate_indices(2, 5, last_fixed=1))


class TestCoefficientTensor:
    def test_uniform_is_normalized(self):
        t = CoefficientTensor.uniform(2, 5)
        assert t.normalized
        assert t.is_uniform
        assert t.norm2() == pytest.approx(1.0)

    def test_single(self):
        t = CoefficientTensor.single(2, 5)
        assert t.entries == {(1, 2): 1.0}
        assert t.normalized

    def test_random_unit(self):
        t = CoefficientTensor.random_unit(2, 6, np.random.default_rng(1))
        assert t.norm2() == pytest.approx(1.0)
        assert not t.is_uniform

    def test_validation(self):
        with pytest.raises(ValueError):
            CoefficientTensor(2, 3, {(2, 2): 1.0})
        with pytest.raises(ValueError):
            CoefficientTensor(2, 3, {(1, 4): 1.0})
        with pytest.raises(ValueError):
            CoefficientTensor(2, 3, {(1,): 1.0})

    def test_restrict(self):
        t = CoefficientTensor.uniform(2, 4)
        sub = t.restrict(2, 4)
        assert set(sub.entries) == {(2, 3), (2, 4), (3, 4)}


class TestVarianceIdentity:
    def test_unit_normalised(self):
        t = CoefficientTensor.uniform(2, 3)
        assert variance_of_Q(t, np.ones((3, 2))) == pytest.approx(1.0)

    def test_single_entry(self):
        t = CoefficientTensor(2, 3, {(1, 2): 1.0})
        sig = np.ones((3, 2))
        sig[0, 0] = 2.0
        sig[1, 1] = 3.0
        assert variance_of_Q(t, sig) == pytest.approx(36.0)

    def test_empty_tensor(self):
        t = CoefficientTensor(2, 3, {})
        assert variance_of_Q(t, np.ones((3, 2))) == 0.0

    def test_shape_mismatch(self):
        t = CoefficientTensor.uniform(2, 5)
        with pytest.raises(ValueError):
            variance_of_Q(t, np.ones((3, 2)))


class TestDistributions:
    def test_pareto_closed_forms_match_quadrature(self):
        # LogPerturbedPareto with kappa = 0 is the same variable as
        # ParetoPower, so the generic quadrature must match the closed form
        pp = ParetoPower(4.0)
        lp = LogPerturbedPareto(4.0, 0.0)
        for p in [1.0, 2.0, 3.0, 3.5]:
            assert lp.raw_abs_moment(p) == pytest.approx(pp.raw_abs_moment(p), rel=1e-9)
        assert lp.mean() == pytest.approx(pp.mean(), rel=1e-9)

    def test_pareto_mean(self):
        assert ParetoPower(4.0).mean() == pytest.approx(4.0 / 3.0)

    def test_log_power_gamma_moments(self):
        d = LogPowerOnly(mu=1.5)
        assert d.raw_abs_moment(2.0) == pytest.approx(math.gamma(4.0))
        rng = np.random.default_rng(5)
        xs = d.survival_quantile(1.0 - rng.random(200000))
        est = empirical_moments(xs, 2.0)
        assert abs(est.value - math.gamma(4.0) ** 0.5) <= 3 * est.stderr

    def test_weibull_moments(self):
        d = Weibull(c=2.0, alpha=1.5)
        want = 2.0 ** (-2.0 / 1.5) * math.gamma(1.0 + 2.0 / 1.5)
        assert d.raw_abs_moment(2.0) == pytest.approx(want, rel=1e-12)

    def test_rademacher(self):
        d = Rademacher()
        assert d.mean() == 0.0
        assert d.variance() == 1.0
        vals = d.survival_quantile(np.array([0.2, 0.8]))
        assert set(vals.tolist()) == {1.0, -1.0}

    def test_double_exp_atoms(self):
        d = DoubleExpDiscrete(r=4.0, beta=1.0)
        vals, probs = d.atoms()
        assert probs.sum() == pytest.approx(1.0)
        assert np.all(np.diff(vals) > 0)
        # sampler hits the atoms with the right frequencies
        rng = np.random.default_rng(3)
        xs = d.survival_quantile(1.0 - rng.random(100000))
        top = float(np.mean(xs == vals[0]))
        assert abs(top - probs[0]) < 3 * math.sqrt(probs[0] * (1 - probs[0]) / 100000)

    def test_double_exp_moment_singularity_order(self):
        # the p-th norm has a pure power singularity of order beta at the
        # edge (the tail keeps log-periodic spikes: the moment description
        # is smoother than the tail one)
        r, beta = 4.0, 1.5
        d = DoubleExpDiscrete(r=r, beta=beta)
        gaps = np.array([0.2, 0.1, 0.05, 0.02, 0.01])
        vals = np.array(
            [d.raw_abs_moment(r - g) ** (1.0 / (r - g)) * g ** beta for g in gaps]
        )
        assert vals.max() / vals.min() < 5.0

    def test_centered_standardized_transforms(self):
        d = ParetoPower(6.0, centered=True, standardized=True)
        assert cell_sigma(d, symmetrized=False) == pytest.approx(1.0)
        assert cell_abs_moment(d, 2.0, symmetrized=False) == pytest.approx(1.0, rel=1e-9)

    def test_symmetrized_scale(self):
        d = ParetoPower(6.0, standardized=True)
        # symmetrised cells have unit second moment
        assert cell_abs_moment(d, 2.0, symmetrized=True) == pytest.approx(1.0, rel=1e-12)

    def test_custom_atoms(self):
        d = CustomQuantile(
            quantile=lambda u: np.where(u < 0.25, 1.0, np.where(u < 0.75, 0.0, -1.0)),
            atom_values=(-1.0, 0.0, 1.0),
            atom_probs=(0.25, 0.5, 0.25),
        )
        assert d.mean() == pytest.approx(0.0)
        assert d.variance() == pytest.approx(0.5)


class TestSampling:
    def test_single_rademacher(self):
        model = common_model(1, 1, [Rademacher()], tensor=CoefficientTensor.single(1, 1))
        q = sample_Q(model, 0, 2000)
        assert set(np.unique(q)) <= {-1.0, 1.0}
        assert abs(q.mean()) < 0.1

    def test_determinism(self):
        model = common_model(2, 4, [ParetoPower(6.0), ParetoPower(8.0)])
        a = sample_Q(model, 42, 5000)
        b = sample_Q(model, 42, 5000)
        assert np.array_equal(a, b)
        c = sample_Q(model, 43, 5000)
        assert not np.array_equal(a, c)

    def test_rademacher_exact_enumeration(self):
        model = common_model(2, 3, [Rademacher(), Rademacher()])
        cells, probs = enumeration_states(model)
        assert cells.shape[0] == 2 ** 6
        assert probs.sum() == pytest.approx(1.0)
        q = sample_Q(model, 1, 400000)
        for p in [1, 2, 3, 4]:
            from polymoment.mcverify import brute_force_moments

            exact = brute_force_moments(model, [p])[0]
            est = empirical_moments(q, p)
            assert abs(est.power_mean - exact) <= 4 * est.power_mean_stderr

    def test_variance_identity_light_tails(self):
        for dists in ([Rademacher(), Rademacher()], [Weibull(1.0, 2.0, centered=True), Weibull(1.0, 2.0, centered=True)]):
            model = common_model(2, 4, dists)
            q = sample_Q(model, 7, 200000)
            want = variance_of_Q(model.coefficients, model.sigma_matrix())
            est_var = q.var()
            se = q.var() * math.sqrt(2.0 / q.size) * 3  # crude but adequate
            assert abs(est_var - want) < max(4 * se, 0.05 * want)

    def test_martingale_conditional_mean_zero(self):
        model = common_model(
            2, 6,
            [ParetoPower(6.0, standardized=True), ParetoPower(8.0, standardized=True)],
            tag="martingale",
        )
        cells = sample_cells(model, 11, 150000)
        # library of bounded, past-measurable test functions
        past2 = cells[:, :2, :].sum(axis=(1, 2))
        tests = [np.sign(past2), np.tanh(past2), np.ones(cells.shape[0])]
        for g in tests:
            for m in range(2):
                prod = cells[:, 2, m] * g
                se = prod.std() / math.sqrt(prod.size)
                assert abs(prod.mean()) <= 3 * se

    def test_reverse_martingale_conditional_mean_zero(self):
        model = common_model(
            2, 6,
            [ParetoPower(6.0, standardized=True), ParetoPower(8.0, standardized=True)],
            tag="martingale", direction="reverse",
        )
        cells = sample_cells(model, 13, 150000)
        # conditioning on the future now
        future = cells[:, 4:, :].sum(axis=(1, 2))
        for m in range(2):
            prod = cells[:, 3, m] * np.sign(future)
            se = prod.std() / math.sqrt(prod.size)
            assert abs(prod.mean()) <= 3 * se

    def test_sign_flip_invariance(self):
        # flipping the sign of one coefficient leaves |Q| distribution
        # unchanged for sign-symmetric inputs
        tensor = CoefficientTensor.uniform(2, 4)
        flipped_entries = dict(tensor.entries)
        first = next(iter(flipped_entries))
        flipped_entries[first] = -flipped_entries[first]
        flipped = CoefficientTensor(2, 4, flipped_entries)
        dists = [Rademacher(), Rademacher()]
        # round away float jitter so the discrete atoms coincide exactly
        q1 = np.round(np.abs(sample_Q(common_model(2, 4, dists), 5, 40000)), 9)
        q2 = np.round(
            np.abs(sample_Q(common_model(2, 4, dists, tensor=flipped), 6, 40000)), 9
        )
        ks = stats.ks_2samp(q1, q2)
        assert ks.pvalue > 0.001

    def test_shared_all_moment_boundary(self):
        # with every cell driven by one draw the sum is a power of a single
        # Pareto variable: moments exist only below the combined exponent 2
        model = common_model(
            2, 4, [ParetoPower(4.0), ParetoPower(4.0)], sharing="all", tag="martingale"
        )
        assert model.combined_r == pytest.approx(2.0)
        q = np.abs(sample_Q(model, 3, 100000))
        est_lo = empirical_moments(q, 1.5)
        assert math.isfinite(est_lo.value)
        # direct check: |Q| = sum b * eps^(1/2) has the Pareto index 2
        tail_ratio = float(np.mean(q > 50.0) / np.mean(q > 25.0))
        assert tail_ratio == pytest.approx(0.25, abs=0.15)

    def test_regime_validation(self):
        with pytest.raises(ValueError):
            common_model(2, 4, [Rademacher(), Rademacher()], sharing="vectors")

    def test_moment_boundary_combined(self):
        model = common_model(2, 4, [ParetoPower(6.0), ParetoPower(8.0)])
        assert model.combined_r == pytest.approx(1.0 / (1 / 6 + 1 / 8))


class TestReverseWindow:
    def test_full_window_matches_sample_q(self):
        model = common_model(2, 5, [ParetoPower(6.0), ParetoPower(8.0)])
        v = sample_reverse_V(model, 21, 30000, 1, 5)
        q = sample_Q(model, 21, 30000)
        assert np.array_equal(v, q)

    def test_minimal_window_single_tuple(self):
        model = common_model(2, 5, [Rademacher(), Rademacher()])
        v = sample_reverse_V(model, 2, 10000, 4, 5)
        b = model.coefficients.entries[(4, 5)]
        assert set(np.round(np.abs(v), 12).tolist()) <= {round(abs(b), 12)}

    def test_window_variance_matches_restricted_tensor(self):
        model = common_model(2, 6, [Rademacher(), Rademacher()])
        v = sample_reverse_V(model, 9, 300000, 3, 6)
        sub = model.coefficients.restrict(3, 6)
        want = variance_of_Q(sub, np.ones((6, 2)))
        se = v.var() * math.sqrt(2.0 / v.size) * 4
        assert abs(v.var() - want) < max(se, 0.02 * want)

    def test_window_too_small(self):
        model = common_model(2, 5, [Rademacher(), Rademacher()])
        with pytest.raises(ValueError):
            sample_reverse_V(model, 0, 2000, 5, 5)


class TestPolynomialModels:
    def test_off_diagonal_reduces_to_q(self):
        dists = [ParetoPower(6.0, centered=True), ParetoPower(6.0, centered=True)]
        q_model = common_model(2, 4, dists)
        r_model = common_model(2, 4, dists, multiplicities=(1, 1))
        q = sample_Q(q_model, 17, 150000)
        r = sample_R(r_model, 17, 150000)
        assert np.allclose(q, r)

    def test_rademacher_diagonal_degenerates(self):
        model = common_model(
            2, 5, [Rademacher()], multiplicities=(2,),
            tensor=CoefficientTensor.uniform(1, 5),
        )
        r = sample_R(model, 1, 5000)
        assert np.all(r == 0.0)

    def test_diagonal_variance_quadrature_oracle(self):
        dist = ParetoPower(6.0)
        model = common_model(
            2, 10, [dist], multiplicities=(2,),
            tensor=CoefficientTensor.uniform(1, 10),
        )
        r = sample_R(model, 23, 400000)
        # oracle: Var(X^2) for the uncentered Pareto-power by closed moments
        ex2 = dist.raw_abs_moment(2.0)
        ex4 = dist.raw_abs_moment(4.0)
        want = ex4 - ex2 ** 2  # sum b^2 = 1
        est = empirical_moments(r, 2.0)
        assert abs(est.power_mean - want) <= 4 * est.power_mean_stderr

    def test_multiplicity_validation(self):
        with pytest.raises(ValueError):
            common_model(2, 4, [ParetoPower(6.0)], multiplicities=(3,))
        with pytest.raises(ValueError):
            common_model(
                2, 4, [ParetoPower(6.0)], multiplicities=(2,), tag="martingale"
            )


class TestNormalize:
    def test_idempotent_when_standardized(self):
        model = common_model(
            2, 4,
            [ParetoPower(6.0, centered=True, standardized=True),
             ParetoPower(8.0, centered=True, standardized=True)],
        )
        normed = normalize_model(model)
        assert normed.coefficients.entries == model.coefficients.entries
        q1 = sample_Q(model, 3, 20000)
        q2 = sample_Q(normed, 3, 20000)
        assert np.array_equal(q1, q2)

    def test_sigma_two_rescales_coefficients(self):
        # atoms +-2: sigma = 2 per cell; weighted-normalised tensor satisfies
        # sum b^2 sigma^4 = 1, so b = uniform / 4
        two = CustomQuantile(
            quantile=lambda u: np.where(u <= 0.5, 2.0, -2.0),
            atom_values=(-2.0, 2.0),
            atom_probs=(0.5, 0.5),
        )
        base = CoefficientTensor.uniform(2, 4)
        quarter = CoefficientTensor(2, 4, {k: v / 4.0 for k, v in base.entries.items()})
        model = common_model(2, 4, [two, two], tensor=quarter)
        normed = normalize_model(model)
        # coefficients scaled by sigma^2 = 4, inputs halved
        for key, val in normed.coefficients.entries.items():
            assert val == pytest.approx(base.entries[key], rel=1e-12)
        assert normed.coefficients.normalized
        q1 = sample_Q(model, 8, 20000)
        q2 = sample_Q(normed, 8, 20000)
        assert np.allclose(q1, q2, rtol=1e-12)
        assert q2.var() == pytest.approx(1.0, rel=0.05)

    def test_infinite_variance_rejected(self):
        model = common_model(1, 3, [ParetoPower(2.0)], tensor=CoefficientTensor.uniform(1, 3))
        with pytest.raises(ValueError):
            normalize_model(model)


class TestNaturalEnvelope:
    def test_dominates_sampled_cells(self):
        for tag in ["common_independent", "martingale"]:
            dist = ParetoPower(6.0, centered=True, standardized=True)
            env = natural_envelope(dist, tag)
            model = common_model(1, 3, [dist], tag=tag)
            cells = sample_cells(model, 31, 200000)
            xs = cells[:, 0, 0]
            for p in [1.5, 2.5, 4.0]:
                est = empirical_moments(xs, p)
                assert est.value - 3 * est.stderr <= env(p)

    def test_pareto_closed_form_nodes(self):
        dist = ParetoPower(4.0)
        env = natural_envelope(dist, "common_independent")
        for p in env.p_grid[:: 32]:
            p = float(p)
            assert env(p) == pytest.approx(natural_moments_pareto_power(4.0, p), rel=1e-9)


class TestSerialization:
    def test_save_samples_roundtrip(self, tmp_path):
        values = np.array([1.5, -2.25, 3.75])
        f64 = tmp_path / "x.f64"
        save_samples(str(f64), values, "f64")
        assert np.array_equal(np.fromfile(f64, dtype="<f8"), values)
        csv = tmp_path / "x.csv"
        save_samples(str(csv), values, "csv")
        assert np.allclose(np.loadtxt(csv), values)

    def test_model_config_roundtrip(self):
        model = common_model(
            2, 5,
            [ParetoPower(6.0, centered=True, standardized=True),
             LogPerturbedPareto(4.0, 0.5)],
            tag="inside_independent", sharing="vectors",
        )
        cfg = model_to_config(model)
        back = model_from_config(cfg)
        assert back == model

    def test_unknown_keys_rejected(self):
        cfg = model_to_config(common_model(2, 3, [Rademacher(), Rademacher()]))
        cfg["extra"] = 1
        with pytest.raises(ValueError):
            model_from_config(cfg)


class TestEnumerationGuards:
    def test_state_space_too_large(self):
        model = common_model(2, 13, [Rademacher(), Rademacher()])
        with pytest.raises(ValueError):
            enumeration_states(model)

    def test_continuous_inputs_rejected(self):
        model = common_model(2, 3, [ParetoPower(6.0), ParetoPower(6.0)])
        with pytest.raises(ValueError):
            enumeration_states(model)

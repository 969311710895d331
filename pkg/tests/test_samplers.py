import numpy as np
import pytest
from scipy import stats

from qstatemc.densities import Dataset, TargetDensity
from qstatemc.physicality import is_physical
from qstatemc.quantum import get_pom
from qstatemc.rng import make_rng, stream_rngs
from qstatemc.samplers import (
    ChainConfig,
    RejectionBudgetExceeded,
    WeightedSample,
    importance_sample,
    integrated_autocorr_ess,
    mhmc_generic,
    rejection_sample,
    sample_simplex_exponential,
    sample_simplex_spacings,
    spacings,
    tune_step_size,
    xmhmc_sample,
)

TRINE, TETRA, TETRA2, TAT = (get_pom(n) for n in ("trine", "tetra", "tetra2", "tat"))
PRIMITIVE = TargetDensity("prior-primitive")
JEFFREYS = TargetDensity("prior-jeffreys")


class TestSimplex:
    def test_k2_uniform_marginal(self):
        p = sample_simplex_exponential(2, make_rng(1), 100_000)
        assert p[:, 0].mean() == pytest.approx(0.5, abs=0.005)
        assert stats.kstest(p[:, 0], "uniform").pvalue > 1e-3

    def test_k3_moments(self):
        p1 = sample_simplex_exponential(3, make_rng(2), 100_000)[:, 0]
        n = len(p1)
        assert abs(p1.mean() - 1 / 3) < 3 * np.sqrt(1 / 18 / n)
        # Var of the sample variance for Beta(1, 2): (mu4 - sigma^4) / n
        mu4 = np.mean((p1 - 1 / 3) ** 4)
        assert abs(p1.var() - 1 / 18) < 3 * np.sqrt((mu4 - (1 / 18) ** 2) / n)

    @pytest.mark.parametrize("sampler", [sample_simplex_exponential, sample_simplex_spacings])
    def test_basic_constraints(self, sampler, rng):
        p = sampler(7, rng, 10_000)
        assert p.min() > 0
        assert np.abs(p.sum(axis=1) - 1).max() < 1e-12
        assert sampler(4, rng).shape == (4,)

    def test_spacings_arithmetic(self):
        assert np.allclose(spacings([0.2, 0.7]), [0.2, 0.5, 0.3])
        assert np.allclose(spacings([0.7, 0.2]), [0.2, 0.5, 0.3])

    def test_spacings_k2(self):
        rng_a, rng_b = make_rng(4), make_rng(4)
        p = sample_simplex_spacings(2, rng_a)
        u = rng_b.random(1)[0]
        assert np.allclose(p, [u, 1 - u])

    def test_methods_agree(self):
        a = sample_simplex_exponential(5, make_rng(5), 100_000)[:, 0]
        b = sample_simplex_spacings(5, make_rng(6), 100_000)[:, 0]
        assert stats.ks_2samp(a, b).pvalue > 1e-3

    def test_needs_two_outcomes(self, rng):
        with pytest.raises(ValueError):
            sample_simplex_exponential(1, rng)


class TestRejection:
    def test_trine_rate(self):
        s = rejection_sample(PRIMITIVE, TRINE, 20_000, make_rng(7))
        rate = s.meta["acceptance_rate"]
        se = np.sqrt(rate * (1 - rate) / s.meta["proposals_total"])
        assert abs(rate - np.pi / np.sqrt(27)) < 4 * se
        assert s.meta["accepted"] == len(s) == 20_000
        assert s.meta["acceptance_rate"] == s.meta["accepted"] / s.meta["proposals_total"]

    def test_primitive_accepts_every_physical_point(self):
        s = rejection_sample(PRIMITIVE, TETRA, 2000, make_rng(8))
        assert s.meta["physical"] == s.meta["accepted"]
        assert s.unit_weights
        assert is_physical(s.points, TETRA).all()

    def test_tetra_pair_rate(self):
        s = rejection_sample(PRIMITIVE, TETRA2, 10, make_rng(9))
        # 10 accepted points: the rate is Poisson-limited to about +-30%
        assert 0.8e-5 < s.meta["acceptance_rate"] < 6e-5

    def test_budget(self):
        with pytest.raises(RejectionBudgetExceeded):
            rejection_sample(PRIMITIVE, TETRA2, 1, make_rng(10), max_proposals=100)

    def test_posterior_bound(self):
        data = Dataset(np.array([10, 5, 5]))
        s = rejection_sample(TargetDensity("posterior-primitive", data), TRINE, 500, make_rng(11))
        assert s.meta["log_R_bound"] <= 0
        # only draws that pass the likelihood test reach the physicality check
        assert s.meta["checked"] < s.meta["proposals_total"]
        assert s.meta["physical"] == s.meta["accepted"]

    def test_jeffreys_is_capped(self):
        s = rejection_sample(JEFFREYS, TETRA, 200, make_rng(12), log_cap=3.0, log_R_bound=3.0)
        assert s.meta["log_cap"] == 3.0


class TestImportance:
    def test_primitive_weights(self):
        s = importance_sample(PRIMITIVE, TETRA, 20_000, make_rng(13))
        assert set(np.unique(s.weights)) <= {0.0, 1.0}
        assert s.weights.mean() == pytest.approx(s.meta["physical"] / 20_000)
        assert s.ess == s.meta["physical"]
        assert is_physical(s.points[s.weights > 0], TETRA).all()

    def test_posterior_mean_matches_rejection(self):
        data = Dataset(np.array([10, 5, 5]))
        target = TargetDensity("posterior-primitive", data)
        imp = importance_sample(target, TRINE, 40_000, make_rng(14))
        rej = rejection_sample(target, TRINE, 4000, make_rng(15))
        w = imp.weights / imp.weights.sum()
        m_imp = np.dot(w, imp.points[:, 0])
        se_imp = np.sqrt(np.sum(w**2 * (imp.points[:, 0] - m_imp) ** 2))
        m_rej = rej.points[:, 0].mean()
        se_rej = rej.points[:, 0].std() / np.sqrt(len(rej))
        assert abs(m_imp - m_rej) < 3 * np.hypot(se_imp, se_rej)

    def test_jeffreys_weights_finite(self):
        s = importance_sample(JEFFREYS, TETRA, 5000, make_rng(16))
        assert np.isfinite(s.weights).all() and s.weights.max() == 1.0


class TestGenericMH:
    def test_uniform_box(self, rng):
        chain = mhmc_generic(lambda t: 0.0, lambda t, r: r.uniform(0, 1, 2), [0.5, 0.5], 200, rng)
        assert len(np.unique(chain[:, 0])) == 200

    def test_gaussian_moments(self):
        chain = mhmc_generic(lambda t: -0.5 * t[0] ** 2, lambda t, r: t + r.normal(0, 2.4, 1),
                             [0.0], 110_000, make_rng(17))[10_000:, 0]
        assert chain.mean() == pytest.approx(0, abs=0.05)
        assert chain.var() == pytest.approx(1, abs=0.1)

    def test_detailed_balance(self):
        pi = np.array([0.2, 0.3, 0.5])

        def propose(t, r):
            return np.array([(t[0] + r.integers(1, 3)) % 3])

        chain = mhmc_generic(lambda t: np.log(pi[int(t[0])]), propose, [0.0], 300_000,
                             make_rng(18))[:, 0].astype(int)
        counts = np.zeros((3, 3))
        np.add.at(counts, (chain[:-1], chain[1:]), 1)
        flow = counts / counts.sum()
        for i in range(3):
            for j in range(i + 1, 3):
                se = np.sqrt((flow[i, j] + flow[j, i]) / counts.sum())
                assert abs(flow[i, j] - flow[j, i]) < 4 * se
        assert np.allclose(np.bincount(chain) / len(chain), pi, atol=0.01)

    def test_bad_start(self, rng):
        with pytest.raises(ValueError):
            mhmc_generic(lambda t: -np.inf, lambda t, r: t, [0.0], 10, rng)


class TestChainConfig:
    def test_defaults(self):
        cfg = ChainConfig(length=1000)
        assert cfg.burn_in == 100 and cfg.n_emitted == 900

    def test_thinning_count(self):
        assert ChainConfig(length=1000, burn_in=100, thinning=7).n_emitted == 129

    @pytest.mark.parametrize("kwargs", [{"step_sigma": 0}, {"burn_in": 1000, "length": 1000},
                                        {"thinning": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ChainConfig(**kwargs)


class TestXMHMC:
    def test_points_physical(self):
        cfg = ChainConfig(step_sigma=0.2, length=1000, seed=19, n_chains=4)
        s = xmhmc_sample(PRIMITIVE, TRINE, cfg)
        assert len(s) == 4 * cfg.n_emitted and s.unit_weights
        assert np.sum(s.points**2, axis=1).max() <= 0.5 + 1e-12
        assert np.abs(s.points.sum(axis=1) - 1).max() < 1e-12
        assert np.array_equal(s.chain, np.repeat(np.arange(4), cfg.n_emitted))

    def test_marginal_matches_rejection(self):
        cfg = ChainConfig(step_sigma=0.3, length=22_000, burn_in=2000, seed=20, n_chains=5)
        mc = xmhmc_sample(PRIMITIVE, TETRA, cfg)
        rej = rejection_sample(PRIMITIVE, TETRA, 100_000, make_rng(21))
        edges = np.linspace(0, 0.5, 21)
        a, _ = np.histogram(mc.points[:, 0], edges)
        b, _ = np.histogram(rej.points[:, 0], edges)
        # shrink the chain counts to their effective size before the chi-square test
        n_eff = sum(integrated_autocorr_ess(mc.points[mc.chain == c, 0]) for c in range(5))
        a_eff = a * n_eff / a.sum()
        table = np.array([a_eff, b])
        assert stats.chi2_contingency(table)[1] > 1e-3

    def test_jeffreys_tat_tuned_rate(self):
        cfg = ChainConfig(step_sigma=0.5, length=12_000, burn_in=4000, tune=True, seed=22, n_chains=4)
        s = xmhmc_sample(JEFFREYS, TAT, cfg)
        assert 0.15 <= s.meta["acceptance_rate"] <= 0.35
        assert s.meta["sigma"] != cfg.step_sigma

    def test_chains_do_not_interact(self):
        one = xmhmc_sample(PRIMITIVE, TAT, ChainConfig(length=500, seed=23, n_chains=1))
        three = xmhmc_sample(PRIMITIVE, TAT, ChainConfig(length=500, seed=23, n_chains=3))
        assert np.array_equal(one.points, three.points[three.chain == 0])

    def test_tuning_stops_after_burn_in(self):
        cfg = ChainConfig(step_sigma=1.0, length=600, burn_in=300, tune=True, seed=24)
        s = xmhmc_sample(PRIMITIVE, TETRA, cfg)
        assert s.meta["sigma"] == pytest.approx(1.0 * 0.9**3)


class TestTuning:
    def test_small_sigma_accepts_nearly_all(self):
        _, table = tune_step_size(PRIMITIVE, TAT, [1e-4], 400, make_rng(25))
        assert table[0][1] > 0.95

    def test_large_sigma_on_tetra_pair(self):
        _, table = tune_step_size(PRIMITIVE, TETRA2, [2.0], 400, make_rng(26))
        assert table[0][1] < 0.01

    def test_monotone_and_reproducible(self):
        grid = [0.02, 0.05, 0.1, 0.2, 0.4]
        sigma, table = tune_step_size(PRIMITIVE, TAT, grid, 1500, make_rng(27))
        rates = [r for _, r in table]
        assert all(b <= a + 0.05 for a, b in zip(rates, rates[1:]))
        confirm = xmhmc_sample(PRIMITIVE, TAT, ChainConfig(step_sigma=sigma, length=6000, burn_in=500,
                                                          seed=28, n_chains=4))
        assert abs(confirm.meta["acceptance_rate"] - dict(table)[sigma]) < 0.05


class TestDeterminism:
    def test_same_seed_same_output(self):
        for make in (
            lambda: rejection_sample(PRIMITIVE, TAT, 300, make_rng(30)),
            lambda: importance_sample(JEFFREYS, TAT, 3000, make_rng(30)),
            lambda: xmhmc_sample(PRIMITIVE, TAT, ChainConfig(length=400, seed=30, n_chains=2, tune=True)),
        ):
            a, b = make(), make()
            assert np.array_equal(a.points, b.points) and np.array_equal(a.weights, b.weights)
            assert a.meta == b.meta

    def test_threads_do_not_change_output(self):
        a = rejection_sample(PRIMITIVE, TRINE, 500, make_rng(31), threads=1)
        b = rejection_sample(PRIMITIVE, TRINE, 500, make_rng(31), threads=3)
        assert np.array_equal(a.points, b.points)

    def test_streams(self):
        a = [g.random() for g in stream_rngs(5, 3)]
        b = [g.random() for g in stream_rngs(5, 3)]
        assert a == b and len(set(a)) == 3
        assert make_rng(5, 1).random() == stream_rngs(5, 3)[1].random()


class TestWeightedSample:
    def test_validation(self):
        with pytest.raises(ValueError):
            WeightedSample(np.full((2, 3), 1 / 3), np.ones(3))
        with pytest.raises(ValueError):
            WeightedSample(np.full((2, 3), 1 / 3), np.array([1.0, -1.0]))

    def test_ess(self):
        assert WeightedSample(np.full((4, 2), 0.5), np.array([1, 1, 0, 0.0])).ess == 2.0

    def test_merge_is_ordered(self):
        a = WeightedSample(np.full((2, 2), 0.5), np.ones(2), np.array([0, 1]), {"method": "mcmc"})
        b = WeightedSample(np.full((3, 2), 0.5), np.ones(3), np.array([0, 0, 1]))
        m = WeightedSample.merge([a, b])
        assert m.chain.tolist() == [0, 1, 2, 2, 3]
        assert m.meta["method"] == "mcmc" and len(m) == 5

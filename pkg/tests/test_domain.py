import math

import numpy as np
import pytest

from aaa.domain import (
    Dataset,
    DiscreteDGP,
    Estimate,
    NuisanceTriple,
    dr_efficient_score,
    dr_moment,
    log_odds,
    log_or_prospective,
    log_or_retrospective,
    logistic,
    psi_prospective,
    psi_retrospective,
)

RNG = np.random.default_rng(20260810)

# canonical 2x2 conditional table: P(Y=1,T=1)=0.3, P(Y=1,T=0)=0.2,
# P(Y=0,T=1)=0.2, P(Y=0,T=0)=0.3 -> log OR = log 2.25 both ways
CELLS = {(1, 1): 0.3, (1, 0): 0.2, (0, 1): 0.2, (0, 0): 0.3}


def table_conditionals(cells):
    """(p0, p1, w, q0, q1, r) from a dict of joint cells keyed (y, t)."""
    w = cells[(1, 1)] + cells[(0, 1)]
    r = cells[(1, 1)] + cells[(1, 0)]
    p1 = cells[(1, 1)] / w
    p0 = cells[(1, 0)] / (1 - w)
    q1 = cells[(1, 1)] / r
    q0 = cells[(0, 1)] / (1 - r)
    return p0, p1, w, q0, q1, r


def random_table(rng, floor=1e-2):
    cells = floor + (1 - 4 * floor) * rng.dirichlet(np.ones(4))
    return {(1, 1): cells[0], (1, 0): cells[1], (0, 1): cells[2], (0, 0): cells[3]}


class TestLogOddsRatio:
    def test_equal_probabilities_give_zero(self):
        assert log_or_prospective(0.5, 0.5) == 0.0
        assert log_or_prospective(0.8, 0.8) == 0.0
        assert log_or_retrospective(0.5, 0.5) == 0.0

    def test_direct_arithmetic(self):
        expected = math.log((0.6 / 0.4) * (0.6 / 0.4))
        assert log_or_prospective(0.6, 0.4) == pytest.approx(expected, abs=1e-12)
        assert log_or_retrospective(0.6, 0.4) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.810930, abs=1e-6)

    def test_bayes_enumeration_of_canonical_table(self):
        p0, p1, w, q0, q1, r = table_conditionals(CELLS)
        assert (p1, p0) == (0.6, 0.4)
        assert (q1, q0) == pytest.approx((0.6, 0.4))
        assert log_or_prospective(p1, p0) == pytest.approx(
            log_or_retrospective(q1, q0), abs=1e-12
        )

    def test_invariance_over_random_tables(self):
        for _ in range(500):
            cells = random_table(RNG, floor=1e-6)
            p0, p1, w, q0, q1, r = table_conditionals(cells)
            assert log_or_prospective(p1, p0) == pytest.approx(
                log_or_retrospective(q1, q0), abs=1e-12
            )

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.1, np.nan])
    def test_boundary_probabilities_rejected(self, bad):
        with pytest.raises(ValueError):
            log_or_prospective(bad, 0.5)
        with pytest.raises(ValueError):
            log_or_retrospective(0.5, bad)


class TestScores:
    def test_prospective_examples(self):
        assert psi_prospective(1, 1, 0.5, 0.5, 0.5) == pytest.approx(4.0, abs=1e-12)
        assert psi_prospective(0, 0, 0.5, 0.5, 0.5) == pytest.approx(4.0, abs=1e-12)
        expected = math.log(16.0) + (1 - 0.8) / (0.5 * 0.8 * 0.2)
        assert psi_prospective(1, 1, 0.2, 0.8, 0.5) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(5.272589, abs=1e-6)

    def test_retrospective_examples(self):
        assert psi_retrospective(1, 1, 0.5, 0.5, 0.5) == pytest.approx(4.0, abs=1e-12)
        assert psi_retrospective(0, 0, 0.5, 0.5, 0.5) == pytest.approx(4.0, abs=1e-12)

    def test_truth_plugged_scores_coincide_on_canonical_table(self):
        p0, p1, w, q0, q1, r = table_conditionals(CELLS)
        for y in (0, 1):
            for t in (0, 1):
                assert psi_prospective(y, t, p0, p1, w) == pytest.approx(
                    psi_retrospective(t, y, q0, q1, r), abs=1e-10
                )

    def test_truth_plugged_scores_coincide_on_random_tables(self):
        for _ in range(200):
            cells = random_table(RNG)
            p0, p1, w, q0, q1, r = table_conditionals(cells)
            for y in (0, 1):
                for t in (0, 1):
                    assert psi_prospective(y, t, p0, p1, w) == pytest.approx(
                        psi_retrospective(t, y, q0, q1, r), abs=1e-10
                    )

    def test_exact_mean_zero_after_centering(self):
        for _ in range(200):
            cells = random_table(RNG)
            p0, p1, w, q0, q1, r = table_conditionals(cells)
            theta = log_or_prospective(p1, p0)
            mean_p = sum(
                cells[(y, t)] * (psi_prospective(y, t, p0, p1, w) - theta)
                for y in (0, 1)
                for t in (0, 1)
            )
            mean_r = sum(
                cells[(y, t)] * (psi_retrospective(t, y, q0, q1, r) - theta)
                for y in (0, 1)
                for t in (0, 1)
            )
            assert abs(mean_p) < 1e-12
            assert abs(mean_r) < 1e-12

    def test_mean_zero_robust_to_wrong_marginal(self):
        # replacing the true propensity by any fixed interior value keeps
        # the centered score mean at zero
        for _ in range(100):
            cells = random_table(RNG)
            p0, p1, w, _, _, _ = table_conditionals(cells)
            theta = log_or_prospective(p1, p0)
            w_wrong = RNG.uniform(0.05, 0.95)
            mean = sum(
                cells[(y, t)] * (psi_prospective(y, t, p0, p1, w_wrong) - theta)
                for y in (0, 1)
                for t in (0, 1)
            )
            assert abs(mean) < 1e-12

    def test_vectorized_matches_scalar(self):
        y = np.array([0, 1, 1, 0])
        t = np.array([1, 1, 0, 0])
        p0 = np.array([0.2, 0.3, 0.4, 0.5])
        p1 = np.array([0.6, 0.7, 0.8, 0.55])
        w = np.array([0.5, 0.4, 0.3, 0.6])
        vec = psi_prospective(y, t, p0, p1, w)
        for i in range(4):
            assert vec[i] == psi_prospective(y[i], t[i], p0[i], p1[i], w[i])


class TestDrMoment:
    def test_pointwise_examples(self):
        assert dr_moment(0.0, 0.0, 3.7, 0, 0) == pytest.approx(0.25, abs=1e-15)
        assert dr_moment(0.0, 0.0, 0.0, 1, 1) == pytest.approx(0.25, abs=1e-15)

    def test_conditional_mean_zero_with_correct_outcome_baseline(self):
        for _ in range(100):
            cells = random_table(RNG)
            p0, p1, w, q0, _, _ = table_conditionals(cells)
            phi_p0 = log_odds(p0)
            theta0 = log_or_prospective(p1, p0)
            phi_r = RNG.uniform(-2, 2)
            mean = sum(
                cells[(y, t)] * dr_moment(phi_p0, phi_r, theta0, y, t)
                for y in (0, 1)
                for t in (0, 1)
            )
            assert abs(mean) < 1e-12

    def test_conditional_mean_moves_off_zero_when_theta_wrong(self):
        cells = CELLS
        p0, p1, w, q0, _, _ = table_conditionals(cells)
        phi_p0, phi_r0 = log_odds(p0), log_odds(q0)
        theta0 = log_or_prospective(p1, p0)
        for delta in (0.5, -0.5):
            mean = sum(
                cells[(y, t)] * dr_moment(phi_p0, phi_r0, theta0 + delta, y, t)
                for y in (0, 1)
                for t in (0, 1)
            )
            assert abs(mean) > 1e-3

    def test_nonfinite_inputs_rejected(self):
        with pytest.raises(ValueError):
            dr_moment(np.inf, 0.0, 0.0, 1, 1)
        with pytest.raises(ValueError):
            dr_moment(0.0, np.nan, 0.0, 1, 1)


class TestDrEfficientScore:
    def _f_dr_and_f_p(self, cells, y, t):
        p0, p1, w, q0, q1, r = table_conditionals(cells)
        theta0 = log_or_prospective(p1, p0)
        f_dr = dr_efficient_score(
            y, t, log_odds(p0), log_odds(q0), theta0, cells[(1, 1)], theta0
        )
        f_p = psi_prospective(y, t, p0, p1, w) - theta0
        return f_dr, f_p

    def test_coincides_with_outcome_score_on_canonical_table(self):
        for y in (0, 1):
            for t in (0, 1):
                f_dr, f_p = self._f_dr_and_f_p(CELLS, y, t)
                assert f_dr == pytest.approx(f_p, abs=1e-12)

    def test_independent_table(self):
        cells = {(1, 1): 0.25, (1, 0): 0.25, (0, 1): 0.25, (0, 0): 0.25}
        f_dr, f_p = self._f_dr_and_f_p(cells, 1, 1)
        assert f_dr == pytest.approx(f_p, abs=1e-12)

    def test_mean_zero_by_enumeration(self):
        for _ in range(100):
            cells = random_table(RNG)
            mean = sum(
                cells[(y, t)] * self._f_dr_and_f_p(cells, y, t)[0]
                for y in (0, 1)
                for t in (0, 1)
            )
            assert abs(mean) < 1e-12

    def test_boundary_cell_probability_rejected(self):
        with pytest.raises(ValueError):
            dr_efficient_score(1, 1, 0.0, 0.0, 0.5, 0.0, 0.5)


class TestDataset:
    def test_basic_construction(self):
        data = Dataset(y=[0, 1], t=[1, 0], x=[[1.0], [2.0]])
        assert data.n == 2
        assert data.kinds == ("numeric",)

    def test_take_preserves_kinds(self):
        data = Dataset(y=[0, 1, 1], t=[1, 0, 1], x=[[1.0, 0], [2.0, 1], [3.0, 0]],
                       kinds=("numeric", "categorical"))
        sub = data.take([2, 0])
        assert sub.n == 2
        assert sub.kinds == data.kinds
        assert sub.x[0, 0] == 3.0

    @pytest.mark.parametrize(
        "y,t,x",
        [
            ([0, 2], [0, 1], [[1.0], [2.0]]),  # non-binary outcome
            ([0, 1], [0, 1], [[1.0]]),  # row-count mismatch
            ([], [], np.empty((0, 1))),  # empty
            ([0, 1], [0, 1], [[np.nan], [1.0]]),  # non-finite covariate
        ],
    )
    def test_invalid_rejected(self, y, t, x):
        with pytest.raises(ValueError):
            Dataset(y=y, t=t, x=x)

    def test_arrays_read_only(self):
        data = Dataset(y=[0, 1], t=[1, 0], x=[[1.0], [2.0]])
        with pytest.raises(ValueError):
            data.y[0] = 1


class TestNuisanceTriple:
    def test_trim_bounds_enforced(self):
        NuisanceTriple("prospective", [0.5], [0.5], [0.5], eps=1e-3)
        with pytest.raises(ValueError):
            NuisanceTriple("prospective", [1e-4], [0.5], [0.5], eps=1e-3)
        with pytest.raises(ValueError):
            NuisanceTriple("sideways", [0.5], [0.5], [0.5], eps=1e-3)

    def test_psi_dispatch(self):
        trip = NuisanceTriple("prospective", [0.5], [0.5], [0.5], eps=1e-3)
        assert trip.psi(np.array([1]), np.array([1]))[0] == pytest.approx(4.0)
        trip_r = NuisanceTriple("retrospective", [0.5], [0.5], [0.5], eps=1e-3)
        assert trip_r.psi(np.array([1]), np.array([1]))[0] == pytest.approx(4.0)


class TestEstimate:
    def test_interval_invariants(self):
        est = Estimate.build(0.72, 5.0, 400, "prospective", alpha=0.05, fold_means=[0.7, 0.74])
        se = 5.0 / 20.0
        assert est.ci_two_sided[0] == pytest.approx(0.72 - 1.959963984540054 * se, abs=1e-12)
        assert est.ci_two_sided[1] == pytest.approx(0.72 + 1.959963984540054 * se, abs=1e-12)
        assert est.upper_one_sided == pytest.approx(0.72 + 1.6448536269514722 * se, abs=1e-12)
        assert est.ci_exp == pytest.approx(tuple(np.exp(est.ci_two_sided)), abs=1e-12)

    def test_point_only_estimate(self):
        est = Estimate.build(0.5, None, 100, "prospective_plugin")
        assert est.sigma_hat is None
        assert est.ci_two_sided is None and est.ci_exp is None
        assert est.upper_one_sided is None

    def test_bad_alpha_rejected(self):
        with pytest.raises(ValueError):
            Estimate.build(0.5, 1.0, 100, "prospective", alpha=0.7)


class TestDiscreteDGP:
    def test_canonical_conditionals(self):
        dgp = DiscreteDGP(support=[[0.0]], px=[1.0], joint=[[[0.3, 0.2], [0.2, 0.3]]], eps=0.05)
        p0, p1 = dgp.outcome_given_exposure()
        q0, q1 = dgp.exposure_given_outcome()
        assert p1[0] == pytest.approx(0.6) and p0[0] == pytest.approx(0.4)
        assert q1[0] == pytest.approx(0.6) and q0[0] == pytest.approx(0.4)
        assert dgp.log_or()[0] == pytest.approx(math.log(2.25), abs=1e-12)

    @pytest.mark.parametrize(
        "px,joint",
        [
            ([0.5, 0.5], [[[0.3, 0.2], [0.2, 0.3]]]),  # px/joint length mismatch
            ([1.0], [[[0.9, 0.05], [0.03, 0.02]]]),  # cell below eps
            ([1.0], [[[0.3, 0.25], [0.2, 0.3]]]),  # does not sum to one
        ],
    )
    def test_invalid_rejected(self, px, joint):
        with pytest.raises(ValueError):
            DiscreteDGP(support=[[0.0]] * len(px), px=px, joint=joint, eps=0.05)

    def test_sampling_and_truth_injection(self):
        dgp = DiscreteDGP(
            support=[[0.0], [1.0]],
            px=[0.25, 0.75],
            joint=[[[0.3, 0.2], [0.2, 0.3]], [[0.1, 0.2], [0.3, 0.4]]],
            eps=0.05,
        )
        data = dgp.sample(5000, seed=42)
        again = dgp.sample(5000, seed=42)
        assert np.array_equal(data.x, again.x)
        assert np.array_equal(data.y, again.y)
        f0, f1, w = dgp.prospective_probs(data.x)
        idx = dgp.support_index(data.x)
        assert np.allclose(w, dgp.marginal_t()[idx])
        # empirical cell frequencies track the law
        x1 = data.x[:, 0] == 1.0
        freq_11 = np.mean(data.y[x1] & data.t[x1])
        assert abs(freq_11 - 0.4) < 3 * math.sqrt(0.4 * 0.6 / x1.sum())

    def test_off_support_rows_rejected(self):
        dgp = DiscreteDGP(support=[[0.0]], px=[1.0], joint=[[[0.3, 0.2], [0.2, 0.3]]], eps=0.05)
        with pytest.raises(ValueError):
            dgp.support_index(np.array([[0.5]]))


def test_logistic_and_log_odds_roundtrip():
    z = np.linspace(-12, 12, 101)
    assert np.allclose(log_odds(logistic(z)), z, atol=1e-9)
    assert logistic(np.longdouble(1.0)).dtype == np.longdouble

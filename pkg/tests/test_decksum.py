import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from lamdbar.decksum import (
    ConstantsReport,
    DeckSumSolver,
    ProblemSpec,
    corpus,
    fitted_ratio,
    measured_tail,
)
from lamdbar.exceptions import ConfigError, DomainError, NumericalCheckError
from lamdbar.fuchsian import invert_word, reduce_word

T = 0.7


@pytest.fixture(scope="module")
def solver():
    return DeckSumSolver().fit()


@pytest.fixture(scope="module")
def constants(solver):
    return solver.measure_constants()


class TestProblemSpec:
    def test_defaults(self):
        s = ProblemSpec()
        assert (s.m, s.s, s.h, s.n_max, s.word_cap, s.radius, s.bump_radius) == (6, 5, 1 / 256, 8, 12, 0.5, 0.2)

    @pytest.mark.parametrize(
        "bad",
        [
            {"m": 5, "s": 5},
            {"m": 5, "s": 3},
            {"bump_radius": 0.3},
            {"action": "shear"},
            {"radius": 0.8},
            {"n_max": 0},
            {"h": 0.0},
        ],
    )
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            ProblemSpec(**bad)

    def test_hash_tracks_content(self):
        a = ProblemSpec()
        assert a.config_hash() == ProblemSpec().config_hash()
        assert a.with_(amplitude=0.3).config_hash() != a.config_hash()

    def test_corpus_is_seeded(self):
        a = corpus(5, seed=3)
        b = corpus(5, seed=3)
        assert [s.config_hash() for s, _ in a] == [s.config_hash() for s, _ in b]
        assert len({s.config_hash() for s, _ in corpus(20)}) == 20


class TestEstimator:
    def test_params_round_trip(self):
        est = DeckSumSolver(amplitude=0.3)
        p = est.get_params()
        assert p["amplitude"] == 0.3 and p["threads"] == 1
        assert DeckSumSolver(**p).spec == est.spec

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            DeckSumSolver().transform([0.1])

    def test_transform_shape(self, solver):
        out = solver.transform([0.1, 0.2])
        assert out.shape == (2, int(solver.grid_.mask.sum()))
        np.testing.assert_array_equal(solver.predict([0.1]), out[:1])

    def test_transform_rejects_nan(self, solver):
        with pytest.raises(DomainError):
            solver.transform([np.nan])


class TestLocalization:
    def test_identity_word_is_unshifted(self, solver):
        e = solver.elements_[0]
        v = solver.localize_rhs(T, e)
        ref = solver.rhs_ * complex(solver.spec_.modulation(T))
        assert np.array_equal(v.values, ref.values)

    def test_rotation_shift(self, solver):
        e = solver.elements_[1]
        angle = solver.model_.word_angle(e.word)
        v = solver.localize_rhs(T, e)
        ref = solver.rhs_ * complex(solver.spec_.modulation(T - angle))
        np.testing.assert_allclose(v.values, ref.values, atol=1e-15)

    def test_well_defined_across_leaf(self, solver):
        # v*_{act(w,t), e} equals v*_{t, w^-1 e}
        w = "b"
        t2 = float(solver.model_.act(w, T))
        for e in solver.elements_[:40]:
            other = SimpleNamespace(word=reduce_word(invert_word(w) + e.word))
            a = solver.localize_rhs(t2, e).values
            b = solver.localize_rhs(T, other).values
            assert np.abs(a - b).max() < 1e-12

    def test_piece_norms_flat_across_annuli(self, constants):
        vals = list(constants.c1_by_annulus.values())
        assert max(vals) / min(vals) < 1.2
        assert all(math.isfinite(v) and v > 0 for v in vals)

    def test_leak_detected(self):
        est = DeckSumSolver(bump_radius=0.2).fit()
        # bypass validation to shrink the admissible disk after fitting
        object.__setattr__(est.spec_, "kobayashi_radius", 0.15)
        with pytest.raises(DomainError):
            est.localize_rhs(T, est.elements_[0])


class TestSolve:
    def test_zero_rhs(self):
        est = DeckSumSolver(scale=0.0).fit()
        leaf = est.solve(T)
        assert np.all(leaf.u.values == 0)
        assert all(v == 0 for v in leaf.annulus_norms.values())

    def test_truncation_range(self, solver):
        with pytest.raises(ConfigError):
            solver.solve(T, N=0)
        with pytest.raises(ConfigError):
            solver.solve(T, N=9)

    def test_residual(self, solver):
        assert solver.solve(T).residual < 0.05

    def test_residual_at_least_first_order(self):
        res = [DeckSumSolver(h=h).fit().solve(T).residual for h in (1 / 64, 1 / 128, 1 / 256)]
        for a, b in zip(res, res[1:]):
            assert b / a <= 0.5 * 1.3

    def test_identity_piece_matches_closed_form(self, solver):
        # for the radial bump (1-|z|^2/a^2)^2 the Cauchy transform is elementary
        a = solver.spec_.bump_radius
        sol = solver.unit_solution_
        z = np.array([0.05, 0.1j, 0.15 + 0.05j, 0.3, 0.45j])
        inside = a * a / (3 * z) * (1 - (1 - np.abs(z) ** 2 / a**2) ** 3)
        closed = np.where(np.abs(z) < a, inside, a * a / (3 * z))
        np.testing.assert_allclose(sol.particular(z), closed, atol=5e-5)
        # radial data: the holomorphic correction vanishes
        assert np.abs(sol.coeffs).max() < 1e-10

    def test_taylor_representation(self, solver):
        rng = np.random.default_rng(2)
        z = 0.5 * np.sqrt(rng.uniform(size=50)) * np.exp(2j * np.pi * rng.uniform(size=50))
        for e in solver.elements_[1:30]:
            i = solver.elements_.index(e) - 1
            c = solver.taylor_[i]
            series = np.polyval(c[::-1], z)
            np.testing.assert_allclose(series, solver.piece(e, z), rtol=1e-10, atol=1e-16)

    def test_decay_rate(self, solver):
        leaf = solver.solve(T)
        assert fitted_ratio(leaf.annulus_norms) <= 0.85

    def test_evaluate_agrees_with_grid(self, solver):
        g = solver.grid_
        leaf = solver.solve(T)
        z = g.z[g.mask][::401]
        np.testing.assert_allclose(solver.evaluate(T, z), leaf.u.values[g.mask][::401], rtol=1e-9, atol=1e-15)

    def test_non_convergent_partial_sums(self):
        from lamdbar.decksum import _check_convergence

        with pytest.raises(NumericalCheckError):
            _check_convergence({0: 1.0, 1: 1e-3, 2: 2e-3, 3: 3e-3, 4: 4e-3})
        _check_convergence({0: 1.0, 1: 1e-3, 2: 2e-3, 3: 1e-4})

    @pytest.mark.xfail(strict=True, reason="decay is faster than the stated rate; see decision ledger")
    def test_normalised_contributions_in_factor_four_band(self, solver):
        norms = solver.solve(T).annulus_norms
        q = 0.5 ** ((solver.spec_.s - 4) / 2)
        vals = [norms[n] / q**n for n in range(2, 9) if norms[n] > 0]
        assert max(vals) / min(vals) <= 4


class TestEquivariance:
    def test_identity_word(self, solver):
        assert solver.equivariance_defect(T, "") == 0.0

    def test_generator_small_and_decreasing(self, solver):
        d = [solver.equivariance_defect(T, "a", N) for N in range(1, 9)]
        assert d[-1] < 0.05
        assert d[7] < d[3]
        assert all(b <= a + 1e-12 for a, b in zip(d, d[1:]))

    def test_truncation_mismatch(self, solver):
        with pytest.raises(ConfigError):
            solver.equivariance_defect(T, "a", 9)

    def test_corpus_small_and_improving(self, corpus_defects):
        for d in corpus_defects:
            assert d[-1] < 0.05
            assert d[7] < d[3]

    @pytest.mark.xfail(strict=True, reason="symmetric truncation difference can grow at the last annulus; see ledger")
    def test_corpus_monotone(self, corpus_defects):
        for d in corpus_defects:
            assert all(b <= a + 1e-12 for a, b in zip(d, d[1:]))


@pytest.fixture(scope="module")
def corpus_defects():
    out = []
    for spec, t in corpus(20):
        est = DeckSumSolver.from_spec(spec).fit()
        out.append([est.equivariance_defect(t, "a", N) for N in range(1, 9)])
    return out


class TestTransversal:
    def test_boundary_action_needs_larger_s(self):
        est = DeckSumSolver(action="boundary", n_max=5, word_cap=6).fit()
        with pytest.raises(ConfigError, match=r"s <= 2\(k\+1\)"):
            est.lipschitz_profile(T, T + 0.1)

    def test_equal_points(self, solver):
        with pytest.raises(DomainError):
            solver.lipschitz_profile(T, T)

    def test_envelope_decay(self, solver):
        env = solver.lipschitz_profile(T, T + 0.025)
        s, k = solver.spec_.s, 0
        required = 2 ** (4 * (s - 2 * (k + 1)) / 2) / 4
        assert env[3] / env[7] >= required

    def test_lipschitz_stable_under_refinement(self, solver):
        L = [solver.lipschitz_constant(T, T + d) for d in (0.2, 0.1, 0.05, 0.025)]
        assert max(L) / min(L) < 1.15
        # the limit is the derivative norm
        _, scale = solver.derivative_defects(T, [0.01])
        assert L[-1] == pytest.approx(scale, rel=0.02)

    def test_derivative_order(self, solver):
        deltas = np.array([0.1, 0.05, 0.02, 0.01])
        defects, scale = solver.derivative_defects(T, deltas)
        order = np.polyfit(np.log(deltas), np.log(defects), 1)[0]
        assert order >= 1.5
        assert defects[1] / defects[0] == pytest.approx(0.25, abs=0.03)
        assert scale > 0

    def test_constant_modulation_has_zero_derivative(self):
        est = DeckSumSolver(amplitude=0.0).fit()
        defects, scale = est.derivative_defects(T, [0.1])
        assert scale == 0 and defects[0] < 1e-15

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0, 2 * np.pi))
    def test_derivative_is_differentiated_modulation(self, t):
        est = TestTransversal._est
        d = est.coefficients(t, derivative=True)
        tau = est._params(t)
        np.testing.assert_allclose(d, -0.5 * np.sin(tau), atol=1e-15)

    _est = DeckSumSolver(n_max=5, word_cap=6).fit()


class TestConstants:
    def test_positive_and_assembled(self, constants):
        for c in (constants.c1, constants.c2, constants.c3, constants.c4):
            assert 0 < c < math.inf
        assert constants.k == 0
        expected = 4 * constants.c1 * constants.c2 * constants.c4 * constants.c3 ** (-constants.s / 2)
        assert constants.tail_coefficient == pytest.approx(expected, rel=1e-15)

    def test_hormander_ratio_within_bound(self, constants):
        assert constants.hormander_ratio <= constants.hormander_constant

    def test_counting_band(self, constants):
        ratios = [c / 2**n for n, c in constants.counts.items() if 3 <= n <= 8 and c > 0]
        assert max(ratios) / min(ratios) <= 4

    def test_predicted_tail_dominates(self, solver, constants):
        for N in (3, 5, 6, 7):
            assert constants.predicted_tail(N, 8) >= measured_tail(solver, T, N)

    def test_geometric_sum(self):
        r = ConstantsReport(1, 1, 1, 1, 0, 5, 0, 0)
        q = 0.5**0.5
        assert r.predicted_tail(2) == pytest.approx(4 * q**3 / (1 - q))
        assert r.predicted_tail(2, 3) == pytest.approx(4 * q**3)


class TestDeterminism:
    def test_repeat_and_threads(self):
        a = DeckSumSolver(n_max=6, word_cap=8).fit().solve(T)
        b = DeckSumSolver(n_max=6, word_cap=8).fit().solve(T)
        c = DeckSumSolver(n_max=6, word_cap=8, threads=3).fit().solve(T)
        assert a.u.to_bytes() == b.u.to_bytes() == c.u.to_bytes()
        assert a.annulus_norms == c.annulus_norms

import numpy as np
import pytest

from lamdbar.correction import (
    ACTIVE_K,
    correction_solve,
    direct_sum,
    family_continuity,
    metric_perturbation,
    perturbation_sweep,
    piece_constants,
    restricted_vs_global,
)
from lamdbar.dbar import PerturbedWeight, WeightSpec, c1_bump, dbar_field
from lamdbar.exceptions import ConfigError, DomainError
from lamdbar.grid import Grid
from lamdbar.hyperbolic import annulus_bounds
from lamdbar.partition import tilde_chi, tilde_chi_dbar

W = WeightSpec()


@pytest.fixture(scope="module")
def n3():
    return correction_solve([1.0], 3)


@pytest.fixture(scope="module")
def disk128():
    return Grid.disk(6, 1 / 128)


@pytest.fixture(scope="module")
def bump_form(disk128):
    _, dF = c1_bump(0.1, 0.3)
    return disk128.sample(dF, "form")


class TestAnnulusCorrection:
    def test_active_rectangles(self):
        assert ACTIVE_K == tuple(range(7, 24))

    def test_zero_input(self):
        r = correction_solve([0.0, 0.0], 4)
        assert r.norm_sq() == 0 and r.c1 == 0
        assert np.all(r([0.2, 0.9]) == 0)

    def test_bad_input(self):
        with pytest.raises(DomainError):
            correction_solve([1.0], 0)
        with pytest.raises(DomainError):
            correction_solve([[1.0]], 3)

    def test_constant_determined_twice(self, n3):
        assert n3.constant_gap < 1e-5
        # the holomorphic projection nearly cancels the cut-off inside
        assert n3.constants[0].real == pytest.approx(-1.0, abs=1e-3)

    def test_dbar_matches_cutoff(self, n3):
        g = Grid(1 / 512, 0.96)
        u = n3.field(g)
        d = dbar_field(u)
        inner, outer = annulus_bounds(3)
        r = np.abs(g.z)
        band = (r > inner + 0.01) & (r < outer - 0.01)
        # the cut-off has jumps in its second derivative at 1/4 and 3/4 of the band
        for x in (0.25, 0.75):
            band &= np.abs(r - inner - x * (outer - inner)) > 3 * g.h
        ref = tilde_chi_dbar(3, g.z)
        assert np.nanmax(np.abs(d[band] - ref[band])) < 0.01 * np.abs(ref[band]).max()

    def test_direct_sum_equals_model(self, n3):
        z = np.array([0.3, 0.9 * np.exp(0.4j), 0.99])
        assert np.abs(direct_sum(n3, 0, z) - n3(z)).max() < 1e-5

    def test_c1_uniform_in_n(self, n3):
        r5 = correction_solve([0, 0, 1.0], 5)
        assert 0.5 < n3.c1 < 1.0
        assert r5.c1 == pytest.approx(n3.c1, rel=0.1)

    def test_outside_annulus(self, n3):
        # beyond A_n the correction is a constant multiple of the input
        z = np.array([0.95, 0.97j])
        np.testing.assert_allclose(n3(z), n3.constants[0] * np.ones(2), atol=1e-14)
        assert np.all(tilde_chi(3, z) == 0)

    def test_piece_constants_do_not_depend_on_l(self, n3):
        c = piece_constants(n3, 0, (0, 3))
        for k in ACTIVE_K:
            assert c[(k, 3)] == pytest.approx(c[(k, 0)], rel=1e-4)
        assert max(c.values()) < 0.01


class TestTruncation:
    def test_zero_data(self, disk128):
        r = restricted_vs_global(disk128.zeros("form"), 5)
        assert r.difference == 0 and r.c2 == 0

    def test_support_must_avoid_annulus(self, disk128):
        _, dF = c1_bump(0.5, 0.4)
        with pytest.raises(DomainError):
            restricted_vs_global(disk128.sample(dF, "form"), 3)

    def test_difference_decreases_and_ratio_is_stable(self, bump_form):
        reps = [restricted_vs_global(bump_form, n) for n in (3, 5, 6, 7)]
        diffs = [r.difference for r in reps]
        assert all(a > b for a, b in zip(diffs, diffs[1:]))
        c2 = [r.c2 for r in reps[1:]]
        assert max(c2) / min(c2) < 1.05
        # each step in n roughly halves the difference
        assert diffs[3] / diffs[2] == pytest.approx(0.5, abs=0.05)


class TestPerturbation:
    def test_same_weight_same_data(self, bump_form):
        r = metric_perturbation(bump_form, bump_form, W, W)
        assert r.difference < 1e-15 and r.epsilon < 1e-15
        assert r.curvature_constant == 4

    def test_linear_in_delta(self, bump_form):
        diffs, slope = perturbation_sweep(bump_form, [0.005, 0.01, 0.02, 0.04])
        assert slope >= 0.9
        assert np.all(np.diff(diffs) > 0)

    def test_zero_second_datum(self, bump_form, disk128):
        r = metric_perturbation(bump_form, disk128.zeros("form"), W, PerturbedWeight(W, 0.02))
        assert r.epsilon == 0
        assert r.difference <= r.data_term

    def test_data_term_bounds_same_weight_difference(self, disk128, bump_form):
        _, dG = c1_bump(-0.2j, 0.25)
        v2 = disk128.sample(dG, "form")
        r = metric_perturbation(bump_form, v2, W, W)
        assert r.difference <= r.data_term

    def test_curvature_violation(self, bump_form):
        with pytest.raises(DomainError):
            metric_perturbation(bump_form, bump_form, W, PerturbedWeight(W, 1.0))
        with pytest.raises(ConfigError):
            perturbation_sweep(bump_form, [0.0, 0.01])


class TestFamilies:
    def test_constant_family(self, bump_form):
        r = family_continuity(lambda t: bump_form, lambda t: W, 0.0, [-0.1, 0.1])
        assert r.lipschitz == 0

    def test_rotating_bump_with_varying_weight(self, disk128):
        vf = lambda s: disk128.sample(c1_bump(0.1 * np.exp(1j * s), 0.3)[1], "form")  # noqa: E731
        wf = lambda s: PerturbedWeight(W, 0.01 * np.sin(s))  # noqa: E731
        r = family_continuity(vf, wf, 0.5, [-0.1, -0.05, 0.05, 0.1])
        assert np.all(np.diff(r.modulus) > 0)
        # distances scale linearly with the step
        assert r.modulus[1] / r.modulus[0] == pytest.approx(2.0, rel=0.05)
        assert np.isfinite(r.lipschitz)

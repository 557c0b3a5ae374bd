"""End-to-end acceptance checks, one test per criterion.

Each test measures its own wall time against the stated budget.  Runs are
single-threaded unless the criterion is about thread counts.
"""

import math
import time

import numpy as np
import pytest

from lamdbar.cli import EXIT_OK, run
from lamdbar.correction import (
    correction_solve,
    family_continuity,
    perturbation_sweep,
    restricted_vs_global,
)
from lamdbar.dbar import (
    PerturbedWeight,
    WeightSpec,
    bergman_project,
    c1_bump,
    dbar_residual,
    minimal_solution,
    orthogonality_defect,
)
from lamdbar.decksum import DeckSumSolver, corpus, fitted_ratio, measured_tail
from lamdbar.fuchsian import group_report
from lamdbar.grid import Grid
from lamdbar.hyperbolic import verify_disk_lemmas
from lamdbar.partition import partition_invariants

W = WeightSpec()
T = 0.7


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        print(f"runtime {self.elapsed:.1f}s (budget {self.seconds}s)")

    def check(self):
        assert self.elapsed < self.seconds


def random_bumps(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        r = rng.uniform(0.15, 0.35)
        c = rng.uniform(0, 0.5 - r) * np.exp(2j * np.pi * rng.uniform())
        amp = rng.normal() + 1j * rng.normal()
        out.append(c1_bump(c, r, amp))
    return out


def test_criterion_1_disk_lemmas():
    with Budget(30) as b:
        rep = verify_disk_lemmas(sample_count=100_000, seed=1, tol=1e-12)
    for name, c in rep.checks.items():
        print(f"{name}: checked {c.n_checked}, violations {c.n_violations}, worst ratio {c.worst_ratio:.6g}")
        assert c.n_checked >= 100_000
    assert rep.passed
    b.check()


def test_criterion_2_partition():
    with Budget(60) as b:
        rows = partition_invariants(range(1, 9), points=10_000, seed=0, regularity_samples=100)
    for r in rows:
        print(r)
    assert max(r["sum_error"] for r in rows) < 1e-10
    assert max(r["max_overlap"] for r in rows) <= 4
    g = [r["gradient_ratio_min"] for r in rows] + [r["gradient_ratio_max"] for r in rows]
    assert max(g) / min(g) <= 4
    alpha = [r["composed_alpha_max"] for r in rows]
    chi = [r["composed_chi_max"] for r in rows]
    # pullback C1 norms bounded uniformly in n: no growth from the first to the last annulus
    assert max(alpha) <= 4 * min(alpha) and max(chi) <= 4 * min(chi)
    b.check()


def test_criterion_3_group():
    with Budget(120) as b:
        rep = group_report(word_cap=12, n_cap=8)
    print({k: rep[k] for k in ("relation_residual", "cosh_inradius", "counts")})
    assert rep["relation_residual"] < 1e-10
    assert rep["cosh_inradius"] == pytest.approx(1 + math.sqrt(2), abs=1e-12)
    ratios = [rep["ratios"][n] for n in range(3, 9)]
    print("count ratios n=3..8:", ratios)
    b.check()
    # fails: no orbit point of the octagon group lands in A_4, so the band is unbounded
    assert min(ratios) > 0 and max(ratios) / min(ratios) <= 4


def test_criterion_4_solver_oracle():
    with Budget(300) as b:
        g = Grid.disk(6, 1 / 256)
        d = W.density(g.z)
        errs, orth = [], []
        for F, dF in random_bumps(20, seed=4):
            u = minimal_solution(g.sample(dF, "form"), W, 24).field()
            Ff = g.sample(F)
            ref = Ff - bergman_project(Ff, W, 24)
            errs.append((u - ref).norm(d) / ref.norm(d))
            orth.append(orthogonality_defect(u, W, 24))
        F, dF = random_bumps(1, seed=5)[0]
        res = []
        for h in (1 / 64, 1 / 128, 1 / 256):
            gh = Grid.disk(6, h)
            v = gh.sample(dF, "form")
            res.append(dbar_residual(minimal_solution(v, W, 24).field(), v)["max_rel"])
    ratios = [b_ / a for a, b_ in zip(res, res[1:])]
    print(f"worst relative error {max(errs):.3g}, worst orthogonality {max(orth):.3g}, residual ratios {ratios}")
    assert max(errs) < 0.01
    assert max(orth) < 1e-10
    for r in ratios:
        assert r == pytest.approx(0.5, rel=0.3)
    b.check()


def test_criterion_5_correction():
    with Budget(300) as b:
        c1 = [correction_solve([1.0, 0.5], n).c1 for n in (3, 5)]
        g = Grid.disk(6, 1 / 128)
        _, dF = c1_bump(0.1, 0.3)
        v = g.sample(dF, "form")
        diffs = [restricted_vs_global(v, n).difference for n in (3, 4, 5, 6, 7)]
        _, slope = perturbation_sweep(v, [0.005, 0.01, 0.02, 0.04])
        vf = lambda s: g.sample(c1_bump(0.1 * np.exp(1j * s), 0.3)[1], "form")  # noqa: E731
        wf = lambda s: PerturbedWeight(W, 0.01 * np.sin(s))  # noqa: E731
        cont = family_continuity(vf, wf, 0.5, [-0.2, -0.1, -0.05, -0.025, 0.025, 0.05, 0.1, 0.2])
    print(f"c1 {c1}, truncation differences {diffs}, delta slope {slope:.4f}, modulus {cont.modulus}")
    assert max(c1) / min(c1) <= 4
    assert all(a > b_ for a, b_ in zip(diffs, diffs[1:]))
    assert slope >= 0.9
    assert np.all(np.diff(cont.modulus) > 0)
    assert cont.modulus[0] < 0.2 * cont.modulus[-1]
    b.check()


def test_criterion_6_decay_and_tail():
    with Budget(600) as b:
        rows = []
        for spec, t in corpus(20, seed=0):
            est = DeckSumSolver.from_spec(spec).fit()
            consts = est.measure_constants()
            leaf = est.solve(t, constants=consts)
            rows.append((fitted_ratio(leaf.annulus_norms), measured_tail(est, t, 6), consts.predicted_tail(6, spec.n_max)))
    for r in rows:
        print(f"ratio {r[0]:.4f}  measured tail {r[1]:.3e}  predicted {r[2]:.3e}")
    assert max(r[0] for r in rows) <= 0.85
    assert all(r[1] <= r[2] for r in rows)
    b.check()


def test_criterion_7_main_solve():
    with Budget(600) as b:
        est = DeckSumSolver().fit()
        leaf = est.solve(T, N=8)
        defects = [est.equivariance_defect(T, "a", N) for N in range(1, 9)]
    print(f"residual {leaf.residual:.3g}, equivariance defects {defects}")
    assert leaf.residual < 0.05
    assert defects[-1] < 0.05
    assert all(b_ <= a + 1e-12 for a, b_ in zip(defects, defects[1:]))
    assert defects[-1] < defects[3]
    b.check()


def test_criterion_8_transversal_regularity():
    with Budget(600) as b:
        est = DeckSumSolver().fit()
        steps = [0.2, 0.1, 0.05, 0.025]
        L = [est.lipschitz_constant(T, T + d) for d in steps]
        deltas = np.array([0.1, 0.05, 0.02, 0.01])
        defects, scale = est.derivative_defects(T, deltas)
        order = np.polyfit(np.log(deltas), np.log(defects), 1)[0]
    print(f"Lipschitz constants {L}, derivative defects {defects}, fitted order {order:.3f}")
    assert max(L) / min(L) < 1.15
    assert abs(L[-1] - L[-2]) < abs(L[0] - L[1])
    assert order >= 1.5
    b.check()


@pytest.mark.parametrize("threads", [2, 4])
def test_criterion_9_determinism(tmp_path, threads):
    with Budget(600) as b:
        for command in ("group", "solve", "constants", "sweep"):
            assert run(command, None, str(tmp_path / f"{command}1"), seed=0, threads=1) == EXIT_OK
            assert run(command, None, str(tmp_path / f"{command}{threads}"), seed=0, threads=threads) == EXIT_OK
            one = sorted((tmp_path / f"{command}1").iterdir())
            other = sorted((tmp_path / f"{command}{threads}").iterdir())
            assert [p.name for p in one] == [p.name for p in other]
            for p, q in zip(one, other):
                assert p.read_bytes() == q.read_bytes(), p.name
    b.check()

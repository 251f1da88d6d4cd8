"""End-to-end acceptance checks, one recorded PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -s``; the summary is also
printed in the terminal report of any pytest run that includes this file.
"""

import filecmp
import time

import numpy as np
import pytest

from seriesunfold.cli import main
from seriesunfold.engine import Smoother, StoppingPolicy, init_state, initial_terms, iterate_step, run_unfold
from seriesunfold.errors import DivisionBlowupError
from seriesunfold.folding import FoldingMatrix, KernelPdf, matrix_from_kernel
from seriesunfold.histogram import Axis, GridHistogram
from seriesunfold.pi0 import (
    PI0_MASS,
    DecayConfig,
    MomentumBinning,
    decay_to_gammas,
    run_pi0_experiment,
    sample_pi0,
)
from seriesunfold.spectral import diagnose_double_kernel, diagnose_kernel, naive_deconvolve

from conftest import cauchy_bins, mixture_kernel, random_stochastic

GRID = Axis(-15, 15, 300)
COUNTS = 1e6


def folded_instance(kernel, noisy, seed=0):
    """Cauchy truth folded with ``kernel``; Poisson counts or the noiseless density."""
    truth = cauchy_bins(GRID)
    a = matrix_from_kernel(kernel, GRID)
    lam = COUNTS * (a.entries @ truth) * GRID.width
    if noisy:
        h = GridHistogram((GRID,), np.random.default_rng(seed).poisson(lam), "counts")
    else:
        h = GridHistogram((GRID,), lam, "density")
    return truth, a, h


def l1(f, truth):
    return float(np.abs(f / (COUNTS * GRID.width) - truth).sum() * GRID.width)


@pytest.fixture(scope="module")
def gauss_noisy():
    kernel = KernelPdf.gaussian(1.0, GRID.width)
    truth, a, h = folded_instance(kernel, noisy=True)
    t0 = time.perf_counter()
    rep = run_unfold(h, a, "parity", StoppingPolicy(noise_threshold=0.3, max_iters=500), kernel=kernel)
    return truth, h, kernel, rep, time.perf_counter() - t0


class TestGaussCauchy:
    def test_noiseless_within_200(self, record_acceptance):
        truth, a, h = folded_instance(KernelPdf.gaussian(1.0, GRID.width), noisy=False)
        rep = run_unfold(h, a, "identity", StoppingPolicy(max_iters=200))
        d = l1(rep.f, truth)
        record_acceptance("1a", d < 0.02, f"noiseless Gauss*Cauchy L1 after {rep.n} iterations = {d:.4f} (need < 0.02)")
        assert d < 0.02

    def test_noisy_stopped(self, gauss_noisy, record_acceptance):
        truth, _, _, rep, _ = gauss_noisy
        d = l1(rep.f, truth)
        record_acceptance("1b", d < 0.08, f"noisy Gauss*Cauchy L1 = {d:.4f} at n={rep.n} "
                                          f"({rep.stop_reason}) (need < 0.08)")
        assert d < 0.08

    def test_runtime(self, gauss_noisy, record_acceptance):
        dt = gauss_noisy[-1]
        record_acceptance("1c", dt < 10, f"noisy Gauss*Cauchy runtime {dt:.2f} s (need < 10 s)")
        assert dt < 10


class TestTriangleCauchy:
    def test_stopped(self, record_acceptance):
        kernel = KernelPdf.triangle(2.0, GRID.width)
        truth, a, h = folded_instance(kernel, noisy=True)
        t0 = time.perf_counter()
        rep = run_unfold(h, a, "parity", StoppingPolicy(max_iters=500), kernel=kernel)
        dt = time.perf_counter() - t0
        d = l1(rep.f, truth)
        ok = d < 0.1 and dt < 10
        record_acceptance(2, ok, f"triangle*Cauchy L1 = {d:.4f} at n={rep.n} ({rep.stop_reason}), "
                                 f"{dt:.2f} s (need < 0.1, < 10 s)")
        assert ok


class TestNaiveContrast:
    def test_gauss_and_triangle(self, gauss_noisy, record_acceptance):
        truth, h, kernel, rep, _ = gauss_noisy
        naive = naive_deconvolve(h, kernel).values / COUNTS
        d_naive = float(np.abs(naive - truth).sum() * GRID.width)
        d_series = l1(rep.f, truth)
        tri = KernelPdf.triangle(2.0, GRID.width)
        _, _, h_tri = folded_instance(tri, noisy=True)
        try:
            naive_deconvolve(h_tri, tri)
            raised = False
        except DivisionBlowupError:
            raised = True
        ok = d_naive >= 10 * d_series and raised
        record_acceptance(3, ok, f"naive L1 = {d_naive:.3g} vs series {d_series:.4f} "
                                 f"(ratio {d_naive / d_series:.3g}, need >= 10); triangle blowup raised: {raised}")
        assert ok


class TestOracleEquivalence:
    def test_random_matrices(self, record_acceptance):
        rng = np.random.default_rng(2024)
        worst, checked = 0.0, 0
        t0 = time.perf_counter()
        while checked < 200:
            m = int(rng.integers(2, 17))
            a = random_stochastic(rng, m, rng.uniform(0.6, 0.9))
            if np.abs(np.linalg.eigvals(np.eye(m) - a)).max() >= 1:
                continue
            f = rng.dirichlet(np.ones(m))
            ax = Axis(0, 1, m)
            h = GridHistogram((ax,), a @ f, "density")
            # rho(I - A) <= 2 (1 - alpha) <= 0.8, so 150 terms leave ~1e-15
            rep = run_unfold(h, FoldingMatrix.from_columns(a, (ax,), (ax,)), "identity",
                             StoppingPolicy(max_iters=150))
            oracle = np.linalg.solve(a, h.values)
            worst = max(worst, float(np.abs(rep.f - oracle).sum()))
            checked += 1
        dt = time.perf_counter() - t0
        ok = worst < 1e-6 and dt < 5
        record_acceptance(4, ok, f"200 random matrices: worst L1 vs dense solve {worst:.2e}, "
                                 f"{dt:.2f} s (need < 1e-6, < 5 s)")
        assert ok


class TestCovarianceRecursion:
    def test_against_sandwich(self, record_acceptance):
        rng = np.random.default_rng(7)
        worst = 0.0
        for m in (3, 8, 16):
            a_q = random_stochastic(rng, m, 0.6)
            a_g = random_stochastic(rng, m, 0.8)
            h = GridHistogram((Axis(0, 1, m),), rng.integers(5, 500, m))
            s = init_state(h, a_g)
            f0, c0 = initial_terms(s)
            a = a_g @ a_q
            b = np.eye(m) - a
            power, total = np.eye(m), np.eye(m)
            for n in range(1, 51):
                s = iterate_step(s, a, f0, c0)
                power = power @ b
                total = total + power
                oracle = total @ c0 @ total.T
                worst = max(worst, float(np.abs(s.cov - oracle).max() / np.abs(oracle).max()))
        ok = worst < 1e-8
        record_acceptance(5, ok, f"covariance recursion vs sandwich, M<=16, N<=50: "
                                 f"worst relative deviation {worst:.2e} (need < 1e-8)")
        assert ok


class TestDoubleKernelAdmissible:
    def test_mixtures(self, record_acceptance):
        rng = np.random.default_rng(11)
        double_ok, single_fail = 0, 0
        for _ in range(100):
            k = mixture_kernel(rng, 0.1)
            double_ok += diagnose_double_kernel(k).condition_holds
            single_fail += not diagnose_kernel(k).condition_holds
        ok = double_ok == 100 and single_fail > 0
        record_acceptance(6, ok, f"double kernel admissible {double_ok}/100; "
                                 f"single-kernel condition fails on {single_fail}/100 (need > 0)")
        assert ok


PI0_BINNING = MomentumBinning(Axis(-2, 2, 40), Axis(0, 2, 40))


class TestPi0Experiment:
    def test_unfold_at_1e6(self, record_acceptance):
        r = run_pi0_experiment(DecayConfig(seed=0), 10**6, PI0_BINNING)
        ok = r.l1 < 0.1 and 0.65 <= r.cauchy_saturation <= 0.95
        record_acceptance("7a", ok, f"pi0 at 1e6 events: L1 = {r.l1:.4f} (need < 0.1), "
                                    f"Cauchy saturation {r.cauchy_saturation:.3f} (need [0.65, 0.95])")
        assert ok

    def test_generator_moments(self, record_acceptance):
        cfg = DecayConfig(seed=5)
        p = sample_pi0(cfg, np.random.default_rng(cfg.seed), 10**6)
        y = 0.5 * np.log((p.e + p.pz) / (p.e - p.pz))
        et = np.sqrt(p.e ** 2 - p.pz ** 2)
        sd, mean = float(y.std()), float((et - cfg.m).mean())
        ok = abs(sd - 0.5) <= 0.002 and abs(mean - 0.5) <= 0.002
        record_acceptance("7b", ok, f"generator: rapidity std {sd:.4f}, mean E_T - m {mean:.4f} "
                                    f"(need 0.5 +- 0.002 each)")
        assert ok

    def test_runtime_at_1e5(self, record_acceptance):
        t0 = time.perf_counter()
        r = run_pi0_experiment(DecayConfig(seed=0), 10**5, PI0_BINNING)
        dt = time.perf_counter() - t0
        record_acceptance("7c", dt < 60, f"pi0 at 1e5 events: {dt:.1f} s (need < 60 s); L1 = {r.l1:.4f}, "
                                         f"saturation {r.cauchy_saturation:.3f}")
        assert dt < 60


class TestKinematicsInvariants:
    def test_million_decays(self, record_acceptance):
        rng = np.random.default_rng(8)
        worst = {"mass": 0.0, "null": 0.0, "conservation": 0.0}
        for _ in range(4):
            p = sample_pi0(DecayConfig(), rng, 250_000)
            k1, k2 = decay_to_gammas(p, PI0_MASS, rng)
            worst["mass"] = max(worst["mass"], float(np.abs(p.mass2 - PI0_MASS ** 2).max()))
            for k in (k1, k2):
                worst["null"] = max(worst["null"], float((np.abs(k.e - np.sqrt(k.p2)) / k.e).max()))
            dev = np.abs((k1 + k2).as_array() - p.as_array()) / p.e
            worst["conservation"] = max(worst["conservation"], float(dev.max()))
        ok = all(v <= 1e-9 for v in worst.values())
        record_acceptance(8, ok, "1e6 decays: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                                 + " (need <= 1e-9)")
        assert ok


CLI_RUNS = {
    "deconvolve": ["grid = -5, 5, 60", "counts = 20000", "max_iters = 30"],
    "unfold": ["response = cpdf:gauss(0.3)", "max_iters = 15", "error_mode = gaussian"],
    "diagnose": ["kernel = triangle(1)", "width = 0.25"],
    "cauchy-test": ["n_events = 2000", "eta = -2, 2, 6", "pt = 0, 2, 6", "n_per_bin = 80",
                    "max_iters = 10"],
    "simulate-pi0": ["n_events = 2000", "eta = -2, 2, 6", "pt = 0, 2, 6", "n_per_bin = 80",
                     "max_iters = 10", "energy_resolution = 0.05", "angle_resolution = 0.01"],
    "verify-condition": ["n_max = 10", "smoother = parity"],
}


class TestDeterminism:
    def test_rerun_from_echoed_config(self, tmp_path, record_acceptance):
        h = GridHistogram((Axis(-3, 3, 20),), np.random.default_rng(0).poisson(100, 20))
        h.to_csv(tmp_path / "measured.csv")
        mismatched = []
        for command, lines in CLI_RUNS.items():
            if command == "unfold":
                lines = lines + [f"measured = {tmp_path / 'measured.csv'}"]
            ini = tmp_path / f"{command}.ini"
            ini.write_text(f"[{command}]\n" + "\n".join(lines) + "\n")
            first, second = tmp_path / f"{command}-1", tmp_path / f"{command}-2"
            assert main([command, "--config", str(ini), "--out", str(first)]) == 0
            assert main([command, "--config", str(first / "config.ini"), "--out", str(second)]) == 0
            names = sorted(p.name for p in first.iterdir())
            assert names == sorted(p.name for p in second.iterdir())
            _, bad, errors = filecmp.cmpfiles(first, second, names, shallow=False)
            mismatched += [f"{command}/{n}" for n in bad + errors]
        ok = not mismatched
        record_acceptance(9, ok, f"{len(CLI_RUNS)} CLI commands re-run from echoed config; "
                                 f"differing files: {mismatched or 'none'}")
        assert ok

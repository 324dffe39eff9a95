"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the calibration criterion
runs 50 simulate/fit/check cycles and takes several minutes on one core).
"""

import hashlib
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.stats import binomtest

from ppc_admix import discrepancies as dsc
from ppc_admix import ppc_engine as pe
from ppc_admix.admixture_em import FitConfig, best_permutation, fit, log_likelihood, ModelParams
from ppc_admix.cli import main
from ppc_admix.genotype_data import inject_ld, separated_frequencies, simulate_dataset
from ppc_admix.ppc_engine import PpcSpec, run_ppc
from ppc_admix.replicator import replicate_batch

from conftest import make_fitted
from test_discrepancies import oracle_ibs, oracle_log_marginal, oracle_mi


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return emit


def test_criterion_1_constants(tmp_path, verdict):
    sim, fitdir, ppcdir = tmp_path / "sim", tmp_path / "fit", tmp_path / "ppc"
    main(["simulate", "--n", "12", "--l", "30", "--k", "2", "--out", str(sim)])
    main(["fit", "--genotypes", str(sim / "genotypes.txt"), "--k", "2", "--out", str(fitdir)])
    main(["ppc", "--genotypes", str(sim / "genotypes.txt"), "--labels", str(sim / "labels.txt"),
          "--model", str(fitdir), "--out", str(ppcdir)])
    fit_cfg = json.loads((fitdir / "config.json").read_text())["resolved"]
    ppc_cfg = json.loads((ppcdir / "config.json").read_text())["resolved"]
    sim_cfg = json.loads((sim / "config.json").read_text())["resolved"]
    checks = {
        "R=100": all(ppc_cfg["replicates"][n] == 100 for n in ("mi", "fst", "entropy", "association")),
        "R_ibs=30": ppc_cfg["replicates"]["ibs"] == 30,
        "iterations=1000": fit_cfg["iterations"] == 1000,
        "alpha=gamma=1": fit_cfg["alpha"] == fit_cfg["gamma"] == 1.0 == sim_cfg["alpha"] == sim_cfg["gamma"],
        "init_clamp": fit_cfg["init_clamp"] == [0.05, 0.95],
        "ibs_threshold=500": ppc_cfg["min_shared"] == 500,
        "mi_window=10000": ppc_cfg["max_snps"] == 10_000,
        "risk=0.5/0.1": ppc_cfg["phenotype_risk"] == [0.5, 0.1],
        "smoothing=0.1": ppc_cfg["beta_smoothing"] == 0.1,
        "stars=2/6/10": ppc_cfg["star_thresholds"] == [2, 6, 10],
        "lags=1..30": ppc_cfg["lags"] == list(range(1, 31)),
    }
    bad = [k for k, v in checks.items() if not v]
    verdict(1, not bad, f"config echo checked {len(checks)} constants; mismatched: {bad or 'none'}")


@pytest.mark.slow
def test_criterion_2_em_monotone(verdict):
    worst = 0.0
    runs = 0
    for seed, K in itertools.product(range(10), (1, 2, 3)):
        ds, _ = simulate_dataset(100, 500, K, seed=seed)
        trace = fit(ds, K, FitConfig(iterations=1000, seed=seed)).loglik_trace
        worst = min(worst, float(np.min(np.diff(trace))))
        runs += 1
    ds, _ = simulate_dataset(100, 500, 1, seed=99)
    f1 = fit(ds, 1, FitConfig(iterations=1000, seed=0))
    closed_phi = ds.genotypes.sum(axis=0) / (2.0 * ds.n)
    closed_phi = np.clip(closed_phi, 1e-6, 1 - 1e-6)
    closed_ll = log_likelihood(ds, ModelParams(np.ones((ds.n, 1)), closed_phi[:, None]))
    k1 = np.allclose(f1.phi[:, 0], closed_phi, rtol=0, atol=1e-12) and np.all(f1.theta == 1.0)
    ok = worst >= -1e-8 and k1 and abs(f1.loglik_trace[-1] - closed_ll) < 1e-6
    verdict(2, ok, f"{runs} fits x 1000 iterations, worst step {worst:.3e} (slack -1e-8); K=1 closed form {'exact' if k1 else 'MISMATCH'}")


def test_criterion_3_recovery(verdict):
    ds, truth = simulate_dataset(200, 1000, 2, phi_spec=separated_frequencies([0.1, 0.9]), seed=2024)
    t0 = time.perf_counter()
    fitted = fit(ds, 2, FitConfig(iterations=1000, seed=1))
    elapsed = time.perf_counter() - t0
    perm = best_permutation(fitted.theta, truth.theta_true)
    theta_mae = float(np.mean(np.abs(fitted.theta[:, perm] - truth.theta_true)))
    phi_mae = float(np.mean(np.abs(fitted.phi[:, perm] - truth.phi_true)))
    ok = theta_mae <= 0.05 and phi_mae <= 0.05 and elapsed < 60
    verdict(3, ok, f"theta MAE {theta_mae:.4f}, phi MAE {phi_mae:.4f} (<= 0.05), runtime {elapsed:.1f}s (< 60s)")


def test_criterion_4_oracles(verdict):
    failures = []
    # MI vs brute force on every allele configuration of 2 x 3 x 2
    rng = np.random.default_rng(0)
    zs = [rng.integers(0, 2, size=(2, 3, 2)) for _ in range(4)] + [np.zeros((2, 3, 2), int)]
    worst = 0.0
    for z in zs:
        for bits in itertools.product((0, 1), repeat=12):
            x = np.array(bits, dtype=np.uint8).reshape(2, 3, 2)
            for lag in (1, 2):
                v, o = dsc.mutual_info_ld(x, z, 0, lag), oracle_mi(x, z, 0, lag)
                if (v is None) != (o is None):
                    failures.append("mi-definedness")
                elif v is not None:
                    worst = max(worst, abs(v - o))
    if worst > 1e-12:
        failures.append(f"mi err {worst:.2e}")
    # F_ST hand cases
    z = np.zeros((4, 1, 2), int)
    same = np.array([[[1, 0]], [[1, 0]], [[0, 1]], [[1, 0]]], dtype=np.uint8)
    fixed = np.array([[[0, 0]], [[0, 0]], [[1, 1]], [[1, 1]]], dtype=np.uint8)
    labels = ["a", "a", "b", "b"]
    if dsc.fst_vs_labels(same, z, labels, 0).mean != 0.0 or dsc.fst_vs_labels(fixed, z, labels, 0).mean != 1.0:
        failures.append("fst hand cases")
    # entropy bounds
    for K in (2, 3, 4):
        h = dsc._entropy_bits(rng.dirichlet(np.ones(K), size=1000))
        if not (np.all(h >= 0) and np.all(h <= math.log2(K) + 1e-12)):
            failures.append(f"entropy bounds K={K}")
    # IBS symmetric and in [0, 1]
    for s in range(50):
        r = np.random.default_rng(s)
        x = r.integers(0, 2, size=(5, 10, 2)).astype(np.uint8)
        zz = r.integers(0, 2, size=(5, 10, 2))
        v = dsc.ibs_similarity(x, zz, 0, min_shared=3)
        p = r.permutation(5)
        w = dsc.ibs_similarity(x[p], zz[p], 0, min_shared=3)
        o = oracle_ibs(x, zz, 0, 3)
        if v is not None and (not 0 <= v <= 1 or abs(v - w) > 1e-12 or abs(v - o) > 1e-12):
            failures.append("ibs")
    # beta-binomial marginal vs lgamma oracle
    err = max(abs(float(dsc.log_marginal_bernoulli(s, n)) - oracle_log_marginal(s, n)) for n in range(60) for s in range(n + 1))
    if err > 1e-9:
        failures.append(f"beta-binomial err {err:.2e}")
    verdict(4, not failures, f"MI max err {worst:.1e}, beta-binomial max err {err:.1e}; failures: {failures or 'none'}")


@pytest.mark.slow
def test_criterion_5_calibration(verdict):
    cycles = 50
    star_hits = {n: 0 for n in dsc.DISCREPANCY_NAMES}
    pooled = []
    for c in range(cycles):
        ds, _ = simulate_dataset(100, 500, 2, seed=1000 + c)
        fitted = fit(ds, 2, FitConfig(iterations=1000, seed=c))
        for name in dsc.DISCREPANCY_NAMES:
            res = run_ppc(fitted, ds, name, seed=c)
            star_hits[name] += res.max_stars >= 1
            pooled.extend(v for v in res.z.ravel() if not math.isnan(v))
    rates = {n: h / cycles for n, h in star_hits.items()}
    z = np.array(pooled)
    mean, sd = float(z.mean()), float(z.std(ddof=1))
    ok = all(r <= 0.2 for r in rates.values()) and abs(mean) < 0.5 and 0.5 <= sd <= 2
    rate_txt = ", ".join(f"{n} {r:.2f}" for n, r in rates.items())
    verdict(5, ok, f"star>=1 rates ({rate_txt}) vs <= 0.20; pooled z mean {mean:.2f} sd {sd:.2f}")


@pytest.mark.slow
def test_criterion_6_detection(verdict):
    runs = 20
    ld_hits = fst_hits = 0
    for s in range(runs):
        ds, _ = simulate_dataset(100, 500, 2, seed=2000 + s)
        ld = inject_ld(ds, 5)
        fitted = fit(ld, 2, FitConfig(iterations=1000, seed=s))
        res = run_ppc(fitted, ld, PpcSpec("mi", lags=(1,)), seed=s)
        ld_hits += res.max_stars >= 1

        ds4, _ = simulate_dataset(100, 500, 4, alpha=0.1, seed=3000 + s)
        fitted2 = fit(ds4, 2, FitConfig(iterations=1000, seed=s))
        res = run_ppc(fitted2, ds4, "fst", seed=s)
        fst_hits += res.max_stars >= 1
    ok = ld_hits / runs >= 0.8 and fst_hits / runs >= 0.8
    verdict(6, ok, f"LD->MI lag 1 stars>=1 in {ld_hits}/{runs}; K=4 data fit with K=2 -> F_ST stars>=1 in {fst_hits}/{runs} (need >= 80%)")


def test_criterion_7_replicator(verdict):
    rng = np.random.default_rng(7)
    n, L, K = 10, 50, 3
    phi = rng.uniform(0.02, 0.98, size=(L, K))
    z = rng.integers(0, K, size=(n, L, 2))
    fitted = make_fitted(rng.dirichlet(np.ones(K), size=n), phi, z)
    draws = 1000
    ones = np.zeros((n, L, 2), dtype=np.int64)
    for x in replicate_batch(fitted, draws, seed=1):
        ones += x
    expected = phi[np.arange(L)[None, :, None], z]
    pvals = np.array([binomtest(int(k), draws, float(p)).pvalue for k, p in zip(ones.ravel(), expected.ravel())])
    rate = float(np.mean(pvals < 0.001))
    verdict(7, rate <= 0.005, f"{pvals.size} allele cells x {draws} draws, rejection rate {rate:.4f} at p=0.001 (<= 0.005)")


def test_criterion_8_determinism(tmp_path, verdict):
    sim = tmp_path / "sim"
    main(["simulate", "--n", "40", "--l", "150", "--k", "2", "--seed", "5", "--out", str(sim)])
    digests = []
    for w in (1, 3):
        fitdir, ppcdir = tmp_path / f"fit{w}", tmp_path / f"ppc{w}"
        main(["fit", "--genotypes", str(sim / "genotypes.txt"), "--k", "2", "--iterations", "200",
              "--seed", "5", "--workers", str(w), "--out", str(fitdir)])
        main(["ppc", "--genotypes", str(sim / "genotypes.txt"), "--labels", str(sim / "labels.txt"),
              "--model", str(fitdir), "--replicates", "20", "--min-shared", "50", "--seed", "5",
              "--workers", str(w), "--out", str(ppcdir)])
        files = sorted(p for d in (fitdir, ppcdir) for p in d.iterdir() if p.name != "config.json")
        digests.append({f"{p.parent.name[:3]}/{p.name}": hashlib.sha256(p.read_bytes()).hexdigest() for p in files})
    same = digests[0] == digests[1]
    verdict(8, same, f"{len(digests[0])} model/report files compared across workers=1 and workers=3: {'identical' if same else 'DIFFER'}")

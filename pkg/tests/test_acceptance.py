"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The Monte Carlo criteria run at full size, so this module takes several
minutes on one core. Run it alone with ``pytest tests/test_acceptance.py -s``.
"""

import json
import time
from fractions import Fraction

import numpy as np
import oracles
import pytest
from scipy import stats

from l1indep.calibration import mc_null_table, permutation_test
from l1indep.cli import main
from l1indep.ldlab import (empirical_slope, l1_divergence, mc_l1_divergence, rate_curve, theoretical_rate,
                           vn_theoretical_slope)
from l1indep.partition import CubicPartition, PairedSample, build_counts
from l1indep.statistics import (ONE, SINE, STATISTICS, b_k_n, compute, gamma_n, kendall_tau, l_n, m_n, t_n,
                                v_n_exact)
from l1indep.synthgen import AlternativeSpec, sample


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})")


# -- 1. oracle equivalence ----------------------------------------------------


def _random_sample(g):
    n = int(g.integers(2, 9))
    cols = []
    for _ in range(2):
        if g.random() < 0.5:
            cols.append(g.integers(0, 4, size=n) / 4)  # heavy ties
        else:
            cols.append(g.uniform(-1, 2, size=n))
    return cols


def test_criterion_1_oracle_equivalence(capsys):
    g = np.random.default_rng(1)
    worst = 0.0
    vn_exact_ok = True
    start = time.perf_counter()
    for _ in range(1000):
        x, y = _random_sample(g)
        xs, ys = list(x), list(y)
        smp = PairedSample(x, y)
        width = float(g.choice([0.25, 0.5, 1.0]))
        part = CubicPartition(1, 1, width, width)
        counts = build_counts(smp, part)

        vn_oracle = oracles.vn_hist(xs, ys, width)
        vn_exact_ok &= v_n_exact(counts) == vn_oracle
        cx = sorted(k[0] for k in counts.marginal_x)
        cy = sorted(k[0] for k in counts.marginal_y)
        fx = list(range(cx[0] - 1, cx[0] + int(g.integers(1, 4))))
        fy = list(range(cy[-1] - int(g.integers(0, 3)), cy[-1] + 2))
        pairs = [
            (compute("vn", smp, part), vn_oracle),
            (compute("ln", smp, part), oracles.ln_hist(xs, ys, width, cx, cy)),
            (l_n(counts, [(j,) for j in fx], [(k,) for k in fy]), oracles.ln_hist(xs, ys, width, fx, fy)),
            (gamma_n(smp), oracles.gamma(xs, ys)),
            (m_n(smp), oracles.m(xs, ys)),
            (t_n(smp), oracles.t_n(xs, ys)),
            (kendall_tau(smp), oracles.tau(xs, ys)),
        ]
        for k in (1, 2):
            for q, qo in ((ONE, oracles.one), (SINE, oracles.sine)):
                pairs.append((b_k_n(smp, k, q, q), oracles.b_k(xs, ys, k, qo, qo)))
        for got, want in pairs:
            worst = max(worst, abs(got - float(want)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and vn_exact_ok and elapsed < 60
    report(capsys, 1, ok, f"max abs error {worst:.2e}, V_n exact {vn_exact_ok}, {elapsed:.1f}s")
    assert ok


# -- 2. hand-computed anchors -------------------------------------------------


def test_criterion_2_anchors(capsys):
    half = CubicPartition(1, 1, 0.5, 0.5)
    checks = {
        "V_n diagonal = 1": v_n_exact(build_counts(PairedSample([0.1, 0.9], [0.1, 0.9]), half)) == 1,
        "V_n three points = 8/9": v_n_exact(build_counts(PairedSample([0.1, 0.1, 0.6], [0.1, 0.1, 0.6]), half))
        == Fraction(8, 9),
        "V_n factorized = 0": v_n_exact(build_counts(PairedSample([0.1, 0.1, 0.6, 0.6], [0.1, 0.6, 0.1, 0.6]),
                                                     half)) == 0,
        "tau concordant = 1": kendall_tau(PairedSample([1, 2, 3], [1, 2, 3])) == 1.0,
        "tau anti-concordant = -1": kendall_tau(PairedSample([1, 2, 3], [3, 2, 1])) == -1.0,
        "Gamma anti-diagonal = 1/4": gamma_n(PairedSample([0.1, 0.9], [0.9, 0.1])) == 0.25,
    }
    failed = [name for name, ok in checks.items() if not ok]
    report(capsys, 2, not failed, "all exact" if not failed else "failed: " + ", ".join(failed))
    assert not failed


# -- 3, 4. large-deviation experiment ----------------------------------------


@pytest.fixture(scope="module")
def default_curve():
    return rate_curve("vn")


def test_criterion_3_rate_band(capsys, default_curve):
    c = default_curve
    parts, ok = [], True
    usable_rates = []
    for lam, rate, usable in zip(c.lambda_grid, c.fitted_rate, c.usable):
        if not usable:
            n_unc = sum(not c.censored[i][c.lambda_grid.index(lam)] for i in range(len(c.n_grid)))
            parts.append(f"lambda={lam:g} unusable ({n_unc} uncensored n)")
            ok = False
            continue
        ratio = rate / theoretical_rate(lam)
        in_band = rate >= 0 and 1 / 3 <= ratio <= 3
        ok &= in_band
        usable_rates.append(rate)
        parts.append(f"lambda={lam:g} rate {rate:.5f} ratio {ratio:.3f}")
    monotone = all(a <= b for a, b in zip(usable_rates, usable_rates[1:]))
    ok &= monotone
    report(capsys, 3, ok, "; ".join(parts) + f"; monotone {monotone}")
    assert ok


@pytest.mark.slow
def test_criterion_3_supplement_lambda_04_larger_N(capsys):
    """Diagnostic, not a criterion: lambda = 0.4 resolved by raising N on a shorter n grid."""
    c = rate_curve("vn", (0.4,), (50, 100, 200), N=2_000_000, seed=0)
    ratio = c.fitted_rate[0] / theoretical_rate(0.4) if c.usable[0] else None
    with capsys.disabled():
        print(f"\nDIAGNOSTIC 3 (lambda=0.4, N=2e6, n=50,100,200): p_hat {c.p_hat}, ratio {ratio}")
    assert c.usable[0] and 1 / 3 <= ratio <= 3


def test_criterion_4_envelope(capsys, default_curve):
    c = default_curve
    finite = sum(1 for row in c.envelope for b in row if b is not None and b < 1)
    ok = c.envelope_violations == 0
    report(capsys, 4, ok, f"{c.envelope_violations} violations; {finite} of "
                          f"{len(c.n_grid) * len(c.lambda_grid)} grid points have a bound below 1")
    assert ok


# -- 5. divergence oracles ----------------------------------------------------


def test_criterion_5_divergence(capsys):
    errs = {a: abs(l1_divergence(AlternativeSpec("fgm", a)) - a / 4) for a in (0.1, 0.5, 0.9)}
    gc = AlternativeSpec("gaussian_copula", 0.5)
    quad = l1_divergence(gc)
    mc, se = mc_l1_divergence(gc, draws=10**7, seed=0)
    ok = max(errs.values()) < 1e-4 and abs(quad - mc) < 1e-3
    report(capsys, 5, ok, f"FGM max error {max(errs.values()):.1e}; gaussian quad {quad:.6f} "
                          f"vs MC {mc:.6f} (se {se:.1e})")
    assert ok


# -- 6. slope pipeline --------------------------------------------------------


def test_criterion_6_slope(capsys):
    alt = AlternativeSpec("fgm", 0.5)
    theory = vn_theoretical_slope(alt)
    small_lambda = 2 * theoretical_rate(0.125)
    ns = (100, 200, 400, 800)
    tables = {n: mc_null_table("vn", n, 100_000, seed=1) for n in ns}
    rep = empirical_slope("vn", alt, ns, 50, tables, seed=2)
    ratio = rep.slope / small_lambda
    ok = (small_lambda == 0.015625 and abs(theory.slope - small_lambda) < 1e-4
          and not rep.slope_censored and 0.5 <= ratio <= 2)
    report(capsys, 6, ok, f"theory {theory.slope:.6f} (closed form {small_lambda}); empirical "
                          f"{rep.slope:.5f} +- {rep.slope_se:.5f} at n={rep.slope_n}, ratio {ratio:.3f}")
    assert ok


# -- 7, 8. calibration and power ----------------------------------------------


RUNS = 500
ALPHA = 0.05


def _pvalues(alt, n, seed_offset):
    ids = list(STATISTICS)
    out = {sid: np.empty(RUNS) for sid in ids}
    for r in range(RUNS):
        smp = sample(alt, n, seed=seed_offset + r)
        for rep in permutation_test(smp, ids, B=999, seed=seed_offset + r):
            out[rep.statistic_id][r] = rep.p_value
    return out


@pytest.fixture(scope="module")
def null_pvalues():
    return _pvalues(AlternativeSpec(), 50, 10_000)


def test_criterion_7_null_calibration(capsys, null_pvalues):
    parts, ok = [], True
    for sid, p in null_pvalues.items():
        dist = stats.kstest(p, "uniform").statistic
        size = float(np.mean(p <= ALPHA))
        ok &= dist < 0.08 and 0.03 <= size <= 0.07
        parts.append(f"{sid} D={dist:.3f} size={size:.3f}")
    report(capsys, 7, ok, ", ".join(parts))
    assert ok


def test_criterion_8_power(capsys, null_pvalues):
    pv = _pvalues(AlternativeSpec("gaussian_copula", 0.5), 100, 20_000)
    parts, ok = [], True
    for sid, p in pv.items():
        power = float(np.mean(p <= ALPHA))
        size = float(np.mean(null_pvalues[sid] <= ALPHA))
        ok &= power > 0.3 and power > size
        parts.append(f"{sid} {power:.3f}")
    report(capsys, 8, ok, "power: " + ", ".join(parts))
    assert ok


# -- 9. determinism -----------------------------------------------------------


def test_criterion_9_determinism(capsys, tmp_path):
    data = tmp_path / "gc.csv"
    tables = tmp_path / "tables"
    assert main(["simulate", "--alternative", "gaussian_copula(0.5)", "--n", "80", "--seed", "3",
                 "-o", str(data)]) == 0
    assert main(["nulltable", "--stat", "vn,tau", "--n", "60", "--N", "2000", "--output-dir", str(tables),
                 "-o", str(tmp_path / "nt0.json")]) == 0
    commands = {
        "test": ["test", str(data), "--stat", "all", "-B", "1999", "--seed", "5"],
        "nulltable": ["nulltable", "--stat", "vn,gamma", "--n", "30,60", "--N", "3000",
                      "--output-dir", str(tmp_path / "nt")],
        "ldcurve": ["ldcurve", "--lambdas", "0.3,0.5", "--ns", "20,40,80", "--N", "3000"],
        "slope": ["slope", "--alternative", "gaussian_copula(0.5)", "--pair", "vn,tau", "--ns", "60",
                  "--reps", "30", "--tables", str(tables)],
    }
    same = {}
    for kind, argv in commands.items():
        first = tmp_path / f"{kind}.json"
        assert main(argv + ["--threads", "1", "-o", str(first)]) == 0
        digests = [first.read_bytes()]
        for threads in (2, 4):
            again = tmp_path / f"{kind}_{threads}.json"
            assert main(["rerun", str(first), "--threads", str(threads), "-o", str(again)]) == 0
            digests.append(again.read_bytes())
        same[kind] = all(d == digests[0] for d in digests) and json.loads(digests[0])["config"]
    ok = all(bool(v) for v in same.values())
    report(capsys, 9, ok, ", ".join(f"{k} {'identical' if v else 'differs'}" for k, v in same.items())
           + " across --threads 1, 2, 4")
    assert ok

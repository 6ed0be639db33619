"""Large-deviation and Bahadur-slope experiments for the histogram L1 statistic.

Under independence ``-(1/n) log P(V_n > lam)`` tends to ``g(lam)``, with
``g(lam) = lam**2 / 2 * (1 + o(1))`` as ``lam -> 0``. This module estimates
the left-hand side by plain Monte Carlo on a fixed data-independent
partition, fits the decay rate, and turns null tables into empirical exact
slopes ``-(2/n) log p_n`` under alternatives.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import rng as streams
from .calibration import NullTable, map_ordered, pvalue_from_table, simulate_statistic
from .errors import ConvergenceError, InvalidInput
from .partition import CubicPartition
from .statistics import STATISTICS
from .synthgen import AlternativeSpec, GeneratorSpec, as_generator, density, draw, support_box

SCHEMA_VERSION = 1

DEFAULT_LAMBDAS = (0.2, 0.3, 0.4)
DEFAULT_NS = (50, 100, 200, 400)
DEFAULT_N = 100_000
DEFAULT_CELLS = 4
SMALL_LAMBDA = 0.5
CENSOR_ALPHA = 0.05


def theoretical_rate(lam):
    """Small-threshold expansion ``lam**2 / 2`` of the rate function g."""
    if lam < 0 or not math.isfinite(lam):
        raise InvalidInput("lambda must be a finite nonnegative number")
    return 0.5 * lam * lam


class TailEstimate(NamedTuple):
    p_hat: float
    se: float
    censored: bool
    upper: float


def _tail_from_draws(values, lam):
    N = len(values)
    p = np.count_nonzero(values > lam) / N
    if p == 0:
        return TailEstimate(0.0, 0.0, True, 1.0 - CENSOR_ALPHA ** (1.0 / N))
    return TailEstimate(p, math.sqrt(p * (1 - p) / N), False, p)


def _null_draws(stat_id, n, N, generator, seed, partition, threads):
    if N < 1000:
        raise InvalidInput("tail probabilities need N >= 1000")
    generator = as_generator(generator or GeneratorSpec())
    if not generator.alternative.independent:
        raise InvalidInput("tail probabilities are taken under independence")
    if STATISTICS[stat_id].histogram and partition is None:
        alt = generator.alternative
        partition = CubicPartition.unit_grid(DEFAULT_CELLS, alt.d, alt.d_prime)
    return simulate_statistic(stat_id, n, N, generator, seed, streams.TAIL, partition, threads, index=(n,))


def tail_prob(statistic_id, n, lam, N=DEFAULT_N, generator=None, seed=0, partition=None, threads=1):
    """Monte Carlo estimate of ``P(T_n > lam)`` under independence.

    Returns ``(p_hat, se, censored, upper)``. A zero count is censored and
    carries the one-sided bound ``1 - 0.05 ** (1 / N)``. Replicates for a
    given ``(seed, n)`` are shared across thresholds.
    """
    values = _null_draws(statistic_id, n, N, generator, seed, partition, threads)
    return _tail_from_draws(values, lam)


def gretton_envelope(n, epsilons, m, m_prime):
    """``2^(m m') e^(-n e1^2/2) + 2^m e^(-n e2^2/2) + 2^m' e^(-n e3^2/2)``; inf on overflow."""
    e1, e2, e3 = epsilons
    if min(e1, e2, e3) <= 0:
        raise InvalidInput("epsilons must be positive")
    total = 0.0
    for bits, eps in ((m * m_prime, e1), (m, e2), (m_prime, e3)):
        log_term = bits * math.log(2.0) - n * eps * eps / 2.0
        if log_term > 709.0:
            return math.inf
        total += math.exp(log_term)
    return total


@dataclass
class LDCurve:
    statistic_id: str
    lambda_grid: list
    n_grid: list
    N: int
    seed: int
    partition: dict
    p_hat: list
    se: list
    censored: list
    upper: list
    g_hat: list
    fitted_rate: list
    fitted_rate_se: list
    usable: list
    g_theory: list
    envelope: list
    envelope_violations: int
    generator: dict = None
    schema_version: int = SCHEMA_VERSION
    kind: str = "ldcurve"

    def to_dict(self):
        return asdict(self)

    def csv_rows(self):
        rows = []
        for j, lam in enumerate(self.lambda_grid):
            for i, n in enumerate(self.n_grid):
                g = self.g_hat[i][j]
                rows.append((lam, n, self.p_hat[i][j], self.se[i][j], "" if g is None else g, self.g_theory[j]))
        return rows

    def to_csv(self, fh):
        fh.write("lambda,n,p_hat,se,g_hat,g_theory\n")
        for row in self.csv_rows():
            fh.write(",".join(repr(float(v)) if not isinstance(v, str) else v for v in row) + "\n")


def _fit_slope(ns, ys):
    ns = np.asarray(ns, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x = ns - ns.mean()
    slope = float(np.dot(x, ys - ys.mean()) / np.dot(x, x))
    resid = ys - ys.mean() - slope * x
    dof = len(ns) - 2
    se = float(math.sqrt(np.dot(resid, resid) / dof / np.dot(x, x))) if dof > 0 else 0.0
    return slope, se


def rate_curve(statistic_id="vn", lambda_grid=DEFAULT_LAMBDAS, n_grid=DEFAULT_NS, N=DEFAULT_N, seed=0,
               generator=None, partition=None, threads=1, min_points=3):
    """Tail probabilities on an (n, lambda) grid and the fitted decay rate per lambda.

    ``fitted_rate[j]`` is the unweighted least-squares slope of ``-log p_hat``
    against n over the uncensored points; lambdas with fewer than
    ``min_points`` uncensored points are marked unusable (rate ``None``).
    The envelope check compares each p_hat with the three-term exponential
    bound at an even split ``eps = lam / 3`` and the cell counts of the grid.
    """
    generator = as_generator(generator or GeneratorSpec())
    alt = generator.alternative
    if STATISTICS[statistic_id].histogram and partition is None:
        partition = CubicPartition.unit_grid(DEFAULT_CELLS, alt.d, alt.d_prime)
    lambdas = [float(v) for v in lambda_grid]
    ns = [int(v) for v in n_grid]
    if not lambdas or not ns:
        raise InvalidInput("empty lambda or n grid")

    def run(n):
        return _null_draws(statistic_id, n, N, generator, seed, partition, 1)

    draws = map_ordered(run, ns, threads)
    est = [[_tail_from_draws(v, lam) for lam in lambdas] for v in draws]

    m = m_prime = None
    if partition is not None:
        m = round(1.0 / partition.width_x) ** partition.d
        m_prime = round(1.0 / partition.width_y) ** partition.d_prime
    envelope, violations = [], 0
    for i, n in enumerate(ns):
        row = []
        for j, lam in enumerate(lambdas):
            if m is None or lam <= 0:
                row.append(None)
                continue
            bound = gretton_envelope(n, (lam / 3,) * 3, m, m_prime)
            row.append(bound)
            if bound < 1 and est[i][j].p_hat > bound:
                violations += 1
        envelope.append(row)

    fitted, fitted_se, usable = [], [], []
    for j in range(len(lambdas)):
        pts = [(n, -math.log(est[i][j].p_hat)) for i, n in enumerate(ns) if not est[i][j].censored]
        if len(pts) >= max(2, min_points):
            slope, se = _fit_slope(*zip(*pts))
            fitted.append(slope)
            fitted_se.append(se)
            usable.append(True)
        else:
            fitted.append(None)
            fitted_se.append(None)
            usable.append(False)

    return LDCurve(
        statistic_id=statistic_id,
        lambda_grid=lambdas,
        n_grid=ns,
        N=N,
        seed=seed,
        partition=partition.to_dict() if partition is not None else None,
        p_hat=[[e.p_hat for e in row] for row in est],
        se=[[e.se for e in row] for row in est],
        censored=[[e.censored for e in row] for row in est],
        upper=[[e.upper for e in row] for row in est],
        g_hat=[[None if e.censored else -math.log(e.p_hat) / n for e in row] for n, row in zip(ns, est)],
        fitted_rate=fitted,
        fitted_rate_se=fitted_se,
        usable=usable,
        g_theory=[theoretical_rate(lam) for lam in lambdas],
        envelope=envelope,
        envelope_violations=violations,
        generator=generator.to_dict(),
    )


# ---------------------------------------------------------------------------
# population divergence


def _midpoint(spec, m, box, rows=256):
    (x0, x1), (y0, y1) = box
    hx, hy = (x1 - x0) / m, (y1 - y0) / m
    xs = x0 + (np.arange(m) + 0.5) * hx
    ys = y0 + (np.arange(m) + 0.5) * hy
    total = 0.0
    for s in range(0, m, rows):
        X, Y = np.meshgrid(xs[s:s + rows], ys, indexing="ij")
        f, f1, f2 = density(spec, X, Y)
        total += float(np.abs(f - f1 * f2).sum())
    return total * hx * hy


def l1_divergence(alt, tol=1e-4, start=16, max_doublings=12):
    """Population L1 divergence ``int int |f - f1 f2|`` by midpoint quadrature.

    The m x m grid is doubled until successive estimates differ by less than
    ``tol``. Independent families return exactly 0.
    """
    spec = as_generator(alt)
    if spec.alternative.independent:
        return 0.0
    box = support_box(spec)
    m = start
    prev = _midpoint(spec, m, box)
    for _ in range(max_doublings):
        m *= 2
        cur = _midpoint(spec, m, box)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise ConvergenceError(f"L1 divergence quadrature did not converge after {max_doublings} doublings")


def mc_l1_divergence(alt, draws=10**7, seed=0, chunk=10**6):
    """Monte Carlo divergence ``E|f(X, Y) / (f1(X) f2(Y)) - 1|`` with X, Y drawn independently.

    Returns ``(estimate, standard_error)``. Independent pairs come from
    pairing the X of one draw with the Y of another.
    """
    spec = as_generator(alt)
    total = total_sq = 0.0
    done = 0
    c = 0
    while done < draws:
        m = min(chunk, draws - done)
        gen = streams.stream(seed, streams.DIVERGENCE, c)
        x, _ = draw(spec, (m,), gen)
        _, y = draw(spec, (m,), gen)
        f, f1, f2 = density(spec, x[:, 0], y[:, 0])
        z = np.abs(f / (f1 * f2) - 1.0)
        total += float(z.sum())
        total_sq += float((z * z).sum())
        done += m
        c += 1
    mean = total / draws
    var = max(total_sq / draws - mean * mean, 0.0)
    return mean, math.sqrt(var / draws)


class TheoreticalSlope(NamedTuple):
    slope: float
    divergence: float
    approximate: bool
    label: str = "small-lambda approximation"


def vn_theoretical_slope(alt):
    """Exact slope ``2 g(Delta) ~ Delta**2`` from the population divergence Delta.

    ``approximate`` is set when Delta exceeds 0.5, where the quadratic
    expansion of g is no longer trustworthy.
    """
    delta = l1_divergence(alt)
    return TheoreticalSlope(2.0 * theoretical_rate(delta), delta, delta > SMALL_LAMBDA)


# ---------------------------------------------------------------------------
# empirical slopes


@dataclass
class SlopeReport:
    statistic_id: str
    alternative: dict
    n_grid: list
    reps: int
    seed: int
    per_n: list
    slope: float
    slope_se: float
    slope_n: int
    table_limited: bool
    slope_censored: bool
    b_hat: float
    theoretical_slope: float = None
    theoretical_divergence: float = None
    theory_label: str = None
    theory_approximate: bool = None
    partition: dict = None
    warnings: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    kind: str = "slope"

    def to_dict(self):
        return asdict(self)


def empirical_slope(statistic_id, alt, n_grid, reps, null_tables, seed=0, partition=None, threads=1,
                    with_theory=True):
    """Bahadur slope estimates ``K_n = -(2/n) log p_n`` with p_n from null tables.

    For each n, ``reps`` samples are drawn from ``alt`` and their p-values
    read from ``null_tables[n]``. The reported slope is the estimate at the
    largest n whose censoring fraction (p at the table floor) is at most one
    half; ``table_limited`` is set when the largest n is censored beyond that,
    ``slope_censored`` when every n is.
    """
    if reps < 20:
        raise InvalidInput("reps must be at least 20")
    spec = as_generator(alt)
    ns = sorted(int(n) for n in n_grid)
    missing = [n for n in ns if n not in null_tables]
    if missing:
        raise InvalidInput(f"no null table for {statistic_id} at n={missing}")
    hist = STATISTICS[statistic_id].histogram
    per_n = []
    warnings = []
    for n in ns:
        table = null_tables[n]
        if not isinstance(table, NullTable) or table.statistic_id != statistic_id or table.n != n:
            raise InvalidInput(f"null table for n={n} does not match statistic {statistic_id}")
        part = partition
        if hist:
            if table.partition is None:
                raise InvalidInput("histogram null table carries no partition")
            if part is None:
                part = CubicPartition.from_dict(table.partition)
            elif part.to_dict() != table.partition:
                raise InvalidInput(f"partition differs from the null table's partition at n={n}")
        values = simulate_statistic(statistic_id, n, reps, spec, seed, streams.SLOPE, part, threads, index=(n,))
        p = np.asarray(pvalue_from_table(values, table))
        k = -2.0 / n * np.log(p)
        floor = 1.0 / (table.N + 1)
        per_n.append({
            "n": n,
            "table_N": table.N,
            "mean_K": float(k.mean()),
            "se_K": float(k.std(ddof=1) / math.sqrt(reps)),
            "censored_fraction": float(np.mean(p <= floor * (1 + 1e-9))),
            "mean_statistic": float(values.mean()),
        })
        if hist:
            partition = part
    ok = [row for row in per_n if row["censored_fraction"] <= 0.5]
    chosen = ok[-1] if ok else per_n[-1]
    table_limited = per_n[-1]["censored_fraction"] > 0.5
    if table_limited:
        warnings.append(f"censoring fraction {per_n[-1]['censored_fraction']:.2f} at n={per_n[-1]['n']}: "
                        "null table too small to resolve the tail there")
    if not ok:
        warnings.append("every n is censored beyond one half; slope is table-limited")
    report = SlopeReport(
        statistic_id=statistic_id,
        alternative=spec.to_dict(),
        n_grid=ns,
        reps=reps,
        seed=seed,
        per_n=per_n,
        slope=chosen["mean_K"],
        slope_se=chosen["se_K"],
        slope_n=chosen["n"],
        table_limited=table_limited,
        slope_censored=not ok,
        b_hat=chosen["mean_statistic"],
        partition=partition.to_dict() if (hist and partition is not None) else None,
        warnings=warnings,
    )
    if with_theory and statistic_id == "vn":
        theory = vn_theoretical_slope(spec)
        report.theoretical_slope = theory.slope
        report.theoretical_divergence = theory.divergence
        report.theory_label = theory.label
        report.theory_approximate = theory.approximate
    return report


def efficiency_ratio(report_a, report_b):
    """Ratio of estimated slopes ``a / b`` with a delta-method standard error."""
    if report_a.alternative != report_b.alternative:
        raise InvalidInput("efficiency ratio needs both reports under the same alternative")
    if report_b.slope <= 0 or report_b.slope_censored:
        raise InvalidInput(f"denominator slope of {report_b.statistic_id} is zero or censored")
    a, b = report_a.slope, report_b.slope
    ratio = a / b
    rel = (report_a.slope_se / a) ** 2 if a > 0 else 0.0
    rel += (report_b.slope_se / b) ** 2
    return ratio, abs(ratio) * math.sqrt(rel)

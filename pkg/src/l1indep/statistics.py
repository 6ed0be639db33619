"""Independence statistics: the histogram L1 statistic and its competitors.

Histogram statistics (``vn``, ``ln``) work in any dimension. The CDF- and
rank-based statistics are defined for univariate components only.

Every statistic is also available in a batched form, ``Prepared.permuted``,
that evaluates it for many re-pairings of the Y sample at once; permutation
tests and Monte Carlo null tables are built on that.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInput, UnsupportedStatistic
from .partition import CubicPartition, PairedSample, build_counts, dense_codes

# cap on the size of temporary (batch, rows, cols) arrays
_BATCH_ELEMENTS = 1 << 23


# ---------------------------------------------------------------------------
# weights and scores


@dataclass(frozen=True)
class WeightFunction:
    """Nonnegative weight ``q`` on (0, 1).

    ``kind`` is ``"one"`` (q = 1), ``"sine"`` (q(u) = sin(pi u)) or ``"table"``,
    where ``table`` holds ``(u, q)`` knots joined piecewise linearly.
    """

    kind: str = "one"
    table: tuple = None

    def __post_init__(self):
        if self.kind not in ("one", "sine", "table"):
            raise InvalidInput(f"unknown weight kind {self.kind!r}")
        if self.kind == "table":
            knots = np.asarray(self.table, dtype=float)
            if knots.ndim != 2 or knots.shape[1] != 2 or len(knots) < 1:
                raise InvalidInput("weight table must be a sequence of (u, q) pairs")
            if np.any(knots[:, 1] < 0) or not np.all(np.isfinite(knots)):
                raise InvalidInput("weight table values must be finite and nonnegative")
            if np.any(np.diff(knots[:, 0]) <= 0):
                raise InvalidInput("weight table knots must be strictly increasing")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "one":
            return np.ones_like(u)
        if self.kind == "sine":
            return np.sin(np.pi * u)
        knots = np.asarray(self.table, dtype=float)
        return np.interp(u, knots[:, 0], knots[:, 1])


ONE = WeightFunction("one")
SINE = WeightFunction("sine")


@dataclass(frozen=True)
class ScoreFunction:
    """Score ``a`` evaluated at normalised ranks ``R / (n + 1)``.

    ``wilcoxon``: a(u) = u. ``sign``: a(u) = sign(u - 1/2). ``table``: the n
    values ``a(1/(n+1)), ..., a(n/(n+1))``; only defined on that grid, so it
    rejects midranks.
    """

    kind: str = "wilcoxon"
    table: tuple = None

    def __post_init__(self):
        if self.kind not in ("wilcoxon", "sign", "table"):
            raise InvalidInput(f"unknown score kind {self.kind!r}")
        if self.kind == "table" and self.table is None:
            raise InvalidInput("table scores need a table")

    def at_ranks(self, r, n):
        r = np.asarray(r, dtype=float)
        if self.kind == "wilcoxon":
            return r / (n + 1)
        if self.kind == "sign":
            return np.sign(r / (n + 1) - 0.5)
        table = np.asarray(self.table, dtype=float)
        if len(table) != n:
            raise InvalidInput(f"score table has {len(table)} entries, sample has {n}")
        if np.any(r != np.floor(r)):
            raise InvalidInput("score table is undefined at midranks (tied data)")
        return table[r.astype(np.int64) - 1]


WILCOXON = ScoreFunction("wilcoxon")


# ---------------------------------------------------------------------------
# ranks


def ranks(values):
    """Ranks in 1..n, averaged over ties."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise InvalidInput("ranks need a nonempty vector")
    return rankdata(v, method="average")


def _require_univariate(sample, name):
    if not sample.univariate:
        raise UnsupportedStatistic(f"{name} is defined for univariate X and Y only "
                                   f"(got d={sample.d}, d'={sample.d_prime})")


def _value_codes(v):
    """Dense 0-based codes of the distinct values of ``v`` and their multiplicities."""
    uniq, codes = np.unique(v, return_inverse=True)
    return codes.reshape(-1).astype(np.int64), np.bincount(codes.reshape(-1), minlength=len(uniq))


# ---------------------------------------------------------------------------
# histogram statistics


def _vn_sums(codes_x, codes_y, kx, ky):
    """Integer numerators ``sum |n J - mx my|`` per row of ``codes_y``.

    ``codes_x``: shape (n,) or (m, n); ``codes_y``: shape (m, n).
    """
    codes_y = np.atleast_2d(codes_y)
    m, n = codes_y.shape
    codes_x = np.broadcast_to(codes_x, (m, n))
    out = np.empty(m, dtype=np.int64)
    step = max(1, _BATCH_ELEMENTS // max(1, kx * ky))
    for s in range(0, m, step):
        e = min(m, s + step)
        flat = codes_x[s:e] * ky + codes_y[s:e] + (np.arange(e - s, dtype=np.int64) * (kx * ky))[:, None]
        joint = np.bincount(flat.ravel(), minlength=(e - s) * kx * ky).reshape(e - s, kx, ky)
        mx = joint.sum(axis=2)
        my = joint.sum(axis=1)
        out[s:e] = np.abs(n * joint - mx[:, :, None] * my[:, None, :]).sum(axis=(1, 2))
    return out


def v_n_exact(counts):
    """V_n as an exact rational with denominator n**2."""
    if counts.n < 1 or not counts.joint:
        raise InvalidInput("empty cell counts")
    n = counts.n
    total = 0
    for jx, mxv in counts.marginal_x.items():
        for jy, myv in counts.marginal_y.items():
            total += abs(n * counts.joint.get((jx, jy), 0) - mxv * myv)
    return Fraction(total, n * n)


def v_n(counts):
    """L1 distance between the joint histogram and the product of marginal histograms.

    Cell volumes cancel, so the integral reduces to
    ``sum_{j,k} |n * joint[j,k] - mx[j] * my[k]| / n**2`` over occupied
    marginal cells. The numerator is accumulated in integers and divided once.
    """
    if counts.n < 1 or not counts.joint:
        raise InvalidInput("empty cell counts")
    if counts.codes_x is None:
        return float(v_n_exact(counts))
    total = _vn_sums(counts.codes_x, counts.codes_y[None, :], len(counts.cells_x), len(counts.cells_y))[0]
    return int(total) / (counts.n * counts.n)


def l_n(counts, finite_x_cells, finite_y_cells):
    """V_n's cell sum restricted to the finite product of the given cells."""
    cx, cy = list(finite_x_cells), list(finite_y_cells)
    if not cx or not cy:
        raise InvalidInput("l_n needs nonempty finite cell sets")
    if counts.n < 1 or not counts.joint:
        raise InvalidInput("empty cell counts")
    n = counts.n
    total = 0
    for jx in cx:
        mxv = counts.marginal_x.get(tuple(jx), 0)
        for jy in cy:
            myv = counts.marginal_y.get(tuple(jy), 0)
            total += abs(n * counts.joint.get((tuple(jx), tuple(jy)), 0) - mxv * myv)
    return total / (n * n)


# ---------------------------------------------------------------------------
# empirical-CDF statistics


def _cdf_lattice(codes_x, codes_y, ux, uy):
    """Cumulative joint counts on the padded lattice, shape (m, ux + 1, uy + 1).

    Entry ``[a, c]`` is ``n * F_n`` at (a-th distinct x, c-th distinct y);
    index 0 is the left limit below the smallest value. Left limits at the
    other atoms coincide with the previous atom's entry.
    """
    m, n = codes_y.shape
    flat = codes_y + (codes_x * uy)[None, :] + (np.arange(m, dtype=np.int64) * (ux * uy))[:, None]
    joint = np.bincount(flat.ravel(), minlength=m * ux * uy).reshape(m, ux, uy)
    cum = np.zeros((m, ux + 1, uy + 1), dtype=np.int64)
    cum[:, 1:, 1:] = joint.cumsum(axis=1).cumsum(axis=2)
    return cum


class _CdfKernel:
    """Evaluates Gamma_n, B^k and M_n for re-pairings of a fixed X with permuted Y.

    One pass over the cumulative lattice serves every requested statistic.
    """

    def __init__(self, x, y):
        self.n = n = len(x)
        self.cx, self.mult_x = _value_codes(x)
        self.cy, self.mult_y = _value_codes(y)
        self.ux, self.uy = len(self.mult_x), len(self.mult_y)
        # n * F at the padded lattice, identical for every re-pairing
        self.fx = np.concatenate([[0], np.cumsum(self.mult_x)])
        self.fy = np.concatenate([[0], np.cumsum(self.mult_y)])
        self._weights = {}
        clip = n / (n + 1)
        for q in (ONE, SINE):
            self._weights[q] = (self.mult_x * q(np.minimum(self.fx[1:] / n, clip)),
                                self.mult_y * q(np.minimum(self.fy[1:] / n, clip)))

    def _b_weight(self, q1, q2):
        n = self.n
        clip = n / (n + 1)
        wx = self._weights[q1][0] if q1 in self._weights else self.mult_x * q1(np.minimum(self.fx[1:] / n, clip))
        wy = self._weights[q2][1] if q2 in self._weights else self.mult_y * q2(np.minimum(self.fy[1:] / n, clip))
        return wx, wy

    def evaluate(self, perms, wanted):
        """``wanted``: dict key -> ``("gamma",)``, ``("m",)`` or ``("b", k, q1, q2)``."""
        perms = np.atleast_2d(perms)
        n = self.n
        out = {key: np.empty(len(perms)) for key in wanted}
        weights = {key: self._b_weight(spec[2], spec[3]) for key, spec in wanted.items() if spec[0] == "b"}
        step = max(1, _BATCH_ELEMENTS // ((self.ux + 1) * (self.uy + 1)))
        for s in range(0, len(perms), step):
            cum = _cdf_lattice(self.cx, self.cy[perms[s:s + step]], self.ux, self.uy)
            # n**2 * (F_n - F_1 F_2), exact in integers
            disc = n * cum - self.fx[:, None] * self.fy[None, :]
            e = s + len(disc)
            powers = {}
            for key, spec in wanted.items():
                if spec[0] == "gamma":
                    out[key][s:e] = np.abs(disc).max(axis=(1, 2)) / (n * n)
                elif spec[0] == "m":
                    inner = (disc[:, :, 1:] @ self.mult_y) / n**3
                    out[key][s:e] = np.abs(inner).max(axis=1)
                else:
                    k = spec[1]
                    if k not in powers:
                        atoms = disc[:, 1:, 1:].astype(np.float64)
                        powers[k] = atoms if k == 1 else atoms**k
                    wx, wy = weights[key]
                    # weights applied as two matrix-vector products; scale (n^2)^-k from disc, n^-2 from dF dF
                    out[key][s:e] = (powers[k] @ wy) @ wx / float(n) ** (2 * k + 2)
        return out


def _cdf_single(sample, spec):
    kern = _CdfKernel(sample.x[:, 0], sample.y[:, 0])
    return float(kern.evaluate(np.arange(sample.n)[None, :], {"v": spec})["v"][0])


def gamma_n(sample):
    """Kolmogorov-type statistic ``sup |F_n(x, y) - F_n1(x) F_n2(y)|``.

    Evaluated on every corner of the data lattice, left limits included,
    where the supremum of the step-function difference is attained.
    """
    _require_univariate(sample, "gamma_n")
    return _cdf_single(sample, ("gamma",))


def b_k_n(sample, k=2, q1=ONE, q2=ONE):
    """Weighted CDF-discrepancy integral of power ``k`` against dF_n1 dF_n2.

    ``(1/n^2) sum_i sum_l [F_n(X_i, Y_l) - F_n1(X_i) F_n2(Y_l)]^k q1(F_n1(X_i)) q2(F_n2(Y_l))``
    with weight arguments clipped to ``n / (n + 1)``. ``k=2, q=1`` is the
    Blum-Kiefer-Rosenblatt form, ``k=1, q=sin(pi u)`` the Koziol-Nemec form.
    """
    _require_univariate(sample, "b_k_n")
    if int(k) != k or k < 1:
        raise InvalidInput("k must be a positive integer")
    return _cdf_single(sample, ("b", int(k), q1, q2))


def m_n(sample):
    """Durbin-type statistic ``max_x |(1/n) sum_i (F_n(x, Y_i) - F_n1(x) F_n2(Y_i))|``."""
    _require_univariate(sample, "m_n")
    return _cdf_single(sample, ("m",))


# ---------------------------------------------------------------------------
# rank statistics


def t_n(sample, a1=WILCOXON, a2=WILCOXON):
    """Linear rank statistic ``(1/n) sum_i a1(R_i/(n+1)) a2(S_i/(n+1))`` on midranks."""
    _require_univariate(sample, "t_n")
    n = sample.n
    sx = a1.at_ranks(ranks(sample.x[:, 0]), n)
    sy = a2.at_ranks(ranks(sample.y[:, 0]), n)
    return float(np.dot(sx, sy) / n)


def _count_inversions(seq):
    """Number of pairs i < j with seq[i] > seq[j], by bottom-up merge sort."""
    a = list(seq)
    n = len(a)
    buf = [0] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    inversions += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:hi] = a[i:mid] if i < mid else a[j:hi]
        a, buf = buf, a
        width *= 2
    return inversions


def _tied_pairs(*columns):
    _, counts = np.unique(np.column_stack(columns), axis=0, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _tau_inputs(sample):
    _require_univariate(sample, "kendall_tau")
    if sample.n < 2:
        raise InvalidInput("kendall_tau needs n >= 2")
    return sample.x[:, 0], sample.y[:, 0]


def kendall_tau(sample):
    """Kendall's tau, ``(1/(n(n-1))) sum_{i != j} sign(R_i - R_j) sign(S_i - S_j)``.

    O(n log n): tied pairs contribute 0, and discordant pairs are the
    inversions of Y once pairs are sorted by (X, Y).
    """
    x, y = _tau_inputs(sample)
    n = len(x)
    order = np.lexsort((y, x))
    ycodes, _ = _value_codes(y)
    discordant = _count_inversions(ycodes[order].tolist())
    n0 = n * (n - 1) // 2
    net = n0 - _tied_pairs(x) - _tied_pairs(y) + _tied_pairs(x, y) - 2 * discordant
    return 2 * net / (n * (n - 1))


def kendall_tau_reference(sample):
    """Kendall's tau straight from its pairwise definition, O(n^2)."""
    x, y = _tau_inputs(sample)
    n = len(x)
    total = int((np.sign(x[:, None] - x[None, :]) * np.sign(y[:, None] - y[None, :])).sum())
    return total / (n * (n - 1))


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class StatisticInfo:
    id: str
    label: str
    univariate_only: bool
    histogram: bool = False


STATISTICS = {
    s.id: s
    for s in [
        StatisticInfo("vn", "V_n histogram L1 statistic", False, True),
        StatisticInfo("ln", "L_n over the finite partition of occupied cells", False, True),
        StatisticInfo("gamma", "Gamma_n Kolmogorov-type (Blum-Kiefer-Rosenblatt sup)", True),
        StatisticInfo("b1_one", "B^1 with q1 = q2 = 1", True),
        StatisticInfo("b1_sin", "B^1 with q1 = q2 = sin(pi u) (Koziol-Nemec)", True),
        StatisticInfo("b2_one", "B^2 with q1 = q2 = 1 (Hoeffding / Blum-Kiefer-Rosenblatt)", True),
        StatisticInfo("b2_sin", "B^2 with q1 = q2 = sin(pi u)", True),
        StatisticInfo("mn", "M_n Durbin-type", True),
        StatisticInfo("tn", "T_n linear rank statistic, Wilcoxon scores", True),
        StatisticInfo("tau", "Kendall's tau", True),
    ]
}

_B_VARIANTS = {
    "b1_one": (1, ONE),
    "b1_sin": (1, SINE),
    "b2_one": (2, ONE),
    "b2_sin": (2, SINE),
}


def supported(stat_id, sample):
    info = STATISTICS[stat_id]
    if info.univariate_only and not sample.univariate:
        return False
    if stat_id == "tau" and sample.n < 2:
        return False
    return True


def resolve_ids(spec, sample=None):
    """Expand ``"all"`` or a comma list into known statistic ids."""
    if isinstance(spec, str):
        spec = [s.strip() for s in spec.split(",") if s.strip()]
    ids = []
    for s in spec:
        if s == "all":
            ids.extend(i for i in STATISTICS if sample is None or supported(i, sample))
        elif s in STATISTICS:
            ids.append(s)
        else:
            raise InvalidInput(f"unknown statistic {s!r}; choose from {', '.join(STATISTICS)} or all")
    return list(dict.fromkeys(ids))


class Prepared:
    """Statistics bound to one sample, evaluable for any re-pairing of its Y values.

    ``permuted(perms)`` takes an integer array of shape (B, n) whose rows are
    permutations of ``range(n)`` and returns, per statistic id, the values on
    ``(X_i, Y_{perm[i]})`` for each row. The identity row reproduces
    ``observed``. Histogram statistics keep one partition throughout.
    """

    def __init__(self, stat_ids, sample, partition=None):
        if isinstance(stat_ids, str):
            stat_ids = [stat_ids]
        self.ids = list(stat_ids)
        self.n = n = sample.n
        self.partition = None
        self._cdf_specs = {}
        for sid in self.ids:
            if sid not in STATISTICS:
                raise InvalidInput(f"unknown statistic {sid!r}")
            if STATISTICS[sid].univariate_only:
                _require_univariate(sample, sid)
            if sid == "tau" and n < 2:
                raise InvalidInput("kendall_tau needs n >= 2")
            if sid == "gamma":
                self._cdf_specs[sid] = ("gamma",)
            elif sid == "mn":
                self._cdf_specs[sid] = ("m",)
            elif sid in _B_VARIANTS:
                k, q = _B_VARIANTS[sid]
                self._cdf_specs[sid] = ("b", k, q, q)
        if any(STATISTICS[s].histogram for s in self.ids):
            if partition is None:
                partition, _ = CubicPartition.from_sample(sample)
            self.partition = partition
            counts = build_counts(sample, partition)
            self._hist = (counts.codes_x, counts.codes_y, len(counts.cells_x), len(counts.cells_y))
        if self._cdf_specs:
            self._cdf = _CdfKernel(sample.x[:, 0], sample.y[:, 0])
        if "tn" in self.ids:
            self._sx = WILCOXON.at_ranks(ranks(sample.x[:, 0]), n)
            self._sy = WILCOXON.at_ranks(ranks(sample.y[:, 0]), n)
        if "tau" in self.ids:
            x = sample.x[:, 0]
            self._sgn_x = np.sign(x[:, None] - x[None, :]).astype(np.int8)
            self._y = sample.y[:, 0]
        ident = self.permuted(np.arange(n)[None, :])
        self.observed = {sid: float(v[0]) for sid, v in ident.items()}

    def permuted(self, perms):
        perms = np.atleast_2d(np.asarray(perms, dtype=np.int64))
        out = {}
        if any(STATISTICS[s].histogram for s in self.ids):
            cx, cy, kx, ky = self._hist
            hist = _vn_sums(cx, cy[perms], kx, ky) / (self.n * self.n)
        if self._cdf_specs:
            cdf = self._cdf.evaluate(perms, self._cdf_specs)
        for sid in self.ids:
            if STATISTICS[sid].histogram:
                out[sid] = hist
            elif sid in self._cdf_specs:
                out[sid] = cdf[sid]
            elif sid == "tn":
                out[sid] = (self._sy[perms] * self._sx).sum(axis=1) / self.n
            else:
                out[sid] = self._tau_batch(perms)
        return out

    def _tau_batch(self, perms):
        n = self.n
        out = np.empty(len(perms))
        step = max(1, _BATCH_ELEMENTS // (n * n))
        for s in range(0, len(perms), step):
            yp = self._y[perms[s:s + step]]
            sgn_y = np.sign(yp[:, :, None] - yp[:, None, :]).astype(np.int8)
            out[s:s + len(yp)] = np.einsum("ij,bij->b", self._sgn_x, sgn_y, dtype=np.int64)
        return out / (n * (n - 1))


def compute(stat_id, sample, partition=None):
    """Value of statistic ``stat_id`` on ``sample``.

    ``vn`` and ``ln`` use ``partition`` or, when omitted, the default-width
    partition of the sample. ``ln`` takes the occupied cells as its finite
    partition and therefore coincides with ``vn``.
    """
    if stat_id == "tau":
        return kendall_tau(sample)
    return Prepared([stat_id], sample, partition).observed[stat_id]


def batch_values(stat_id, xs, ys, partition=None):
    """Statistic values for a stack of independent samples.

    ``xs``: (m, n) or (m, n, d); ``ys``: (m, n) or (m, n, d'). Histogram
    statistics need a fixed ``partition``. Tie-free univariate samples are
    reduced to their rank pattern and evaluated in one vectorised pass; any
    sample with ties is computed on its own.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim == 2:
        xs = xs[:, :, None]
    if ys.ndim == 2:
        ys = ys[:, :, None]
    m, n = xs.shape[:2]
    info = STATISTICS[stat_id]
    if info.histogram:
        if partition is None:
            raise InvalidInput("batch histogram statistics need a fixed partition")
        _, cx = dense_codes(partition.lattice_x(xs.reshape(m * n, -1)))
        _, cy = dense_codes(partition.lattice_y(ys.reshape(m * n, -1)))
        kx, ky = int(cx.max()) + 1, int(cy.max()) + 1
        return _vn_sums(cx.reshape(m, n), cy.reshape(m, n), kx, ky) / (n * n)
    if xs.shape[2] != 1 or ys.shape[2] != 1:
        raise UnsupportedStatistic(f"{stat_id} is defined for univariate X and Y only")
    x, y = xs[:, :, 0], ys[:, :, 0]
    order = np.argsort(x, axis=1, kind="stable")
    y_by_x = np.take_along_axis(y, order, axis=1)
    pattern = np.argsort(np.argsort(y_by_x, axis=1, kind="stable"), axis=1, kind="stable")
    tied = (np.diff(np.sort(x, axis=1), axis=1) == 0).any(axis=1) | (np.diff(np.sort(y, axis=1), axis=1) == 0).any(axis=1)
    canon = np.arange(n, dtype=float)
    out = Prepared([stat_id], PairedSample(canon, canon)).permuted(pattern)[stat_id]
    for i in np.flatnonzero(tied):
        out[i] = compute(stat_id, PairedSample(x[i], y[i]))
    return out

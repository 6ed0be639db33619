import numpy as np
import pytest
from scipy import stats

from l1indep.errors import InvalidInput
from l1indep.statistics import kendall_tau
from l1indep.synthgen import AlternativeSpec, GeneratorSpec, density, sample, support_box

FAMILIES = [
    AlternativeSpec("independent_uniform"),
    AlternativeSpec("gaussian_copula", 0.5),
    AlternativeSpec("gaussian_copula", -0.8),
    AlternativeSpec("fgm", 0.7),
    AlternativeSpec("fgm", -1.0),
    AlternativeSpec("functional", 0.3),
]


def test_parameter_ranges():
    with pytest.raises(InvalidInput):
        AlternativeSpec("gaussian_copula", 1.0)
    with pytest.raises(InvalidInput):
        AlternativeSpec("fgm", 1.5)
    with pytest.raises(InvalidInput):
        AlternativeSpec("functional", -0.1)
    with pytest.raises(InvalidInput):
        AlternativeSpec("fgm", 0.5, d=2)
    with pytest.raises(InvalidInput):
        AlternativeSpec("clayton", 1.0)


def test_parse():
    assert AlternativeSpec.parse("fgm(0.5)") == AlternativeSpec("fgm", 0.5)
    assert AlternativeSpec.parse("independent_uniform", 2, 3).d_prime == 3
    with pytest.raises(InvalidInput):
        AlternativeSpec.parse("fgm(x)")


def test_independent_uniform_uncorrelated():
    smp = sample(AlternativeSpec(), 100_000, seed=11)
    assert abs(np.corrcoef(smp.x[:, 0], smp.y[:, 0])[0, 1]) < 0.01


def test_gaussian_copula_kendall_identity():
    smp = sample(AlternativeSpec("gaussian_copula", 0.9), 100_000, seed=12)
    assert kendall_tau(smp) == pytest.approx(2 / np.pi * np.arcsin(0.9), abs=0.01)


@pytest.mark.parametrize("alpha", [-1.0, -0.3, 0.0, 0.5, 1.0])
def test_fgm_support(alpha):
    smp = sample(AlternativeSpec("fgm", alpha), 5000, seed=13)
    assert np.all((smp.x >= 0) & (smp.x <= 1))
    assert np.all((smp.y >= 0) & (smp.y <= 1))


def test_determinism():
    a = sample(AlternativeSpec("fgm", 0.4), 50, seed=3)
    b = sample(AlternativeSpec("fgm", 0.4), 50, seed=3)
    c = sample(AlternativeSpec("fgm", 0.4), 50, seed=4)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.x, c.x)


def test_fgm_density_points():
    spec = AlternativeSpec("fgm", 0.5)
    assert density(spec, 0.5, 0.3)[0] == 1.0
    assert density(spec, 0.0, 0.0)[0] == 1.5
    assert density(spec, 1.2, 0.3)[0] == 0.0


def test_gaussian_density_normal_margins():
    rho = 0.6
    spec = GeneratorSpec(AlternativeSpec("gaussian_copula", rho), "normal")
    f, f1, f2 = density(spec, 0.3, -0.7)
    want = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).pdf([0.3, -0.7])
    assert f == pytest.approx(want, rel=1e-12)
    assert f1 == pytest.approx(stats.norm.pdf(0.3), rel=1e-12)


def _cell_probs(spec, edges_x, edges_y, sub=64):
    probs = np.empty((len(edges_x) - 1, len(edges_y) - 1))
    for i in range(len(edges_x) - 1):
        hx = (edges_x[i + 1] - edges_x[i]) / sub
        xs = edges_x[i] + (np.arange(sub) + 0.5) * hx
        for j in range(len(edges_y) - 1):
            hy = (edges_y[j + 1] - edges_y[j]) / sub
            ys = edges_y[j] + (np.arange(sub) + 0.5) * hy
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            probs[i, j] = density(spec, X, Y)[0].sum() * hx * hy
    return probs


@pytest.mark.parametrize("alt", FAMILIES, ids=lambda a: a.id)
def test_density_integrates_to_one(alt):
    (x0, x1), (y0, y1) = support_box(alt)
    m = 1024
    xs = x0 + (np.arange(m) + 0.5) * (x1 - x0) / m
    ys = y0 + (np.arange(m) + 0.5) * (y1 - y0) / m
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    total = density(alt, X, Y)[0].sum() * (x1 - x0) * (y1 - y0) / m**2
    assert total == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("alt", FAMILIES, ids=lambda a: a.id)
def test_sampler_matches_density(alt):
    n = 100_000
    smp = sample(alt, n, seed=99)
    (x0, x1), (y0, y1) = support_box(alt)
    if alt.family == "functional":
        # keep the 8x8 cells on the bulk of Y; the two outer cells absorb the tails
        inner = np.linspace(-0.5, 1.5, 7)
        edges_y = np.concatenate([[y0], inner, [y1]])
    else:
        edges_y = np.linspace(y0, y1, 9)
    edges_x = np.linspace(x0, x1, 9)
    probs = _cell_probs(alt, edges_x, edges_y)
    probs /= probs.sum()
    counts, _, _ = np.histogram2d(smp.x[:, 0], smp.y[:, 0], bins=[edges_x, edges_y])
    expected = n * probs
    chi2 = ((counts - expected) ** 2 / expected).sum()
    pval = stats.chi2.sf(chi2, df=probs.size - 1)
    assert pval > 0.001


def test_multivariate_independent_density():
    spec = AlternativeSpec("independent_uniform", d=2, d_prime=3)
    f, f1, f2 = density(spec, np.full(2, 0.5), np.full(3, 0.2))
    assert (f, f1, f2) == (1.0, 1.0, 1.0)
    smp = sample(spec, 10, seed=1)
    assert smp.x.shape == (10, 2) and smp.y.shape == (10, 3)

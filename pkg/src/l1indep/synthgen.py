"""Built-in bivariate families with samplers and exact density oracles.

All families are stated on the copula scale (uniform marginals on [0, 1])
except ``functional``, where ``X ~ U(0, 1)`` and ``Y = X + sigma * Z``.
A ``normal`` marginal transform maps the copula families to standard normal
margins; the L1 divergence from independence does not change under it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import rng as streams
from .errors import InvalidInput
from .partition import PairedSample

FAMILIES = ("independent_uniform", "gaussian_copula", "fgm", "functional")


@dataclass(frozen=True)
class AlternativeSpec:
    """Family and parameter: ``rho`` for gaussian_copula, ``alpha`` for fgm, ``sigma`` for functional."""

    family: str = "independent_uniform"
    theta: float = 0.0
    d: int = 1
    d_prime: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInput(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        t = float(self.theta)
        object.__setattr__(self, "theta", t)
        if self.family == "gaussian_copula" and not -1 < t < 1:
            raise InvalidInput("gaussian_copula needs rho in (-1, 1)")
        if self.family == "fgm" and not -1 <= t <= 1:
            raise InvalidInput("fgm needs alpha in [-1, 1]")
        if self.family == "functional" and not t >= 0:
            raise InvalidInput("functional needs sigma >= 0")
        if self.family != "independent_uniform" and (self.d, self.d_prime) != (1, 1):
            raise InvalidInput(f"{self.family} is bivariate; only independent_uniform supports d, d' > 1")
        if self.d < 1 or self.d_prime < 1:
            raise InvalidInput("dimensions must be positive")

    @property
    def independent(self):
        return self.family == "independent_uniform" or (self.family in ("gaussian_copula", "fgm") and self.theta == 0)

    @property
    def id(self):
        if self.family == "independent_uniform":
            return f"independent_uniform(d={self.d},d'={self.d_prime})"
        return f"{self.family}({self.theta:g})"

    def to_dict(self):
        return {"family": self.family, "theta": self.theta, "d": self.d, "d_prime": self.d_prime}

    @classmethod
    def parse(cls, text, d=1, d_prime=1):
        """Parse ``family`` or ``family(theta)``, e.g. ``fgm(0.5)``."""
        text = text.strip()
        if "(" in text:
            if not text.endswith(")"):
                raise InvalidInput(f"cannot parse alternative {text!r}")
            name, arg = text[:-1].split("(", 1)
            try:
                theta = float(arg)
            except ValueError:
                raise InvalidInput(f"cannot parse parameter in {text!r}") from None
            return cls(name.strip(), theta, d, d_prime)
        return cls(text, 0.0, d, d_prime)


@dataclass(frozen=True)
class GeneratorSpec:
    alternative: AlternativeSpec = AlternativeSpec()
    marginal: str = "uniform"

    def __post_init__(self):
        if self.marginal not in ("uniform", "normal"):
            raise InvalidInput("marginal must be 'uniform' or 'normal'")
        if self.marginal == "normal" and self.alternative.family == "functional":
            raise InvalidInput("functional family has fixed margins; use marginal='uniform'")

    @property
    def id(self):
        if self.marginal == "uniform":
            return self.alternative.id
        return f"{self.alternative.id}[normal]"

    def to_dict(self):
        return {"alternative": self.alternative.to_dict(), "marginal": self.marginal}


def as_generator(spec):
    if isinstance(spec, GeneratorSpec):
        return spec
    if isinstance(spec, AlternativeSpec):
        return GeneratorSpec(spec)
    raise InvalidInput(f"not a generator spec: {spec!r}")


def _fgm_conditional_inverse(u, w, alpha):
    # C(v | u) = v + a v (1 - v), a = alpha (1 - 2u); solve C = w on [0, 1]
    a = alpha * (1.0 - 2.0 * u)
    disc = np.sqrt(np.maximum((1.0 + a) ** 2 - 4.0 * a * w, 0.0))
    # cancellation-free root ((1+a) - disc) / (2a); also valid at a = 0
    denom = (1.0 + a) + disc
    return np.where(denom > 0, 2.0 * w / np.where(denom > 0, denom, 1.0), 0.0)


def draw(spec, shape, gen):
    """Draw arrays ``x``, ``y`` of shape ``shape + (d,)``, ``shape + (d',)`` with ``gen``."""
    spec = as_generator(spec)
    alt = spec.alternative
    shape = tuple(np.atleast_1d(shape))
    fam, t = alt.family, alt.theta
    if fam == "independent_uniform":
        x = gen.random(shape + (alt.d,))
        y = gen.random(shape + (alt.d_prime,))
    elif fam == "gaussian_copula":
        z1 = gen.standard_normal(shape)
        z2 = t * z1 + np.sqrt(1.0 - t * t) * gen.standard_normal(shape)
        x, y = ndtr(z1)[..., None], ndtr(z2)[..., None]
        if spec.marginal == "normal":
            return z1[..., None], z2[..., None]
    elif fam == "fgm":
        u = gen.random(shape)
        v = _fgm_conditional_inverse(u, gen.random(shape), t)
        x, y = u[..., None], v[..., None]
    else:
        u = gen.random(shape)
        x, y = u[..., None], (u + t * gen.standard_normal(shape))[..., None]
        return x, y
    if spec.marginal == "normal":
        x, y = ndtri(x), ndtri(y)
    return x, y


def sample(spec, n, seed, stream=0):
    """n i.i.d. pairs from ``spec``, fully determined by ``(seed, stream)``."""
    if n < 1:
        raise InvalidInput("n must be at least 1")
    x, y = draw(spec, (n,), streams.stream(seed, streams.SAMPLE, stream))
    return PairedSample(x, y)


def _phi(z):
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def copula_density(alt, u, v):
    """Joint density on the copula scale; marginals are uniform, so f1 = f2 = 1 there."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    inside = (u >= 0) & (u <= 1) & (v >= 0) & (v <= 1)
    fam, t = alt.family, alt.theta
    if fam == "independent_uniform":
        c = np.ones(np.broadcast(u, v).shape)
    elif fam == "fgm":
        c = 1.0 + t * (1.0 - 2.0 * u) * (1.0 - 2.0 * v)
    elif fam == "gaussian_copula":
        with np.errstate(divide="ignore", invalid="ignore"):
            x, y = ndtri(np.clip(u, 0, 1)), ndtri(np.clip(v, 0, 1))
            q = (t * t * (x * x + y * y) - 2.0 * t * x * y) / (2.0 * (1.0 - t * t))
            c = np.exp(-q) / np.sqrt(1.0 - t * t)
        c = np.where(np.isfinite(c), c, 0.0)
    else:
        raise InvalidInput("functional family has no copula-scale density here; use density()")
    return np.where(inside, c, 0.0)


def density(spec, x, y):
    """``(f, f1, f2)`` at the point(s) ``(x, y)``; zero outside the support.

    Only bivariate points are supported, plus the independent uniform family
    in any dimension (pass ``x`` with trailing axis d and ``y`` with d').
    """
    spec = as_generator(spec)
    alt = spec.alternative
    fam, t = alt.family, alt.theta
    if fam == "independent_uniform" and (alt.d > 1 or alt.d_prime > 1):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f1 = np.all((x >= 0) & (x <= 1), axis=-1).astype(float)
        f2 = np.all((y >= 0) & (y <= 1), axis=-1).astype(float)
        return f1 * f2, f1, f2
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if fam == "functional":
        f1 = ((x >= 0) & (x <= 1)).astype(float)
        if t == 0:
            raise InvalidInput("functional(0) is degenerate and has no joint density")
        f = f1 * _phi((y - x) / t) / t
        f2 = ndtr(y / t) - ndtr((y - 1.0) / t)
        return f, f1, f2
    if spec.marginal == "uniform":
        f1 = ((x >= 0) & (x <= 1)).astype(float)
        f2 = ((y >= 0) & (y <= 1)).astype(float)
        return copula_density(alt, x, y), f1, f2
    f1, f2 = _phi(x), _phi(y)
    return copula_density(alt, ndtr(x), ndtr(y)) * f1 * f2, f1, f2


def support_box(spec, tail=8.0):
    """Rectangle carrying the law (up to a negligible tail for unbounded margins)."""
    spec = as_generator(spec)
    alt = spec.alternative
    if alt.family == "functional":
        return (0.0, 1.0), (-tail * alt.theta, 1.0 + tail * alt.theta)
    if spec.marginal == "normal":
        return (-tail, tail), (-tail, tail)
    return (0.0, 1.0), (0.0, 1.0)

"""
Noise and input processes
=========================

White random processes used as filter inputs and measurement noise, the
two-component outlier mixture ``v = (1 - a) A + a B`` with ``a ~ Bernoulli(c)``,
and reproducible random streams.

Streams are keyed by ``(seed, stream, *subkeys)`` through
:class:`numpy.random.SeedSequence` and drive a PCG64 bit generator, so each
Monte Carlo run (stream) and each signal inside it (subkey) gets its own
independent, replayable sequence regardless of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConfigError, ParameterDomainError

GENERATOR_IDENTITY = f"numpy.random.PCG64 seeded by SeedSequence(seed, spawn_key=(stream, signal, component)); numpy {np.__version__}"


@dataclass(frozen=True)
class RngSpec:
    """Seed plus stream id; one stream per Monte Carlo run."""

    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ParameterDomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if int(self.stream) < 0:
            raise ParameterDomainError(f"stream id must be non-negative, got {self.stream!r}")

    def generator(self, *subkeys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), *map(int, subkeys)))
        return np.random.Generator(np.random.PCG64(ss))


def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ParameterDomainError(f"{name} must be positive and finite, got {value!r}")
    return value


class NoiseDensity:
    """Base class for the scalar white-noise laws.

    Subclasses provide ``draw(gen, n)``, ``pdf(v)`` (continuous laws),
    ``mean``/``variance`` and a ``to_dict`` round trip.
    """

    kind: str = ""
    discrete = False

    def sampler(self, rng: RngSpec, *key: int) -> Callable[[int], np.ndarray]:
        gen = rng.generator(*key, 0)
        return lambda n: self.draw(gen, n)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def scale(self) -> float:
        """Characteristic width used to size quadrature windows."""
        return self.std

    @property
    def mean(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(NoiseDensity):
    variance: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "variance", _positive("variance", self.variance))

    def draw(self, gen, n):
        return self.std * gen.standard_normal(n)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(-v * v / (2 * self.variance)) / math.sqrt(2 * math.pi * self.variance)

    def to_dict(self):
        return {"kind": self.kind, "variance": self.variance}


@dataclass(frozen=True)
class Binary(NoiseDensity):
    """``+amplitude`` or ``-amplitude`` with probability 1/2 each."""

    amplitude: float = 1.0
    kind = "binary"
    discrete = True

    def __post_init__(self):
        object.__setattr__(self, "amplitude", _positive("amplitude", self.amplitude))

    @property
    def variance(self):
        return self.amplitude ** 2

    @property
    def atoms(self):
        return np.array([-self.amplitude, self.amplitude]), np.array([0.5, 0.5])

    def draw(self, gen, n):
        return self.amplitude * (2.0 * gen.integers(0, 2, size=n) - 1.0)

    def to_dict(self):
        return {"kind": self.kind, "amplitude": self.amplitude}


@dataclass(frozen=True)
class Uniform(NoiseDensity):
    """Uniform on ``[-half_width, half_width]``."""

    half_width: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "half_width", _positive("half_width", self.half_width))

    @property
    def variance(self):
        return self.half_width ** 2 / 3.0

    def draw(self, gen, n):
        return gen.uniform(-self.half_width, self.half_width, size=n)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(np.abs(v) <= self.half_width, 0.5 / self.half_width, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "half_width": self.half_width}


@dataclass(frozen=True)
class Laplace(NoiseDensity):
    """Zero-mean Laplace law parameterised by its variance."""

    variance: float = 1.0
    kind = "laplace"

    def __post_init__(self):
        object.__setattr__(self, "variance", _positive("variance", self.variance))

    @property
    def b(self):
        return math.sqrt(self.variance / 2.0)

    def draw(self, gen, n):
        return gen.laplace(0.0, self.b, size=n)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(-np.abs(v) / self.b) / (2.0 * self.b)

    def to_dict(self):
        return {"kind": self.kind, "variance": self.variance}


@dataclass(frozen=True)
class Cauchy(NoiseDensity):
    """``p(v) = 1 / (pi * scale * (1 + (v/scale)**2))``; no finite moments."""

    scale: float = 1.0
    kind = "cauchy"

    def __post_init__(self):
        object.__setattr__(self, "scale", _positive("scale", self.scale))

    @property
    def variance(self):
        return math.inf

    def draw(self, gen, n):
        # inverse CDF; u in [0, 1) so tan never sees exactly pi/2
        u = gen.random(n)
        return self.scale * np.tan(math.pi * (u - 0.5))

    def pdf(self, v):
        z = np.asarray(v, dtype=float) / self.scale
        return 1.0 / (math.pi * self.scale * (1.0 + z * z))

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True)
class SineWave(NoiseDensity):
    """``amplitude * sin(omega)`` with ``omega`` uniform on ``[0, 2 pi)``."""

    amplitude: float = 1.0
    kind = "sine"

    def __post_init__(self):
        object.__setattr__(self, "amplitude", _positive("amplitude", self.amplitude))

    @property
    def variance(self):
        return self.amplitude ** 2 / 2.0

    def draw(self, gen, n):
        return self.amplitude * np.sin(gen.uniform(0.0, 2.0 * math.pi, size=n))

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        a = self.amplitude
        inside = np.abs(v) < a
        return np.where(inside, 1.0 / (math.pi * np.sqrt(np.where(inside, a * a - v * v, 1.0))), 0.0)

    def to_dict(self):
        return {"kind": self.kind, "amplitude": self.amplitude}


@dataclass(frozen=True)
class MixtureOutliers(NoiseDensity):
    """``v = (1 - a) A + a B`` with ``P(a = 1) = c``; ``A``, ``B``, ``a`` independent."""

    c: float
    inner: NoiseDensity
    outlier: NoiseDensity
    kind = "mixture"

    def __post_init__(self):
        c = float(self.c)
        if not 0.0 <= c <= 1.0:
            raise ParameterDomainError(f"outlier probability c must lie in [0, 1], got {c!r}")
        object.__setattr__(self, "c", c)
        if isinstance(self.inner, MixtureOutliers) or isinstance(self.outlier, MixtureOutliers):
            raise ParameterDomainError("nested mixtures are not supported")

    @property
    def discrete(self):
        return self.inner.discrete and self.outlier.discrete

    @property
    def variance(self):
        return (1 - self.c) * self.inner.variance + self.c * self.outlier.variance

    @property
    def scale(self):
        return min(self.inner.scale, self.outlier.scale)

    def sampler(self, rng, *key):
        # component streams are fixed so that c = 0 reproduces the pure inner draw
        draw_a = self.inner.sampler(rng, *key)
        gen_b = rng.generator(*key, 1)
        gen_sw = rng.generator(*key, 2)

        def draw(n):
            a = draw_a(n)
            b = self.outlier.draw(gen_b, n)
            switch = gen_sw.random(n) < self.c
            return np.where(switch, b, a)

        return draw

    def pdf(self, v):
        return (1 - self.c) * self.inner.pdf(v) + self.c * self.outlier.pdf(v)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "inner": self.inner.to_dict(), "outlier": self.outlier.to_dict()}


_KINDS = {
    "gaussian": (Gaussian, {"variance": "variance"}),
    "binary": (Binary, {"amplitude": "amplitude"}),
    "uniform": (Uniform, {"half_width": "half_width"}),
    "laplace": (Laplace, {"variance": "variance"}),
    "cauchy": (Cauchy, {"scale": "scale"}),
    "sine": (SineWave, {"amplitude": "amplitude"}),
}


def noise_from_dict(spec: dict) -> NoiseDensity:
    """Build a noise law from its JSON form, rejecting unknown keys."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"noise specification must be an object with a 'kind' field, got {spec!r}")
    kind = spec["kind"]
    rest = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "mixture":
        unknown = set(rest) - {"c", "inner", "outlier"}
        if unknown or not {"c", "inner", "outlier"} <= set(rest):
            raise ConfigError(f"mixture needs exactly c, inner, outlier; got {sorted(rest)}")
        inner, outlier = noise_from_dict(rest["inner"]), noise_from_dict(rest["outlier"])
        try:
            return MixtureOutliers(rest["c"], inner, outlier)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid mixture parameters: {exc}") from exc
    if kind not in _KINDS:
        raise ConfigError(f"unknown noise kind {kind!r}; known: {sorted(_KINDS) + ['mixture']}")
    cls, fields = _KINDS[kind]
    unknown = set(rest) - set(fields)
    if unknown:
        raise ConfigError(f"unknown field(s) for {kind} noise: {sorted(unknown)}")
    try:
        return cls(**{fields[k]: v for k, v in rest.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} noise parameters: {exc}") from exc


def sample_noise(model: NoiseDensity, n: int, rng: RngSpec) -> np.ndarray:
    """Draw ``n`` i.i.d. samples of ``model`` from the stream ``rng``."""
    if n < 0:
        raise ParameterDomainError(f"sample count must be non-negative, got {n}")
    return model.sampler(rng)(int(n))
